//! Per-triple semantic representations.
//!
//! Each expanded triple `(i, r, j)` gets a latent relation vector from its
//! two entities, three role-wise interaction attentions normalized over the
//! triples sharing relation `r`, and a global feature built from the mean
//! head/tail concatenation of that relation.

use std::sync::Arc;

use crate::kg::{ExpandedGraph, Triple};
use crate::params::{BoundParams, ParameterStore};
use crate::tape::{Tape, Var};

/// Negative slope of every LeakyReLU applied to attention scores.
pub const LEAKY_SLOPE: f64 = 0.2;

pub const W_SR: &str = "latent.w_sr";
pub const B_SR: &str = "latent.b_sr";
pub const W_RG: &str = "global.w_rg";
pub const B_RG: &str = "global.b_rg";
pub const W_SP: &str = "global.w_sp";
pub const B_SP: &str = "global.b_sp";

/// Column-oriented view of the expanded triples plus the grouping used by
/// every attention in the encoder and decoder.
#[derive(Debug, Clone)]
pub struct TripleIndex {
    pub heads: Arc<[usize]>,
    pub relations: Arc<[usize]>,
    pub tails: Arc<[usize]>,
    n_entities: usize,
    n_relations: usize,
    /// `1/|T_r|` per relation, 0 for empty relations.
    inv_group_size: Arc<[f64]>,
}

impl TripleIndex {
    pub fn new(triples: &[Triple], n_entities: usize, n_relations: usize) -> Self {
        let heads: Arc<[usize]> = triples.iter().map(|t| t.head).collect();
        let relations: Arc<[usize]> = triples.iter().map(|t| t.relation).collect();
        let tails: Arc<[usize]> = triples.iter().map(|t| t.tail).collect();
        let mut counts = vec![0usize; n_relations];
        for &r in relations.iter() {
            counts[r] += 1;
        }
        let inv_group_size = counts
            .iter()
            .map(|&c| if c == 0 { 0.0 } else { 1.0 / c as f64 })
            .collect();
        TripleIndex {
            heads,
            relations,
            tails,
            n_entities,
            n_relations,
            inv_group_size,
        }
    }

    pub fn from_graph(graph: &ExpandedGraph) -> Self {
        Self::new(graph.triples(), graph.entity_count(), graph.relation_count())
    }

    pub fn len(&self) -> usize {
        self.heads.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heads.is_empty()
    }

    pub fn n_entities(&self) -> usize {
        self.n_entities
    }

    pub fn n_relations(&self) -> usize {
        self.n_relations
    }

    /// Triple positions of relation `r`, in index order.
    pub fn group(&self, r: usize) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.relations[i] == r).collect()
    }

    /// Mean over each relation group of the per-triple rows of `x`,
    /// `m×c → R×c`.
    pub fn group_mean(&self, tape: &mut Tape, x: Var) -> Var {
        let summed = tape.scatter_add(x, Arc::clone(&self.relations), self.n_relations);
        tape.scale_rows_const(summed, Arc::clone(&self.inv_group_size))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TripleRole {
    Head,
    Relation,
    Tail,
}

impl TripleRole {
    pub const ALL: [TripleRole; 3] = [TripleRole::Head, TripleRole::Relation, TripleRole::Tail];

    fn key(self) -> &'static str {
        match self {
            TripleRole::Head => "head",
            TripleRole::Relation => "relation",
            TripleRole::Tail => "tail",
        }
    }

    /// Projection of the attended element.
    pub fn weight(self) -> String {
        format!("interact.{}.w", self.key())
    }

    /// Projection of the concatenated other two elements.
    pub fn context_weight(self) -> String {
        format!("interact.{}.w_ctx", self.key())
    }

    pub fn attention(self) -> String {
        format!("interact.{}.a", self.key())
    }
}

pub fn register(store: &mut ParameterStore, d_e: usize, d_r: usize, seed: u64) {
    store.insert_glorot(W_SR, 2 * d_e, d_r, seed);
    store.insert_zeros(B_SR, 1, d_r);
    for role in TripleRole::ALL {
        let (elem_dim, ctx_dim) = match role {
            TripleRole::Head | TripleRole::Tail => (d_e, d_r + d_e),
            TripleRole::Relation => (d_r, 2 * d_e),
        };
        store.insert_glorot(&role.weight(), elem_dim, d_r, seed);
        store.insert_glorot(&role.context_weight(), ctx_dim, d_r, seed);
        store.insert_glorot(&role.attention(), 2 * d_r, 1, seed);
    }
    store.insert_glorot(W_RG, 2 * d_e, d_r, seed);
    store.insert_zeros(B_RG, 1, d_r);
    store.insert_glorot(W_SP, 2 * d_e + d_r, d_r, seed);
    store.insert_zeros(B_SP, 1, d_r);
}

/// `ReLU(x·W + b)`
pub fn dense_relu(tape: &mut Tape, x: Var, w: Var, b: Var) -> Var {
    let lin = tape.matmul(x, w);
    let pre = tape.add_row(lin, b);
    tape.relu(pre)
}

/// Head and tail rows of `x` for every triple.
pub fn endpoints(tape: &mut Tape, index: &TripleIndex, x: Var) -> (Var, Var) {
    let h = tape.gather(x, Arc::clone(&index.heads));
    let t = tape.gather(x, Arc::clone(&index.tails));
    (h, t)
}

/// `ReLU((X_i ‖ X_j)·W_sr + b_sr)` per triple.
pub fn latent_relation(tape: &mut Tape, x_head: Var, x_tail: Var, params: &BoundParams) -> Var {
    let pair = tape.concat(&[x_head, x_tail]);
    dense_relu(tape, pair, params.var(W_SR), params.var(B_SR))
}

pub struct AttentionOutput {
    /// One row per triple (or per entity, for decoder stages).
    pub output: Var,
    /// `m×1` attention weights.
    pub weights: Var,
}

/// Role-wise interaction attention. The attended element is projected with
/// the role weight, the ordered concatenation of the other two with the
/// context weight; scores are softmax-normalized within each relation group.
pub fn interaction_attention(
    tape: &mut Tape,
    role: TripleRole,
    index: &TripleIndex,
    x_head: Var,
    x_tail: Var,
    latent: Var,
    params: &BoundParams,
) -> AttentionOutput {
    let (elem, context) = match role {
        TripleRole::Head => (x_head, tape.concat(&[latent, x_tail])),
        TripleRole::Relation => (latent, tape.concat(&[x_head, x_tail])),
        TripleRole::Tail => (x_tail, tape.concat(&[x_head, latent])),
    };
    let projected = tape.matmul(elem, params.var(&role.weight()));
    let ctx = tape.matmul(context, params.var(&role.context_weight()));
    let joined = tape.concat(&[projected, ctx]);
    let raw = tape.matmul(joined, params.var(&role.attention()));
    let scores = tape.leaky_relu(raw, LEAKY_SLOPE);
    let weights = tape.segment_softmax(scores, Arc::clone(&index.relations));
    let weighted = tape.mul_column(projected, weights);
    let output = tape.relu(weighted);
    AttentionOutput { output, weights }
}

pub struct GlobalFeature {
    /// `R×d_r`, one row per expanded relation.
    pub per_relation: Var,
    /// `m×d_r`
    pub per_triple: Var,
}

/// Relation-level mean of `(X_i ‖ X_j)` mapped to `d_r`, then the per-triple
/// global representation `ReLU((X_i ‖ X^r_g ‖ X_j)·W_sp + b_sp)`.
pub fn global_relation_feature(
    tape: &mut Tape,
    index: &TripleIndex,
    x_head: Var,
    x_tail: Var,
    params: &BoundParams,
) -> GlobalFeature {
    let pair = tape.concat(&[x_head, x_tail]);
    let mean = index.group_mean(tape, pair);
    let lin = tape.matmul(mean, params.var(W_RG));
    let per_relation = tape.add_row(lin, params.var(B_RG));
    let broadcast = tape.gather(per_relation, Arc::clone(&index.relations));
    let joined = tape.concat(&[x_head, broadcast, x_tail]);
    let per_triple = dense_relu(tape, joined, params.var(W_SP), params.var(B_SP));
    GlobalFeature {
        per_relation,
        per_triple,
    }
}

pub struct SemanticTriples {
    pub latent: Var,
    pub head: AttentionOutput,
    pub relation: AttentionOutput,
    pub tail: AttentionOutput,
    pub correlation: Var,
    pub global: Option<GlobalFeature>,
    /// `S = S_c + S_g`, or `S_c` alone when the global feature is disabled.
    pub ensemble: Var,
}

pub fn semantic_triples(
    tape: &mut Tape,
    index: &TripleIndex,
    x: Var,
    params: &BoundParams,
    with_global: bool,
) -> SemanticTriples {
    let (x_head, x_tail) = endpoints(tape, index, x);
    let latent = latent_relation(tape, x_head, x_tail, params);
    let head = interaction_attention(tape, TripleRole::Head, index, x_head, x_tail, latent, params);
    let relation = interaction_attention(tape, TripleRole::Relation, index, x_head, x_tail, latent, params);
    let tail = interaction_attention(tape, TripleRole::Tail, index, x_head, x_tail, latent, params);
    let partial = tape.add(head.output, relation.output);
    let correlation = tape.add(partial, tail.output);
    let (global, ensemble) = if with_global {
        let g = global_relation_feature(tape, index, x_head, x_tail, params);
        let s = tape.add(correlation, g.per_triple);
        (Some(g), s)
    } else {
        (None, correlation)
    };
    SemanticTriples {
        latent,
        head,
        relation,
        tail,
        correlation,
        global,
        ensemble,
    }
}
