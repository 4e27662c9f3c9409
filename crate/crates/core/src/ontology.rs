//! Latent ontology space, ontology-pair triples and semantic/ontology
//! co-attention.

use std::sync::Arc;

use crate::params::{BoundParams, ParameterStore};
use crate::tape::{Tape, Var};
use crate::triple::{dense_relu, endpoints, TripleIndex, LEAKY_SLOPE};

pub const W_S2O: &str = "onto.w_s2o";
pub const B_S2O: &str = "onto.b_s2o";
pub const W_ORG: &str = "onto.w_rg";
pub const B_ORG: &str = "onto.b_rg";
pub const W_OT: &str = "onto.w_t";
pub const B_OT: &str = "onto.b_t";
/// Scores `(S ‖ O)`, weights `S`.
pub const A_SEM: &str = "coattn.a_so";
/// Scores `(O ‖ S)`, weights `O`.
pub const A_ONT: &str = "coattn.a_os";

/// Every parameter that only the ontology path reads.
pub const PARAMETERS: [&str; 8] = [W_S2O, B_S2O, W_ORG, B_ORG, W_OT, B_OT, A_SEM, A_ONT];

pub fn register(store: &mut ParameterStore, d_e: usize, d_r: usize, d_o: usize, seed: u64) {
    store.insert_glorot(W_S2O, d_e, d_o, seed);
    store.insert_zeros(B_S2O, 1, d_o);
    store.insert_glorot(W_ORG, 2 * d_o, d_r, seed);
    store.insert_zeros(B_ORG, 1, d_r);
    store.insert_glorot(W_OT, 2 * d_o + d_r, d_r, seed);
    store.insert_zeros(B_OT, 1, d_r);
    store.insert_glorot(A_SEM, 2 * d_r, 1, seed);
    store.insert_glorot(A_ONT, 2 * d_r, 1, seed);
}

/// `tanh(X·W_s2o + b_s2o)`, `n×d_e → n×d_o`.
pub fn to_ontology_space(tape: &mut Tape, x: Var, params: &BoundParams) -> Var {
    let lin = tape.matmul(x, params.var(W_S2O));
    let pre = tape.add_row(lin, params.var(B_S2O));
    tape.tanh(pre)
}

pub struct OntologyRelation {
    /// `R×2d_o` mean ontology pair per relation.
    pub pair_mean: Var,
    /// `R×d_r`
    pub projected: Var,
}

pub fn ontology_relation(tape: &mut Tape, index: &TripleIndex, x_onto: Var, params: &BoundParams) -> OntologyRelation {
    let (h, t) = endpoints(tape, index, x_onto);
    let pair = tape.concat(&[h, t]);
    let pair_mean = index.group_mean(tape, pair);
    let lin = tape.matmul(pair_mean, params.var(W_ORG));
    let projected = tape.add_row(lin, params.var(B_ORG));
    OntologyRelation { pair_mean, projected }
}

/// `ReLU((X^o_i ‖ X^or_r ‖ X^o_j)·W^o_t + b^o_t)` per triple.
pub fn ontology_triple(
    tape: &mut Tape,
    index: &TripleIndex,
    x_onto: Var,
    relation_proj: Var,
    params: &BoundParams,
) -> Var {
    let (h, t) = endpoints(tape, index, x_onto);
    let rel = tape.gather(relation_proj, Arc::clone(&index.relations));
    let joined = tape.concat(&[h, rel, t]);
    dense_relu(tape, joined, params.var(W_OT), params.var(B_OT))
}

pub struct CoAttention {
    /// `Ō_r = ReLU(Σ α·S)`, `R×d_r`.
    pub onto_enhanced: Var,
    /// `S̄_r = ReLU(Σ β·O)`, `R×d_r`.
    pub sem_enhanced: Var,
    pub onto_weights: Var,
    pub sem_weights: Var,
}

fn grouped_attention(tape: &mut Tape, index: &TripleIndex, first: Var, second: Var, attention: Var) -> (Var, Var) {
    let joined = tape.concat(&[first, second]);
    let raw = tape.matmul(joined, attention);
    let scores = tape.leaky_relu(raw, LEAKY_SLOPE);
    let weights = tape.segment_softmax(scores, Arc::clone(&index.relations));
    let weighted = tape.mul_column(first, weights);
    let summed = tape.scatter_add(weighted, Arc::clone(&index.relations), index.n_relations());
    (tape.relu(summed), weights)
}

pub fn modal_co_attention(
    tape: &mut Tape,
    index: &TripleIndex,
    semantic: Var,
    onto: Var,
    params: &BoundParams,
) -> CoAttention {
    let (onto_enhanced, onto_weights) = grouped_attention(tape, index, semantic, onto, params.var(A_SEM));
    let (sem_enhanced, sem_weights) = grouped_attention(tape, index, onto, semantic, params.var(A_ONT));
    CoAttention {
        onto_enhanced,
        sem_enhanced,
        onto_weights,
        sem_weights,
    }
}

/// `(S + S̄_r + Ō_r + O) ‖ X^or_g`, `m×(d_r + 2d_o)`.
pub fn ensemble_triple(
    tape: &mut Tape,
    index: &TripleIndex,
    semantic: Var,
    co: &CoAttention,
    onto_triple: Var,
    pair_mean: Var,
) -> Var {
    let rel = Arc::clone(&index.relations);
    let s_bar = tape.gather(co.sem_enhanced, rel.clone());
    let o_bar = tape.gather(co.onto_enhanced, rel.clone());
    let pair = tape.gather(pair_mean, rel);
    let a = tape.add(semantic, s_bar);
    let b = tape.add(a, o_bar);
    let fused = tape.add(b, onto_triple);
    tape.concat(&[fused, pair])
}

pub struct TripleEnsemble {
    pub onto: Option<OntologyStages>,
    /// `m×(d_r + 2d_o)`
    pub ensemble: Var,
}

pub struct OntologyStages {
    pub x_onto: Var,
    pub relation: OntologyRelation,
    pub triple: Var,
    pub co: CoAttention,
}

/// Runs the ontology path, or, with it disabled, pads `S` with a zero block
/// of width `2d_o` so downstream shapes stay fixed.
pub fn fuse(
    tape: &mut Tape,
    index: &TripleIndex,
    x: Var,
    semantic: Var,
    params: &BoundParams,
    onto_dim: usize,
    enabled: bool,
) -> TripleEnsemble {
    if !enabled {
        let pad = tape.zeros(index.len(), 2 * onto_dim);
        let ensemble = tape.concat(&[semantic, pad]);
        return TripleEnsemble { onto: None, ensemble };
    }
    let x_onto = to_ontology_space(tape, x, params);
    let relation = ontology_relation(tape, index, x_onto, params);
    let triple = ontology_triple(tape, index, x_onto, relation.projected, params);
    let co = modal_co_attention(tape, index, semantic, triple, params);
    let ensemble = ensemble_triple(tape, index, semantic, &co, triple, relation.pair_mean);
    TripleEnsemble {
        onto: Some(OntologyStages {
            x_onto,
            relation,
            triple,
            co,
        }),
        ensemble,
    }
}
