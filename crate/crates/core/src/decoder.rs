//! Role-aware decoding of ensemble triples back to entities, followed by a
//! single graph-attention layer over the expanded adjacency.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::AlignError;
use crate::params::{BoundParams, ParameterStore};
use crate::sparse::CsrMatrix;
use crate::tape::{Tape, Var};
use crate::triple::{TripleIndex, LEAKY_SLOPE};

pub const GAT_W: &str = "gat.w";
pub const GAT_A: &str = "gat.a";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EntityRole {
    Head,
    Tail,
}

impl EntityRole {
    pub fn weight(self) -> &'static str {
        match self {
            EntityRole::Head => "decoder.head.w",
            EntityRole::Tail => "decoder.tail.w",
        }
    }

    pub fn attention(self) -> &'static str {
        match self {
            EntityRole::Head => "decoder.head.a",
            EntityRole::Tail => "decoder.tail.a",
        }
    }
}

/// Order of head/tail decoder stages.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum CycleMode {
    /// head, tail
    Mode1,
    /// head, tail, head
    Mode2,
    /// head, tail, head, tail
    Mode3,
}

impl CycleMode {
    pub fn stages(self) -> &'static [EntityRole] {
        use EntityRole::{Head, Tail};
        match self {
            CycleMode::Mode1 => &[Head, Tail],
            CycleMode::Mode2 => &[Head, Tail, Head],
            CycleMode::Mode3 => &[Head, Tail, Head, Tail],
        }
    }

    pub fn number(self) -> u8 {
        match self {
            CycleMode::Mode1 => 1,
            CycleMode::Mode2 => 2,
            CycleMode::Mode3 => 3,
        }
    }
}

impl TryFrom<u8> for CycleMode {
    type Error = AlignError;

    fn try_from(v: u8) -> Result<Self, Self::Error> {
        match v {
            1 => Ok(CycleMode::Mode1),
            2 => Ok(CycleMode::Mode2),
            3 => Ok(CycleMode::Mode3),
            other => Err(AlignError::Config(format!(
                "unknown cycle mode {other}; expected 1, 2 or 3"
            ))),
        }
    }
}

impl From<CycleMode> for u8 {
    fn from(m: CycleMode) -> u8 {
        m.number()
    }
}

impl FromStr for CycleMode {
    type Err = AlignError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let n: u8 = s
            .trim()
            .trim_start_matches("mode")
            .parse()
            .map_err(|_| AlignError::Config(format!("unknown cycle mode {s:?}")))?;
        CycleMode::try_from(n)
    }
}

impl fmt::Display for CycleMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "mode{}", self.number())
    }
}

pub fn register(store: &mut ParameterStore, d_e: usize, triple_dim: usize, seed: u64) {
    for role in [EntityRole::Head, EntityRole::Tail] {
        store.insert_glorot(role.weight(), triple_dim, d_e, seed);
        store.insert_glorot(role.attention(), 2 * d_e, 1, seed);
    }
    store.insert_glorot(GAT_W, d_e, d_e, seed);
    store.insert_glorot(GAT_A, 2 * d_e, 1, seed);
}

/// One decoder stage. Every entity attends over the triples in which it plays
/// `role`; entities with no such triple pass through unchanged.
///
/// `X_e ← X_e + ReLU(Σ α · T·W)` with `α = softmax(LeakyReLU(aᵀ(T·W ‖ X_e)))`.
pub fn role_attention(
    tape: &mut Tape,
    role: EntityRole,
    ensemble: Var,
    x: Var,
    index: &TripleIndex,
    params: &BoundParams,
) -> crate::triple::AttentionOutput {
    let owner = match role {
        EntityRole::Head => Arc::clone(&index.heads),
        EntityRole::Tail => Arc::clone(&index.tails),
    };
    let projected = tape.matmul(ensemble, params.var(role.weight()));
    let x_owner = tape.gather(x, owner.clone());
    let joined = tape.concat(&[projected, x_owner]);
    let raw = tape.matmul(joined, params.var(role.attention()));
    let scores = tape.leaky_relu(raw, LEAKY_SLOPE);
    let weights = tape.segment_softmax(scores, owner.clone());
    let weighted = tape.mul_column(projected, weights);
    let summed = tape.scatter_add(weighted, owner, index.n_entities());
    let update = tape.relu(summed);
    let output = tape.add(x, update);
    crate::triple::AttentionOutput { output, weights }
}

/// Runs the stages of `mode` in order, each consuming the previous output.
/// Returns the output of every stage.
pub fn cycle_co_enhance(
    tape: &mut Tape,
    ensemble: Var,
    x: Var,
    index: &TripleIndex,
    mode: CycleMode,
    params: &BoundParams,
) -> Vec<crate::triple::AttentionOutput> {
    let mut current = x;
    let mut stages = Vec::with_capacity(mode.stages().len());
    for &role in mode.stages() {
        let out = role_attention(tape, role, ensemble, current, index, params);
        current = out.output;
        stages.push(out);
    }
    stages
}

/// Directed edge list `(i, j)` of an adjacency pattern, grouped by `i`.
#[derive(Debug, Clone)]
pub struct NeighborIndex {
    pub centers: Arc<[usize]>,
    pub neighbors: Arc<[usize]>,
    n: usize,
}

impl NeighborIndex {
    pub fn from_adjacency(adj: &CsrMatrix) -> Self {
        let mut centers = Vec::with_capacity(adj.nnz());
        let mut neighbors = Vec::with_capacity(adj.nnz());
        for i in 0..adj.n_rows() {
            for (j, _) in adj.row(i) {
                centers.push(i);
                neighbors.push(j);
            }
        }
        NeighborIndex {
            centers: centers.into(),
            neighbors: neighbors.into(),
            n: adj.n_rows(),
        }
    }

    pub fn n_nodes(&self) -> usize {
        self.n
    }
}

/// Single-head graph attention with a residual connection:
/// `x_i + ReLU(Σ_j α_ij W·x_j)`, `α_ij = softmax_j(LeakyReLU(aᵀ(W·x_i ‖ W·x_j)))`.
pub fn neighbor_reaggregate(
    tape: &mut Tape,
    x: Var,
    neighbors: &NeighborIndex,
    params: &BoundParams,
) -> crate::triple::AttentionOutput {
    let h = tape.matmul(x, params.var(GAT_W));
    let h_center = tape.gather(h, Arc::clone(&neighbors.centers));
    let h_neighbor = tape.gather(h, Arc::clone(&neighbors.neighbors));
    let joined = tape.concat(&[h_center, h_neighbor]);
    let raw = tape.matmul(joined, params.var(GAT_A));
    let scores = tape.leaky_relu(raw, LEAKY_SLOPE);
    let weights = tape.segment_softmax(scores, Arc::clone(&neighbors.centers));
    let weighted = tape.mul_column(h_neighbor, weights);
    let summed = tape.scatter_add(weighted, Arc::clone(&neighbors.centers), neighbors.n_nodes());
    let update = tape.relu(summed);
    let output = tape.add(x, update);
    crate::triple::AttentionOutput { output, weights }
}
