//! Graph convolution with layer-wise highway gates.

use std::sync::Arc;

use crate::error::{AlignError, Result};
use crate::params::{BoundParams, ParameterStore};
use crate::sparse::CsrMatrix;
use crate::tape::{Tape, Var};

pub fn gate_weight(layer: usize) -> String {
    format!("highway.{layer}.weight")
}

pub fn gate_bias(layer: usize) -> String {
    format!("highway.{layer}.bias")
}

pub fn register(store: &mut ParameterStore, depth: usize, entity_dim: usize, seed: u64) {
    for l in 0..depth {
        store.insert_glorot(&gate_weight(l), entity_dim, entity_dim, seed);
        store.insert_zeros(&gate_bias(l), 1, entity_dim);
    }
}

/// `ReLU(Â · X)`
pub fn gcn_layer(tape: &mut Tape, x: Var, norm_adj: &Arc<CsrMatrix>) -> Result<Var> {
    let (rows, _) = tape.shape(x);
    if norm_adj.n_cols() != rows || norm_adj.n_rows() != rows {
        return Err(AlignError::Shape {
            op: "gcn_layer",
            detail: format!(
                "adjacency is {}×{} but features have {rows} rows",
                norm_adj.n_rows(),
                norm_adj.n_cols()
            ),
        });
    }
    let propagated = tape.spmm(Arc::clone(norm_adj), x);
    Ok(tape.relu(propagated))
}

/// `T ⊙ X_gcn + (1 − T) ⊙ X_in` with `T = sigmoid(X_in·W + b)`.
pub fn highway(tape: &mut Tape, x_in: Var, x_gcn: Var, weight: Var, bias: Var) -> Result<Var> {
    let (n, d) = tape.shape(x_in);
    if tape.shape(x_gcn) != (n, d) || tape.shape(weight) != (d, d) || tape.shape(bias) != (1, d) {
        return Err(AlignError::Shape {
            op: "highway",
            detail: format!(
                "inputs {:?}/{:?}, gate {:?}/{:?}",
                (n, d),
                tape.shape(x_gcn),
                tape.shape(weight),
                tape.shape(bias)
            ),
        });
    }
    let lin = tape.matmul(x_in, weight);
    let pre = tape.add_row(lin, bias);
    let gate = tape.sigmoid(pre);
    let carry = tape.one_minus(gate);
    let through = tape.mul(gate, x_gcn);
    let kept = tape.mul(carry, x_in);
    Ok(tape.add(through, kept))
}

/// Applies `depth` rounds of [`gcn_layer`] followed by [`highway`].
pub fn encode_topology(
    tape: &mut Tape,
    x0: Var,
    norm_adj: &Arc<CsrMatrix>,
    depth: usize,
    params: &BoundParams,
) -> Result<Var> {
    if depth == 0 {
        return Err(AlignError::Config("encoder depth must be at least 1".into()));
    }
    let mut x = x0;
    for l in 0..depth {
        let conv = gcn_layer(tape, x, norm_adj)?;
        x = highway(tape, x, conv, params.var(&gate_weight(l)), params.var(&gate_bias(l)))?;
    }
    Ok(x)
}
