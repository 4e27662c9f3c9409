//! A small reverse-mode autodiff tape over dense `f64` matrices.
//!
//! Every value is a 2-D array; vectors are `1×d` rows or `d×1` columns.
//! Nodes are appended in evaluation order, so a reverse sweep over the node
//! list visits each node after all of its consumers.

use std::sync::Arc;

use ndarray::{Array2, Axis, Zip};

use crate::sparse::CsrMatrix;

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

enum Op {
    Leaf,
    MatMul(Var, Var),
    SpMM(Arc<CsrMatrix>, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddRow(Var, Var),
    AddScalar(Var),
    Scale(Var, f64),
    OneMinus(Var),
    Relu(Var),
    LeakyRelu(Var, f64),
    Sigmoid(Var),
    Tanh(Var),
    Concat(Vec<Var>),
    Gather(Var, Arc<[usize]>),
    ScatterAdd(Var, Arc<[usize]>),
    MulColumn(Var, Var),
    ScaleRowsConst(Var, Arc<[f64]>),
    SegmentSoftmax(Var, Arc<[usize]>),
    L1Rows(Var, Var),
    Sum(Var),
}

struct Node {
    value: Array2<f64>,
    op: Op,
}

#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradients produced by [`Tape::backward`], indexed by [`Var`].
pub struct Gradients {
    grads: Vec<Option<Array2<f64>>>,
}

impl Gradients {
    pub fn get(&self, var: Var) -> Option<&Array2<f64>> {
        self.grads.get(var.0).and_then(Option::as_ref)
    }

    pub fn get_mut(&mut self, var: Var) -> Option<&mut Array2<f64>> {
        self.grads.get_mut(var.0).and_then(Option::as_mut)
    }

    pub fn take(&mut self, var: Var) -> Option<Array2<f64>> {
        self.grads.get_mut(var.0).and_then(Option::take)
    }
}

fn same_shape(op: &str, a: &Array2<f64>, b: &Array2<f64>) {
    assert_eq!(a.dim(), b.dim(), "{op}: operand shapes differ");
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Array2<f64>, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Array2<f64> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        self.nodes[v.0].value.dim()
    }

    /// Inserts an input. Parameters and constants are both leaves; callers
    /// decide which leaves they read gradients for.
    pub fn leaf(&mut self, value: Array2<f64>) -> Var {
        self.push(value, Op::Leaf)
    }

    pub fn zeros(&mut self, rows: usize, cols: usize) -> Var {
        self.leaf(Array2::zeros((rows, cols)))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let (va, vb) = (self.value(a), self.value(b));
        assert_eq!(va.ncols(), vb.nrows(), "matmul: inner dimensions differ");
        let out = va.dot(vb);
        self.push(out, Op::MatMul(a, b))
    }

    pub fn spmm(&mut self, m: Arc<CsrMatrix>, x: Var) -> Var {
        let out = m.mul_dense(&self.value(x).view());
        self.push(out, Op::SpMM(m, x))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        same_shape("add", self.value(a), self.value(b));
        let out = self.value(a) + self.value(b);
        self.push(out, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        same_shape("sub", self.value(a), self.value(b));
        let out = self.value(a) - self.value(b);
        self.push(out, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        same_shape("mul", self.value(a), self.value(b));
        let out = self.value(a) * self.value(b);
        self.push(out, Op::Mul(a, b))
    }

    /// `m×d + 1×d`, broadcasting the row over `m`.
    pub fn add_row(&mut self, a: Var, row: Var) -> Var {
        let (va, vr) = (self.value(a), self.value(row));
        assert!(
            vr.nrows() == 1 && vr.ncols() == va.ncols(),
            "add_row: bias must be 1×{}",
            va.ncols()
        );
        let out = va + vr;
        self.push(out, Op::AddRow(a, row))
    }

    pub fn add_scalar(&mut self, a: Var, c: f64) -> Var {
        let out = self.value(a).mapv(|x| x + c);
        self.push(out, Op::AddScalar(a))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let out = self.value(a) * c;
        self.push(out, Op::Scale(a, c))
    }

    pub fn one_minus(&mut self, a: Var) -> Var {
        let out = self.value(a).mapv(|x| 1.0 - x);
        self.push(out, Op::OneMinus(a))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        // `f64::max` would turn NaN into 0 and hide a diverged loss
        let out = self.value(a).mapv(|x| if x <= 0.0 { 0.0 } else { x });
        self.push(out, Op::Relu(a))
    }

    pub fn leaky_relu(&mut self, a: Var, slope: f64) -> Var {
        let out = self.value(a).mapv(|x| if x > 0.0 { x } else { slope * x });
        self.push(out, Op::LeakyRelu(a, slope))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let out = self.value(a).mapv(sigmoid);
        self.push(out, Op::Sigmoid(a))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let out = self.value(a).mapv(f64::tanh);
        self.push(out, Op::Tanh(a))
    }

    /// Column-wise concatenation; all parts share the row count.
    pub fn concat(&mut self, parts: &[Var]) -> Var {
        let views: Vec<_> = parts.iter().map(|&p| self.value(p).view()).collect();
        let out = ndarray::concatenate(Axis(1), &views).expect("concat: row counts differ");
        self.push(out, Op::Concat(parts.to_vec()))
    }

    /// `out[i] = a[index[i]]`
    pub fn gather(&mut self, a: Var, index: Arc<[usize]>) -> Var {
        let out = self.value(a).select(Axis(0), &index);
        self.push(out, Op::Gather(a, index))
    }

    /// `out[index[i]] += a[i]` into `n_out` rows.
    pub fn scatter_add(&mut self, a: Var, index: Arc<[usize]>, n_out: usize) -> Var {
        let va = self.value(a);
        assert_eq!(va.nrows(), index.len(), "scatter_add: one target per row");
        let mut out = Array2::zeros((n_out, va.ncols()));
        for (i, &t) in index.iter().enumerate() {
            out.row_mut(t).scaled_add(1.0, &va.row(i));
        }
        self.push(out, Op::ScatterAdd(a, index))
    }

    /// Multiplies each row of `a` (m×d) by the matching entry of `col` (m×1).
    pub fn mul_column(&mut self, a: Var, col: Var) -> Var {
        let (va, vc) = (self.value(a), self.value(col));
        assert!(
            vc.ncols() == 1 && vc.nrows() == va.nrows(),
            "mul_column: weights must be {}×1",
            va.nrows()
        );
        let out = va * vc;
        self.push(out, Op::MulColumn(a, col))
    }

    pub fn scale_rows_const(&mut self, a: Var, factors: Arc<[f64]>) -> Var {
        let va = self.value(a);
        assert_eq!(va.nrows(), factors.len(), "scale_rows_const: one factor per row");
        let mut out = va.clone();
        for (mut row, &f) in out.rows_mut().into_iter().zip(factors.iter()) {
            row *= f;
        }
        self.push(out, Op::ScaleRowsConst(a, factors))
    }

    /// Softmax of an `m×1` score column within groups; `segment[i]` names the
    /// group of row `i`.
    pub fn segment_softmax(&mut self, scores: Var, segment: Arc<[usize]>) -> Var {
        let s = self.value(scores);
        assert!(
            s.ncols() == 1 && s.nrows() == segment.len(),
            "segment_softmax: scores must be m×1"
        );
        let n_seg = segment.iter().map(|&g| g + 1).max().unwrap_or(0);
        let mut max = vec![f64::NEG_INFINITY; n_seg];
        for (i, &g) in segment.iter().enumerate() {
            max[g] = max[g].max(s[[i, 0]]);
        }
        let mut out = Array2::zeros(s.dim());
        let mut total = vec![0.0; n_seg];
        for (i, &g) in segment.iter().enumerate() {
            let e = (s[[i, 0]] - max[g]).exp();
            out[[i, 0]] = e;
            total[g] += e;
        }
        for (i, &g) in segment.iter().enumerate() {
            out[[i, 0]] /= total[g];
        }
        self.push(out, Op::SegmentSoftmax(scores, segment))
    }

    /// Row-wise L1 distance, `m×d, m×d → m×1`.
    pub fn l1_rows(&mut self, a: Var, b: Var) -> Var {
        same_shape("l1_rows", self.value(a), self.value(b));
        let diff = self.value(a) - self.value(b);
        let out = diff.mapv(f64::abs).sum_axis(Axis(1)).insert_axis(Axis(1));
        self.push(out, Op::L1Rows(a, b))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let out = Array2::from_elem((1, 1), self.value(a).sum());
        self.push(out, Op::Sum(a))
    }

    /// Reverse sweep from a `1×1` root.
    pub fn backward(&self, root: Var) -> Gradients {
        assert_eq!(self.value(root).dim(), (1, 1), "backward root must be a scalar");
        let mut grads: Vec<Option<Array2<f64>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[root.0] = Some(Array2::ones((1, 1)));

        fn acc(grads: &mut [Option<Array2<f64>>], v: Var, g: Array2<f64>) {
            match &mut grads[v.0] {
                Some(existing) => *existing += &g,
                slot @ None => *slot = Some(g),
            }
        }

        for idx in (0..=root.0).rev() {
            let node = &self.nodes[idx];
            if matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(g) = grads[idx].take() else { continue };
            match &node.op {
                Op::Leaf => unreachable!(),
                Op::MatMul(a, b) => {
                    let ga = g.dot(&self.value(*b).t());
                    let gb = self.value(*a).t().dot(&g);
                    acc(&mut grads, *a, ga);
                    acc(&mut grads, *b, gb);
                }
                Op::SpMM(m, x) => acc(&mut grads, *x, m.transpose_mul_dense(&g.view())),
                Op::Add(a, b) => {
                    acc(&mut grads, *a, g.clone());
                    acc(&mut grads, *b, g);
                }
                Op::Sub(a, b) => {
                    acc(&mut grads, *b, -&g);
                    acc(&mut grads, *a, g);
                }
                Op::Mul(a, b) => {
                    acc(&mut grads, *a, &g * self.value(*b));
                    acc(&mut grads, *b, &g * self.value(*a));
                }
                Op::AddRow(a, row) => {
                    acc(&mut grads, *row, g.sum_axis(Axis(0)).insert_axis(Axis(0)));
                    acc(&mut grads, *a, g);
                }
                Op::AddScalar(a) => acc(&mut grads, *a, g),
                Op::Scale(a, c) => acc(&mut grads, *a, g * *c),
                Op::OneMinus(a) => acc(&mut grads, *a, -g),
                Op::Relu(a) => {
                    let mut g = g;
                    Zip::from(&mut g).and(self.value(*a)).for_each(|g, &x| {
                        if x <= 0.0 {
                            *g = 0.0
                        }
                    });
                    acc(&mut grads, *a, g);
                }
                Op::LeakyRelu(a, slope) => {
                    let mut g = g;
                    Zip::from(&mut g).and(self.value(*a)).for_each(|g, &x| {
                        if x <= 0.0 {
                            *g *= slope
                        }
                    });
                    acc(&mut grads, *a, g);
                }
                Op::Sigmoid(a) => {
                    let mut g = g;
                    Zip::from(&mut g).and(&node.value).for_each(|g, &y| *g *= y * (1.0 - y));
                    acc(&mut grads, *a, g);
                }
                Op::Tanh(a) => {
                    let mut g = g;
                    Zip::from(&mut g).and(&node.value).for_each(|g, &y| *g *= 1.0 - y * y);
                    acc(&mut grads, *a, g);
                }
                Op::Concat(parts) => {
                    let mut start = 0;
                    for p in parts {
                        let w = self.value(*p).ncols();
                        let piece = g.slice(ndarray::s![.., start..start + w]).to_owned();
                        acc(&mut grads, *p, piece);
                        start += w;
                    }
                }
                Op::Gather(a, index) => {
                    let src = self.value(*a);
                    let mut ga = Array2::zeros(src.dim());
                    for (i, &s) in index.iter().enumerate() {
                        ga.row_mut(s).scaled_add(1.0, &g.row(i));
                    }
                    acc(&mut grads, *a, ga);
                }
                Op::ScatterAdd(a, index) => acc(&mut grads, *a, g.select(Axis(0), index)),
                Op::MulColumn(a, col) => {
                    let va = self.value(*a);
                    let gc = (&g * va).sum_axis(Axis(1)).insert_axis(Axis(1));
                    let ga = &g * self.value(*col);
                    acc(&mut grads, *col, gc);
                    acc(&mut grads, *a, ga);
                }
                Op::ScaleRowsConst(a, factors) => {
                    let mut g = g;
                    for (mut row, &f) in g.rows_mut().into_iter().zip(factors.iter()) {
                        row *= f;
                    }
                    acc(&mut grads, *a, g);
                }
                Op::SegmentSoftmax(a, segment) => {
                    let y = &node.value;
                    let n_seg = segment.iter().map(|&s| s + 1).max().unwrap_or(0);
                    let mut dot = vec![0.0; n_seg];
                    for (i, &s) in segment.iter().enumerate() {
                        dot[s] += y[[i, 0]] * g[[i, 0]];
                    }
                    let mut ga = Array2::zeros(y.dim());
                    for (i, &s) in segment.iter().enumerate() {
                        ga[[i, 0]] = y[[i, 0]] * (g[[i, 0]] - dot[s]);
                    }
                    acc(&mut grads, *a, ga);
                }
                Op::L1Rows(a, b) => {
                    let mut ga = self.value(*a) - self.value(*b);
                    Zip::from(ga.rows_mut()).and(g.rows()).for_each(|mut row, gi| {
                        let gi = gi[0];
                        row.mapv_inplace(|d| gi * sign(d));
                    });
                    acc(&mut grads, *b, -&ga);
                    acc(&mut grads, *a, ga);
                }
                Op::Sum(a) => {
                    let shape = self.value(*a).dim();
                    acc(&mut grads, *a, Array2::from_elem(shape, g[[0, 0]]));
                }
            }
        }
        Gradients { grads }
    }
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}
