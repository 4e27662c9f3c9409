//! Independent reference implementations, written with plain loops over
//! `Vec<Vec<f64>>` and no shared code with the library beyond parameter
//! lookup. Every tape-based stage is checked against these.
#![allow(dead_code, clippy::needless_range_loop)]

pub mod checks;

use std::collections::{BTreeSet, HashMap};

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use triplealign::decoder::{EntityRole, GAT_A, GAT_W};
use triplealign::encoder::{gate_bias, gate_weight};
use triplealign::kg::{expand_relations, KnowledgeGraph, Triple};
use triplealign::ontology::{A_ONT, A_SEM, B_ORG, B_OT, B_S2O, W_ORG, W_OT, W_S2O};
use triplealign::triple::{TripleRole, B_RG, B_SP, B_SR, W_RG, W_SP, W_SR};
use triplealign::{GraphContext, ModelConfig, ParameterStore};

pub type Mat = Vec<Vec<f64>>;

pub fn to_mat(a: &Array2<f64>) -> Mat {
    a.outer_iter().map(|r| r.to_vec()).collect()
}

pub fn param(p: &ParameterStore, name: &str) -> Mat {
    to_mat(p.get(name).unwrap_or_else(|| panic!("missing parameter {name}")))
}

pub fn zeros(r: usize, c: usize) -> Mat {
    vec![vec![0.0; c]; r]
}

pub fn matmul(a: &Mat, b: &Mat) -> Mat {
    let inner = b.len();
    let cols = if inner == 0 { 0 } else { b[0].len() };
    let mut out = zeros(a.len(), cols);
    for i in 0..a.len() {
        assert_eq!(a[i].len(), inner);
        for j in 0..cols {
            let mut s = 0.0;
            for k in 0..inner {
                s += a[i][k] * b[k][j];
            }
            out[i][j] = s;
        }
    }
    out
}

fn vec_mat(v: &[f64], m: &Mat) -> Vec<f64> {
    matmul(&vec![v.to_vec()], m).remove(0)
}

fn dot_col(v: &[f64], col: &Mat) -> f64 {
    assert_eq!(v.len(), col.len());
    v.iter().zip(col).map(|(a, c)| a * c[0]).sum()
}

fn cat(parts: &[&[f64]]) -> Vec<f64> {
    parts.iter().flat_map(|p| p.iter().copied()).collect()
}

fn add_bias(v: &mut [f64], b: &Mat) {
    for (x, y) in v.iter_mut().zip(&b[0]) {
        *x += y;
    }
}

pub fn relu(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        0.0
    }
}

fn leaky(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        0.2 * x
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Softmax of `scores[i]` over every `j` with `group[j] == group[i]`.
fn grouped_softmax(scores: &[f64], group: &[usize]) -> Vec<f64> {
    (0..scores.len())
        .map(|i| {
            let denom: f64 = (0..scores.len())
                .filter(|&j| group[j] == group[i])
                .map(|j| scores[j].exp())
                .sum();
            scores[i].exp() / denom
        })
        .collect()
}

/// Expanded triple set from scratch: base, reversed with `r + k`, and a
/// self triple with relation `2k` for every entity.
pub fn expanded_set(triples: &[Triple], n: usize, k: usize) -> BTreeSet<(usize, usize, usize)> {
    let mut set = BTreeSet::new();
    for t in triples {
        set.insert((t.head, t.relation, t.tail));
        set.insert((t.tail, t.relation + k, t.head));
    }
    for e in 0..n {
        set.insert((e, 2 * k, e));
    }
    set
}

/// `D̃^-1/2 Ã D̃^-1/2` with `Ã` the symmetric 0/1 pattern of `edges` plus
/// the identity.
pub fn dense_norm_adjacency(edges: &[(usize, usize)], n: usize) -> Mat {
    let mut a = zeros(n, n);
    for i in 0..n {
        a[i][i] = 1.0;
    }
    for &(i, j) in edges {
        a[i][j] = 1.0;
        a[j][i] = 1.0;
    }
    let deg: Vec<f64> = a.iter().map(|r| r.iter().sum()).collect();
    let mut out = zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            out[i][j] = a[i][j] / (deg[i] * deg[j]).sqrt();
        }
    }
    out
}

pub fn gcn(adj: &Mat, x: &Mat) -> Mat {
    matmul(adj, x)
        .into_iter()
        .map(|r| r.into_iter().map(relu).collect())
        .collect()
}

pub fn highway(x_in: &Mat, x_gcn: &Mat, w: &Mat, b: &Mat) -> Mat {
    let lin = matmul(x_in, w);
    let mut out = zeros(x_in.len(), x_in[0].len());
    for i in 0..x_in.len() {
        for j in 0..x_in[0].len() {
            let g = sigmoid(lin[i][j] + b[0][j]);
            out[i][j] = g * x_gcn[i][j] + (1.0 - g) * x_in[i][j];
        }
    }
    out
}

/// Everything the model computes for one graph, by triple position.
pub struct OracleForward {
    pub adjacency: Mat,
    pub encoded: Mat,
    pub latent: Mat,
    /// head, relation, tail: (outputs, weights)
    pub roles: Vec<(Mat, Vec<f64>)>,
    pub correlation: Mat,
    pub global_relation: Option<Mat>,
    pub global_triple: Option<Mat>,
    pub semantic: Mat,
    pub x_onto: Option<Mat>,
    pub pair_mean: Option<Mat>,
    pub onto_relation: Option<Mat>,
    pub onto_triple: Option<Mat>,
    pub onto_enhanced: Option<Mat>,
    pub sem_enhanced: Option<Mat>,
    pub onto_weights: Option<Vec<f64>>,
    pub sem_weights: Option<Vec<f64>>,
    pub ensemble: Mat,
    pub stages: Vec<(Mat, Vec<f64>)>,
    /// Edge list `(i, j)` in the order the weights are listed.
    pub gat_edges: Vec<(usize, usize)>,
    pub gat_weights: Vec<f64>,
    pub output: Mat,
}

/// Dense forward pass over the expanded triples `triples` (in the order the
/// caller wants per-triple outputs listed).
pub fn forward(
    triples: &[(usize, usize, usize)],
    n: usize,
    n_rel: usize,
    x0: &Mat,
    p: &ParameterStore,
    cfg: &ModelConfig,
) -> OracleForward {
    let m = triples.len();
    let edges: Vec<(usize, usize)> = triples.iter().map(|&(h, _, t)| (h, t)).collect();
    let adjacency = dense_norm_adjacency(&edges, n);

    let mut x = x0.clone();
    for l in 0..cfg.depth {
        let conv = gcn(&adjacency, &x);
        x = highway(&x, &conv, &param(p, &gate_weight(l)), &param(p, &gate_bias(l)));
    }
    let encoded = x;
    let rel: Vec<usize> = triples.iter().map(|t| t.1).collect();
    let xh: Mat = triples.iter().map(|t| encoded[t.0].clone()).collect();
    let xt: Mat = triples.iter().map(|t| encoded[t.2].clone()).collect();

    let (w_sr, b_sr) = (param(p, W_SR), param(p, B_SR));
    let latent: Mat = (0..m)
        .map(|i| {
            let mut v = vec_mat(&cat(&[&xh[i], &xt[i]]), &w_sr);
            add_bias(&mut v, &b_sr);
            v.into_iter().map(relu).collect()
        })
        .collect();

    let mut roles = Vec::new();
    for role in TripleRole::ALL {
        let w = param(p, &role.weight());
        let wc = param(p, &role.context_weight());
        let a = param(p, &role.attention());
        let mut proj = Vec::with_capacity(m);
        let mut scores = Vec::with_capacity(m);
        for i in 0..m {
            let (elem, ctx) = match role {
                TripleRole::Head => (xh[i].clone(), cat(&[&latent[i], &xt[i]])),
                TripleRole::Relation => (latent[i].clone(), cat(&[&xh[i], &xt[i]])),
                TripleRole::Tail => (xt[i].clone(), cat(&[&xh[i], &latent[i]])),
            };
            let pe = vec_mat(&elem, &w);
            let pc = vec_mat(&ctx, &wc);
            scores.push(leaky(dot_col(&cat(&[&pe, &pc]), &a)));
            proj.push(pe);
        }
        let alpha = grouped_softmax(&scores, &rel);
        let out: Mat = (0..m)
            .map(|i| proj[i].iter().map(|v| relu(alpha[i] * v)).collect())
            .collect();
        roles.push((out, alpha));
    }
    let d_r = cfg.relation_dim;
    let mut correlation = zeros(m, d_r);
    for i in 0..m {
        for j in 0..d_r {
            correlation[i][j] = roles[0].0[i][j] + roles[1].0[i][j] + roles[2].0[i][j];
        }
    }

    let group_size: Vec<usize> = (0..n_rel).map(|r| rel.iter().filter(|&&x| x == r).count()).collect();
    let group_mean = |rows: &Mat| -> Mat {
        let width = rows.first().map_or(0, |r| r.len());
        let mut out = zeros(n_rel, width);
        for (i, row) in rows.iter().enumerate() {
            for j in 0..width {
                out[rel[i]][j] += row[j] / group_size[rel[i]] as f64;
            }
        }
        out
    };

    let (global_relation, global_triple, semantic) = if cfg.ablation.without_global {
        (None, None, correlation.clone())
    } else {
        let pairs: Mat = (0..m).map(|i| cat(&[&xh[i], &xt[i]])).collect();
        let mean = group_mean(&pairs);
        let (w_rg, b_rg) = (param(p, W_RG), param(p, B_RG));
        let per_rel: Mat = mean
            .iter()
            .map(|r| {
                let mut v = vec_mat(r, &w_rg);
                add_bias(&mut v, &b_rg);
                v
            })
            .collect();
        let (w_sp, b_sp) = (param(p, W_SP), param(p, B_SP));
        let per_triple: Mat = (0..m)
            .map(|i| {
                let mut v = vec_mat(&cat(&[&xh[i], &per_rel[rel[i]], &xt[i]]), &w_sp);
                add_bias(&mut v, &b_sp);
                v.into_iter().map(relu).collect()
            })
            .collect();
        let s: Mat = (0..m)
            .map(|i| (0..d_r).map(|j| correlation[i][j] + per_triple[i][j]).collect())
            .collect();
        (Some(per_rel), Some(per_triple), s)
    };

    let d_o = cfg.onto_dim;
    let mut x_onto = None;
    let mut pair_mean_out = None;
    let mut onto_relation = None;
    let mut onto_triple = None;
    let mut onto_enhanced = None;
    let mut sem_enhanced = None;
    let mut onto_weights = None;
    let mut sem_weights = None;
    let ensemble: Mat = if cfg.ablation.without_ontology {
        semantic.iter().map(|r| cat(&[r, &vec![0.0; 2 * d_o]])).collect()
    } else {
        let (w_s2o, b_s2o) = (param(p, W_S2O), param(p, B_S2O));
        let xo: Mat = encoded
            .iter()
            .map(|r| {
                let mut v = vec_mat(r, &w_s2o);
                add_bias(&mut v, &b_s2o);
                v.into_iter().map(f64::tanh).collect()
            })
            .collect();
        let opairs: Mat = triples.iter().map(|t| cat(&[&xo[t.0], &xo[t.2]])).collect();
        let pair_mean = group_mean(&opairs);
        let (w_org, b_org) = (param(p, W_ORG), param(p, B_ORG));
        let x_or: Mat = pair_mean
            .iter()
            .map(|r| {
                let mut v = vec_mat(r, &w_org);
                add_bias(&mut v, &b_org);
                v
            })
            .collect();
        let (w_ot, b_ot) = (param(p, W_OT), param(p, B_OT));
        let o: Mat = triples
            .iter()
            .map(|t| {
                let mut v = vec_mat(&cat(&[&xo[t.0], &x_or[t.1], &xo[t.2]]), &w_ot);
                add_bias(&mut v, &b_ot);
                v.into_iter().map(relu).collect()
            })
            .collect();
        let co = |first: &Mat, second: &Mat, a: &Mat| -> (Mat, Vec<f64>) {
            let scores: Vec<f64> = (0..m)
                .map(|i| leaky(dot_col(&cat(&[&first[i], &second[i]]), a)))
                .collect();
            let alpha = grouped_softmax(&scores, &rel);
            let mut sum = zeros(n_rel, d_r);
            for i in 0..m {
                for j in 0..d_r {
                    sum[rel[i]][j] += alpha[i] * first[i][j];
                }
            }
            (
                sum.into_iter().map(|r| r.into_iter().map(relu).collect()).collect(),
                alpha,
            )
        };
        let (o_bar, w_so) = co(&semantic, &o, &param(p, A_SEM));
        let (s_bar, w_os) = co(&o, &semantic, &param(p, A_ONT));
        let ens: Mat = (0..m)
            .map(|i| {
                let r = rel[i];
                let fused: Vec<f64> = (0..d_r)
                    .map(|j| semantic[i][j] + s_bar[r][j] + o_bar[r][j] + o[i][j])
                    .collect();
                cat(&[&fused, &pair_mean[r]])
            })
            .collect();
        x_onto = Some(xo);
        pair_mean_out = Some(pair_mean);
        onto_relation = Some(x_or);
        onto_triple = Some(o);
        onto_enhanced = Some(o_bar);
        sem_enhanced = Some(s_bar);
        onto_weights = Some(w_so);
        sem_weights = Some(w_os);
        ens
    };

    let stages_roles: &[EntityRole] = cfg.effective_mode().stages();
    let mut current = encoded.clone();
    let mut stages = Vec::new();
    for &role in stages_roles {
        let w = param(p, role.weight());
        let a = param(p, role.attention());
        let owner: Vec<usize> = triples
            .iter()
            .map(|t| match role {
                EntityRole::Head => t.0,
                EntityRole::Tail => t.2,
            })
            .collect();
        let proj: Mat = ensemble.iter().map(|r| vec_mat(r, &w)).collect();
        let scores: Vec<f64> = (0..m)
            .map(|i| leaky(dot_col(&cat(&[&proj[i], &current[owner[i]]]), &a)))
            .collect();
        let alpha = grouped_softmax(&scores, &owner);
        let d_e = current[0].len();
        let mut sum = zeros(n, d_e);
        for i in 0..m {
            for j in 0..d_e {
                sum[owner[i]][j] += alpha[i] * proj[i][j];
            }
        }
        let next: Mat = (0..n)
            .map(|e| (0..d_e).map(|j| current[e][j] + relu(sum[e][j])).collect())
            .collect();
        stages.push((next.clone(), alpha));
        current = next;
    }

    // neighbours are the nonzero pattern of the adjacency, row by row
    let mut gat_edges = Vec::new();
    for i in 0..n {
        for j in 0..n {
            if adjacency[i][j] != 0.0 {
                gat_edges.push((i, j));
            }
        }
    }
    let w = param(p, GAT_W);
    let a = param(p, GAT_A);
    let h = matmul(&current, &w);
    let centers: Vec<usize> = gat_edges.iter().map(|e| e.0).collect();
    let scores: Vec<f64> = gat_edges
        .iter()
        .map(|&(i, j)| leaky(dot_col(&cat(&[&h[i], &h[j]]), &a)))
        .collect();
    let gat_weights = grouped_softmax(&scores, &centers);
    let d_e = current[0].len();
    let mut sum = zeros(n, d_e);
    for (e, &(i, j)) in gat_edges.iter().enumerate() {
        for c in 0..d_e {
            sum[i][c] += gat_weights[e] * h[j][c];
        }
    }
    let output: Mat = (0..n)
        .map(|i| (0..d_e).map(|c| current[i][c] + relu(sum[i][c])).collect())
        .collect();

    OracleForward {
        adjacency,
        encoded,
        latent,
        roles,
        correlation,
        global_relation,
        global_triple,
        semantic,
        x_onto,
        pair_mean: pair_mean_out,
        onto_relation,
        onto_triple,
        onto_enhanced,
        sem_enhanced,
        onto_weights,
        sem_weights,
        ensemble,
        stages,
        gat_edges,
        gat_weights,
        output,
    }
}

pub fn l1(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum()
}

/// Scripted hinge sum over `(pos_s, pos_t, neg_s, neg_t)` quadruples.
pub fn hinge_loss(src: &Mat, tgt: &Mat, terms: &[(usize, usize, usize, usize)], margin: f64) -> f64 {
    terms
        .iter()
        .map(|&(ps, pt, ns, nt)| relu(l1(&src[ps], &tgt[pt]) - l1(&src[ns], &tgt[nt]) + margin))
        .sum()
}

/// Brute-force mutual nearest neighbours among unused entities, ties to the
/// lowest id.
pub fn mutual_nn(src: &Mat, tgt: &Mat, used: &[(usize, usize)]) -> Vec<(usize, usize)> {
    let us: BTreeSet<usize> = used.iter().map(|p| p.0).collect();
    let ut: BTreeSet<usize> = used.iter().map(|p| p.1).collect();
    let ps: Vec<usize> = (0..src.len()).filter(|i| !us.contains(i)).collect();
    let pt: Vec<usize> = (0..tgt.len()).filter(|i| !ut.contains(i)).collect();
    let nearest = |q: &[f64], pool: &[usize], rows: &Mat| -> Option<usize> {
        let mut best: Option<(f64, usize)> = None;
        for &c in pool {
            let d = l1(q, &rows[c]);
            if best.is_none_or(|(bd, _)| d < bd) {
                best = Some((d, c));
            }
        }
        best.map(|b| b.1)
    };
    let mut out = Vec::new();
    for &s in &ps {
        if let Some(t) = nearest(&src[s], &pt, tgt) {
            if nearest(&tgt[t], &ps, src) == Some(s) {
                out.push((s, t));
            }
        }
    }
    out
}

pub fn max_abs_diff(a: &Mat, b: &Mat) -> f64 {
    assert_eq!(a.len(), b.len(), "row counts differ");
    let mut worst = 0.0f64;
    for (x, y) in a.iter().zip(b) {
        assert_eq!(x.len(), y.len(), "column counts differ");
        for (u, v) in x.iter().zip(y) {
            worst = worst.max((u - v).abs());
        }
    }
    worst
}

pub fn column(v: &[f64]) -> Mat {
    v.iter().map(|&x| vec![x]).collect()
}

/// A random base graph with `n` entities, `k` relations and up to `m`
/// distinct triples (no self loops).
pub fn random_graph(rng: &mut ChaCha8Rng, n: usize, k: usize, m: usize) -> KnowledgeGraph {
    let mut seen = BTreeSet::new();
    let mut triples = Vec::new();
    for _ in 0..m * 4 {
        if triples.len() == m {
            break;
        }
        let h = rng.random_range(0..n);
        let t = rng.random_range(0..n);
        if h == t {
            continue;
        }
        let tr = Triple::new(h, rng.random_range(0..k), t);
        if seen.insert(tr) {
            triples.push(tr);
        }
    }
    let uris = (0..n).map(|i| format!("http://toy/e{i}")).collect();
    KnowledgeGraph::new(uris, k, triples).unwrap()
}

pub fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize, scale: f64) -> Array2<f64> {
    Array2::from_shape_fn((rows, cols), |_| rng.random_range(-scale..scale))
}

/// A toy model config small enough for dense oracles and finite
/// differences.
pub fn toy_config() -> ModelConfig {
    ModelConfig {
        entity_dim: 5,
        relation_dim: 4,
        onto_dim: 3,
        depth: 2,
        ..ModelConfig::default()
    }
}

/// Registers every shared parameter and overwrites all of them (biases
/// included) with uniform noise so no path is trivially zero.
pub fn random_params(cfg: &ModelConfig, seed: u64) -> ParameterStore {
    let mut store = ParameterStore::new();
    triplealign::model::register_parameters(&mut store, cfg, seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xa11ce);
    for (_, a) in store.iter_mut() {
        a.mapv_inplace(|_| rng.random_range(-0.6..0.6));
    }
    store
}

/// One random toy instance: graph context, entity matrix and parameters.
pub struct Instance {
    pub ctx: GraphContext,
    pub x0: Array2<f64>,
    pub params: ParameterStore,
    pub cfg: ModelConfig,
}

pub fn random_instance(seed: u64, n: usize, k: usize, m: usize, cfg: ModelConfig) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let kg = random_graph(&mut rng, n, k, m);
    let ctx = GraphContext::new(expand_relations(kg));
    let x0 = random_matrix(&mut rng, n, cfg.entity_dim, 1.0);
    let params = random_params(&cfg, seed);
    Instance { ctx, x0, params, cfg }
}

impl Instance {
    pub fn triples(&self) -> Vec<(usize, usize, usize)> {
        self.ctx
            .graph
            .triples()
            .iter()
            .map(|t| (t.head, t.relation, t.tail))
            .collect()
    }

    pub fn oracle(&self) -> OracleForward {
        forward(
            &self.triples(),
            self.ctx.entity_count(),
            self.ctx.graph.relation_count(),
            &to_mat(&self.x0),
            &self.params,
            &self.cfg,
        )
    }
}

/// Row `i` of an `(i, j)`-keyed weight list, for comparing edge orderings.
pub fn keyed(edges: &[(usize, usize)], weights: &[f64]) -> HashMap<(usize, usize), f64> {
    edges.iter().copied().zip(weights.iter().copied()).collect()
}
