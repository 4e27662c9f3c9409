//! Reusable checks returning the measured deviation or a description of the
//! violation, shared by the per-topic suites and the acceptance run.

use std::collections::BTreeMap;

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use triplealign::encoder;
use triplealign::eval::compute_metrics;
use triplealign::kg::expand_relations;
use triplealign::model::{self, ForwardPass};
use triplealign::ontology;
use triplealign::tape::Tape;
use triplealign::trainer::expand_seeds;
use triplealign::triple::{B_RG, B_SP, W_RG, W_SP};
use triplealign::{Ablation, CycleMode, Direction, EntityRole, GraphContext, ModelConfig, ParameterStore};

use super::*;

pub type Check = std::result::Result<(), String>;

pub fn run_forward(inst: &Instance) -> (Tape, ForwardPass) {
    run_forward_with(inst, &inst.params)
}

pub fn run_forward_with(inst: &Instance, params: &ParameterStore) -> (Tape, ForwardPass) {
    let mut tape = Tape::new();
    let bound = params.bind(&mut tape);
    let x0 = tape.leaf(inst.x0.clone());
    let fp = model::forward(&mut tape, &inst.ctx, x0, &bound, &inst.cfg).unwrap();
    (tape, fp)
}

/// Largest absolute deviation between every library stage and the dense
/// reference, with the stage it occurred in.
pub fn oracle_deviation(inst: &Instance) -> (f64, String) {
    let want = inst.oracle();
    let (tape, fp) = run_forward(inst);
    let v = |var| to_mat(tape.value(var));
    let mut worst = (0.0f64, String::from("none"));
    let mut see = |label: &str, got: &Mat, want: &Mat| {
        let d = max_abs_diff(got, want);
        if d > worst.0 || d.is_nan() {
            worst = (d, label.to_string());
        }
    };

    see(
        "adjacency",
        &to_mat(&inst.ctx.graph.norm_adjacency().to_dense()),
        &want.adjacency,
    );
    see("encoder", &v(fp.encoded), &want.encoded);
    see("latent relation", &v(fp.semantic.latent), &want.latent);
    let roles = [&fp.semantic.head, &fp.semantic.relation, &fp.semantic.tail];
    for (i, (out, alpha)) in want.roles.iter().enumerate() {
        see(&format!("interaction output {i}"), &v(roles[i].output), out);
        see(
            &format!("interaction weights {i}"),
            &v(roles[i].weights),
            &column(alpha),
        );
    }
    see("correlation", &v(fp.semantic.correlation), &want.correlation);
    match (&fp.semantic.global, &want.global_relation, &want.global_triple) {
        (Some(g), Some(rel), Some(tri)) => {
            see("global per relation", &v(g.per_relation), rel);
            see("global per triple", &v(g.per_triple), tri);
        }
        (None, None, None) => {}
        _ => panic!("global feature presence differs"),
    }
    see("semantic triple", &v(fp.semantic.ensemble), &want.semantic);
    match &fp.fused.onto {
        Some(o) => {
            see("ontology embedding", &v(o.x_onto), want.x_onto.as_ref().unwrap());
            see(
                "ontology pair mean",
                &v(o.relation.pair_mean),
                want.pair_mean.as_ref().unwrap(),
            );
            see(
                "ontology relation",
                &v(o.relation.projected),
                want.onto_relation.as_ref().unwrap(),
            );
            see("ontology triple", &v(o.triple), want.onto_triple.as_ref().unwrap());
            see(
                "co-attention onto",
                &v(o.co.onto_enhanced),
                want.onto_enhanced.as_ref().unwrap(),
            );
            see(
                "co-attention sem",
                &v(o.co.sem_enhanced),
                want.sem_enhanced.as_ref().unwrap(),
            );
            see(
                "co-attention weights so",
                &v(o.co.onto_weights),
                &column(want.onto_weights.as_ref().unwrap()),
            );
            see(
                "co-attention weights os",
                &v(o.co.sem_weights),
                &column(want.sem_weights.as_ref().unwrap()),
            );
        }
        None => assert!(want.x_onto.is_none(), "ontology presence differs"),
    }
    see("ensemble triple", &v(fp.fused.ensemble), &want.ensemble);
    assert_eq!(fp.stages.len(), want.stages.len(), "decoder stage counts differ");
    for (i, (stage, (out, alpha))) in fp.stages.iter().zip(&want.stages).enumerate() {
        see(&format!("decoder stage {i}"), &v(stage.output), out);
        see(&format!("decoder weights {i}"), &v(stage.weights), &column(alpha));
    }
    let nb = &inst.ctx.neighbors;
    let edges: Vec<(usize, usize)> = nb.centers.iter().copied().zip(nb.neighbors.iter().copied()).collect();
    let got_w = keyed(&edges, tape.value(fp.gat.weights).as_slice().unwrap());
    let want_w = keyed(&want.gat_edges, &want.gat_weights);
    assert_eq!(got_w.len(), want_w.len(), "neighbour sets differ");
    let mut gat = 0.0f64;
    for (e, w) in &want_w {
        let g = got_w.get(e).unwrap_or_else(|| panic!("missing edge {e:?}"));
        gat = gat.max((g - w).abs());
    }
    see("gat weights", &vec![vec![gat]], &vec![vec![0.0]]);
    see("gat output", &v(fp.output), &want.output);
    worst
}

/// Random `(n, k, m)` with at most 50 entities and 100 base triples.
pub fn oracle_sizes(seed: u64) -> (usize, usize, usize) {
    use rand::Rng;
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_mul(7919));
    (
        rng.random_range(2..=50),
        rng.random_range(1..=6),
        rng.random_range(1..=100),
    )
}

fn group_sums(weights: &[f64], groups: &[usize]) -> BTreeMap<usize, f64> {
    let mut sums = BTreeMap::new();
    for (w, g) in weights.iter().zip(groups) {
        *sums.entry(*g).or_insert(0.0) += w;
    }
    sums
}

fn normalized(label: &str, weights: &Array2<f64>, groups: &[usize]) -> Check {
    for (g, s) in group_sums(weights.as_slice().unwrap(), groups) {
        if (s - 1.0).abs() > 1e-6 {
            return Err(format!("{label}: group {g} sums to {s}"));
        }
    }
    Ok(())
}

/// Every attention distribution of one forward pass sums to one per group,
/// and the ensemble width is `d_r + 2d_o`.
pub fn softmax_and_width(inst: &Instance) -> Check {
    let (tape, fp) = run_forward(inst);
    let idx = &inst.ctx.index;
    for (label, att) in [
        ("head", &fp.semantic.head),
        ("relation", &fp.semantic.relation),
        ("tail", &fp.semantic.tail),
    ] {
        normalized(label, tape.value(att.weights), &idx.relations)?;
    }
    if let Some(o) = &fp.fused.onto {
        normalized("co-attention so", tape.value(o.co.onto_weights), &idx.relations)?;
        normalized("co-attention os", tape.value(o.co.sem_weights), &idx.relations)?;
    }
    for (stage, role) in fp.stages.iter().zip(inst.cfg.effective_mode().stages()) {
        let owner = match role {
            EntityRole::Head => &idx.heads,
            EntityRole::Tail => &idx.tails,
        };
        normalized("decoder", tape.value(stage.weights), owner)?;
    }
    normalized("gat", tape.value(fp.gat.weights), &inst.ctx.neighbors.centers)?;
    let width = tape.shape(fp.fused.ensemble).1;
    let want = inst.cfg.relation_dim + 2 * inst.cfg.onto_dim;
    if width != want || inst.cfg.triple_dim() != want {
        return Err(format!("ensemble width {width}, expected {want}"));
    }
    Ok(())
}

pub fn highway_convex(seed: u64, n: usize, d: usize) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut tape = Tape::new();
    let x_in = tape.leaf(random_matrix(&mut rng, n, d, 3.0));
    let x_gcn = tape.leaf(random_matrix(&mut rng, n, d, 3.0));
    let w = tape.leaf(random_matrix(&mut rng, d, d, 2.0));
    let b = tape.leaf(random_matrix(&mut rng, 1, d, 2.0));
    let out = encoder::highway(&mut tape, x_in, x_gcn, w, b).unwrap();
    for ((o, a), g) in tape.value(out).iter().zip(tape.value(x_in)).zip(tape.value(x_gcn)) {
        let (lo, hi) = (a.min(*g), a.max(*g));
        if *o < lo - 1e-12 || *o > hi + 1e-12 {
            return Err(format!("{o} outside [{lo}, {hi}]"));
        }
    }
    Ok(())
}

/// Relabelling entities permutes the encoder, decoder and final outputs
/// the same way.
pub fn permutation_equivariant(seed: u64, n: usize, k: usize, m: usize, cfg: &ModelConfig) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let kg = random_graph(&mut rng, n, k, m);
    let x0 = random_matrix(&mut rng, n, cfg.entity_dim, 1.0);
    let params = random_params(cfg, seed);
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut rng);
    let mut x_perm = Array2::zeros(x0.dim());
    for old in 0..n {
        x_perm.row_mut(perm[old]).assign(&x0.row(old));
    }
    let a = Instance {
        ctx: GraphContext::new(expand_relations(kg.permuted(&perm))),
        x0: x_perm,
        params: params.clone(),
        cfg: *cfg,
    };
    let b = Instance {
        ctx: GraphContext::new(expand_relations(kg)),
        x0,
        params,
        cfg: *cfg,
    };
    let (ta, fa) = run_forward(&a);
    let (tb, fb) = run_forward(&b);
    let decoded = |fp: &ForwardPass| fp.stages.last().map_or(fp.encoded, |s| s.output);
    for (label, va, vb) in [
        ("encoder", fa.encoded, fb.encoded),
        ("decoder", decoded(&fa), decoded(&fb)),
        ("output", fa.output, fb.output),
    ] {
        let (xa, xb) = (ta.value(va), tb.value(vb));
        for old in 0..n {
            for (p, q) in xa.row(perm[old]).iter().zip(xb.row(old)) {
                if (p - q).abs() > 1e-9 {
                    return Err(format!("{label}: entity {old} differs ({p} vs {q})"));
                }
            }
        }
    }
    Ok(())
}

/// Library expansion against the brute-force mutual nearest neighbours;
/// without ties also checks that swapping the graphs swaps the result.
pub fn expansion_matches(seed: u64, n1: usize, n2: usize, d: usize, used: usize, coarse: bool) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut src = random_matrix(&mut rng, n1, d, 2.0);
    let mut tgt = random_matrix(&mut rng, n2, d, 2.0);
    if coarse {
        // integer grids force distance ties
        src.mapv_inplace(f64::round);
        tgt.mapv_inplace(f64::round);
    }
    let mut ids1: Vec<usize> = (0..n1).collect();
    let mut ids2: Vec<usize> = (0..n2).collect();
    ids1.shuffle(&mut rng);
    ids2.shuffle(&mut rng);
    let train: Vec<(usize, usize)> = ids1.into_iter().zip(ids2).take(used).collect();
    let got: Vec<(usize, usize)> = expand_seeds(&src, &tgt, &train)
        .into_iter()
        .map(|(s, t, _)| (s, t))
        .collect();
    let want = mutual_nn(&to_mat(&src), &to_mat(&tgt), &train);
    if got != want {
        return Err(format!("expansion {got:?} but brute force {want:?}"));
    }
    if !coarse {
        let swapped: Vec<(usize, usize)> = train.iter().map(|&(a, b)| (b, a)).collect();
        let mut back: Vec<(usize, usize)> = expand_seeds(&tgt, &src, &swapped)
            .into_iter()
            .map(|(t, s, _)| (s, t))
            .collect();
        back.sort();
        if back != got {
            return Err(format!("swapped expansion {back:?} differs from {got:?}"));
        }
    }
    Ok(())
}

/// Hits@k grows with k, MRR lies in (0, 1] and bounds Hits@1, and
/// improving one rank never lowers any metric.
pub fn metrics_monotone(ranks: &[usize], improve: usize) -> Check {
    let ks = [1, 3, 10, 50, 100];
    let r = compute_metrics(ranks, &ks, Direction::SourceToTarget).map_err(|e| e.to_string())?;
    for w in ks.windows(2) {
        if r.hits[&w[0]] > r.hits[&w[1]] {
            return Err(format!("hits@{} > hits@{}", w[0], w[1]));
        }
    }
    if !(r.mrr > 0.0 && r.mrr <= 1.0) || r.hits[&1] > 100.0 * r.mrr + 1e-9 {
        return Err(format!("mrr {} inconsistent with hits@1 {}", r.mrr, r.hits[&1]));
    }
    let mut better = ranks.to_vec();
    let i = improve % better.len();
    better[i] = (better[i] - 1).max(1);
    let b = compute_metrics(&better, &ks, Direction::SourceToTarget).map_err(|e| e.to_string())?;
    if b.mrr < r.mrr || ks.iter().any(|k| b.hits[k] < r.hits[k]) {
        return Err("improving a rank lowered a metric".into());
    }
    Ok(())
}

fn output_and_reached(inst: &Instance, params: &ParameterStore, names: &[&str]) -> (Array2<f64>, Vec<String>) {
    let mut tape = Tape::new();
    let bound = params.bind(&mut tape);
    let x0 = tape.leaf(inst.x0.clone());
    let fp = model::forward(&mut tape, &inst.ctx, x0, &bound, &inst.cfg).unwrap();
    let total = tape.sum(fp.output);
    let grads = tape.backward(total);
    let reached = names
        .iter()
        .filter(|n| grads.get(bound.var(n)).is_some_and(|g| g.iter().any(|&v| v != 0.0)))
        .map(|n| n.to_string())
        .collect();
    (tape.value(fp.output).clone(), reached)
}

/// With `flag` enabled, no gradient reaches `names` and overwriting them
/// with large noise leaves the output bit-identical.
pub fn ablation_invariant(flag: &str, names: &[&str], seeds: std::ops::Range<u64>) -> Check {
    let mut ablation = Ablation::default();
    ablation.enable(flag).map_err(|e| e.to_string())?;
    let cfg = ModelConfig {
        ablation,
        ..toy_config()
    };
    for seed in seeds {
        let inst = random_instance(seed, 14, 3, 25, cfg);
        let (before, reached) = output_and_reached(&inst, &inst.params, names);
        if !reached.is_empty() {
            return Err(format!("{flag}: gradient reaches {reached:?}"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed + 99);
        let mut perturbed = inst.params.clone();
        for name in names {
            let shape = perturbed.get(name).unwrap().dim();
            perturbed.insert(*name, random_matrix(&mut rng, shape.0, shape.1, 50.0));
        }
        let (after, _) = output_and_reached(&inst, &perturbed, names);
        if before != after {
            return Err(format!("{flag}: output moved with the disabled parameters"));
        }
    }
    Ok(())
}

pub fn ontology_parameters() -> Vec<&'static str> {
    ontology::PARAMETERS.to_vec()
}

pub fn global_parameters() -> Vec<&'static str> {
    vec![W_RG, B_RG, W_SP, B_SP]
}

/// In the full model every listed parameter does reach the output.
pub fn all_reached(names: &[&str]) -> Check {
    let inst = random_instance(3, 14, 3, 25, toy_config());
    let (_, reached) = output_and_reached(&inst, &inst.params, names);
    if reached.len() != names.len() {
        return Err(format!("only {reached:?} are reachable"));
    }
    Ok(())
}

/// Decoder stage count under `mode` and the given ablation.
pub fn stage_count(mode: CycleMode, without_cycle: bool) -> usize {
    let cfg = ModelConfig {
        cycle_mode: mode,
        ablation: Ablation {
            without_cycle,
            ..Ablation::default()
        },
        ..toy_config()
    };
    let inst = random_instance(7, 10, 2, 18, cfg);
    run_forward(&inst).1.stages.len()
}
