//! Margin-ranking training with nearest-neighbor negatives and mutual
//! nearest-neighbor seed expansion.

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use ndarray::{Array2, ArrayView1};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::decoder::CycleMode;
use crate::error::{AlignError, Result};
use crate::eval::l1;
use crate::kg::SeedSet;
use crate::model::{self, Ablation, GraphContext, ModelConfig, EMBED_SOURCE, EMBED_TARGET};
use crate::optim::Adam;
use crate::params::{BoundParams, ParameterStore};
use crate::tape::{Gradients, Tape, Var};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    /// Supervised by the initial seed pairs only.
    Base,
    /// Periodically adds mutual nearest neighbors to the training pairs.
    Semi,
}

impl FromStr for Variant {
    type Err = AlignError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "base" => Ok(Variant::Base),
            "semi" => Ok(Variant::Semi),
            other => Err(AlignError::Config(format!(
                "unknown variant {other:?}; expected base or semi"
            ))),
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Variant::Base => "base",
            Variant::Semi => "semi",
        })
    }
}

/// Which entity-table rows receive optimizer updates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EmbeddingUpdates {
    /// Every row of both tables.
    All,
    /// Only rows of entities in the initial seed pairs. Every other row keeps
    /// its initial value and is placed by the shared encoder; pairs added by
    /// expansion supervise the shared weights but do not unfreeze rows.
    #[default]
    Seeds,
    /// Tables stay fixed; only the shared weights learn.
    None,
}

impl FromStr for EmbeddingUpdates {
    type Err = AlignError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "all" => Ok(EmbeddingUpdates::All),
            "seeds" => Ok(EmbeddingUpdates::Seeds),
            "none" => Ok(EmbeddingUpdates::None),
            other => Err(AlignError::Config(format!(
                "unknown embedding update policy {other:?}; expected all, seeds or none"
            ))),
        }
    }
}

/// Training hyper-parameters. Serializes to a flat TOML table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub variant: Variant,
    pub margin: f64,
    pub negatives_k: usize,
    pub epochs: usize,
    pub expansion_period: usize,
    /// Seed expansion is skipped at epochs up to and including this one.
    pub expansion_warmup: usize,
    pub learning_rate: f64,
    pub rng_seed: u64,
    pub train_ratio: f64,
    pub entity_dim: usize,
    pub relation_dim: usize,
    pub onto_dim: usize,
    pub depth: usize,
    pub cycle_mode: CycleMode,
    pub without_global: bool,
    pub without_ontology: bool,
    pub without_cycle: bool,
    /// Multiplier applied to the name-vector embeddings before training.
    pub input_scale: f64,
    /// Which rows of the entity tables the optimizer may move.
    pub embedding_updates: EmbeddingUpdates,
}

impl Default for TrainConfig {
    fn default() -> Self {
        let m = ModelConfig::default();
        TrainConfig {
            variant: Variant::Base,
            margin: 3.0,
            negatives_k: 5,
            epochs: 60,
            expansion_period: 5,
            expansion_warmup: 0,
            learning_rate: 1e-3,
            rng_seed: 0,
            train_ratio: 0.3,
            entity_dim: m.entity_dim,
            relation_dim: m.relation_dim,
            onto_dim: m.onto_dim,
            depth: m.depth,
            cycle_mode: m.cycle_mode,
            without_global: false,
            without_ontology: false,
            without_cycle: false,
            input_scale: m.input_scale,
            embedding_updates: EmbeddingUpdates::Seeds,
        }
    }
}

impl TrainConfig {
    pub fn model(&self) -> ModelConfig {
        ModelConfig {
            entity_dim: self.entity_dim,
            relation_dim: self.relation_dim,
            onto_dim: self.onto_dim,
            depth: self.depth,
            cycle_mode: self.cycle_mode,
            ablation: self.ablation(),
            input_scale: self.input_scale,
        }
    }

    pub fn ablation(&self) -> Ablation {
        Ablation {
            without_global: self.without_global,
            without_ontology: self.without_ontology,
            without_cycle: self.without_cycle,
        }
    }

    pub fn set_ablation(&mut self, a: Ablation) {
        self.without_global = a.without_global;
        self.without_ontology = a.without_ontology;
        self.without_cycle = a.without_cycle;
    }

    // `!(x > 0.0)` also rejects NaN.
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    pub fn validate(&self) -> Result<()> {
        if !(self.margin > 0.0) {
            return Err(AlignError::Config(format!(
                "margin must be positive, got {}",
                self.margin
            )));
        }
        if self.negatives_k == 0 {
            return Err(AlignError::Config("negatives_k must be at least 1".into()));
        }
        if self.expansion_period == 0 {
            return Err(AlignError::Config("expansion_period must be at least 1".into()));
        }
        if !(self.learning_rate > 0.0) {
            return Err(AlignError::Config("learning_rate must be positive".into()));
        }
        if !(self.train_ratio > 0.0 && self.train_ratio < 1.0) {
            return Err(AlignError::Config(format!(
                "train_ratio must lie in (0, 1), got {}",
                self.train_ratio
            )));
        }
        self.model().validate()
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("flat config always serializes")
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| AlignError::Config(e.to_string()))
    }
}

pub fn l1_distance(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(AlignError::Shape {
            op: "l1_distance",
            detail: format!("{} vs {}", x.len(), y.len()),
        });
    }
    Ok(x.iter().zip(y).map(|(a, b)| (a - b).abs()).sum())
}

/// Indices of the `k` nearest rows of `pool` to `query` by L1, ascending,
/// ties broken by lower index. `skip` is never returned.
fn nearest_in(
    query: ArrayView1<f64>,
    pool: &Array2<f64>,
    candidates: &[usize],
    k: usize,
    skip: Option<usize>,
) -> Vec<usize> {
    let mut scored: Vec<(f64, usize)> = candidates
        .iter()
        .filter(|&&c| Some(c) != skip)
        .map(|&c| (l1(query, pool.row(c)), c))
        .collect();
    let cmp = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
    let k = k.min(scored.len());
    if k == 0 {
        return Vec::new();
    }
    if k < scored.len() {
        scored.select_nth_unstable_by(k - 1, cmp);
        scored.truncate(k);
    }
    scored.sort_by(cmp);
    scored.into_iter().map(|(_, c)| c).collect()
}

/// The `k` nearest same-side neighbors of every row, excluding the row
/// itself. `k` is clipped to `n − 1`.
pub fn nearest_neighbors(embeddings: &Array2<f64>, k: usize) -> Vec<Vec<usize>> {
    let all: Vec<usize> = (0..embeddings.nrows()).collect();
    (0..embeddings.nrows())
        .into_par_iter()
        .map(|i| nearest_in(embeddings.row(i), embeddings, &all, k, Some(i)))
        .collect()
}

/// One hinge term: `max(dis(pos) − dis(neg) + λ, 0)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Contrast {
    pub positive: (usize, usize),
    pub negative: (usize, usize),
}

/// For each positive pair, one negative replacing the source entity and one
/// replacing the target entity, each drawn uniformly from that entity's
/// nearest-neighbor list.
pub fn sample_negatives(
    pairs: &[(usize, usize)],
    source_knn: &[Vec<usize>],
    target_knn: &[Vec<usize>],
    rng: &mut impl Rng,
) -> Vec<Contrast> {
    let mut out = Vec::with_capacity(2 * pairs.len());
    for &(s, t) in pairs {
        let ns = &source_knn[s];
        if !ns.is_empty() {
            let alt = ns[rng.random_range(0..ns.len())];
            out.push(Contrast {
                positive: (s, t),
                negative: (alt, t),
            });
        }
        let nt = &target_knn[t];
        if !nt.is_empty() {
            let alt = nt[rng.random_range(0..nt.len())];
            out.push(Contrast {
                positive: (s, t),
                negative: (s, alt),
            });
        }
    }
    out
}

/// `Σ max(dis(pos) − dis(neg) + λ, 0)` over `contrasts`, recorded on `tape`.
pub fn margin_loss(tape: &mut Tape, source: Var, target: Var, contrasts: &[Contrast], margin: f64) -> Var {
    if contrasts.is_empty() {
        let zero = tape.zeros(1, 1);
        return tape.sum(zero);
    }
    let col = |f: fn(&Contrast) -> usize| -> Arc<[usize]> { contrasts.iter().map(f).collect() };
    let ps = tape.gather(source, col(|c| c.positive.0));
    let pt = tape.gather(target, col(|c| c.positive.1));
    let ns = tape.gather(source, col(|c| c.negative.0));
    let nt = tape.gather(target, col(|c| c.negative.1));
    let pos = tape.l1_rows(ps, pt);
    let neg = tape.l1_rows(ns, nt);
    let gap = tape.sub(pos, neg);
    let shifted = tape.add_scalar(gap, margin);
    let hinge = tape.relu(shifted);
    tape.sum(hinge)
}

/// Mutual nearest neighbors among the entities not yet in `train_pairs`.
/// Returns `(source, target, distance)` sorted by source id.
pub fn expand_seeds(
    source: &Array2<f64>,
    target: &Array2<f64>,
    train_pairs: &[(usize, usize)],
) -> Vec<(usize, usize, f64)> {
    let used_s: HashSet<usize> = train_pairs.iter().map(|p| p.0).collect();
    let used_t: HashSet<usize> = train_pairs.iter().map(|p| p.1).collect();
    let pool_s: Vec<usize> = (0..source.nrows()).filter(|e| !used_s.contains(e)).collect();
    let pool_t: Vec<usize> = (0..target.nrows()).filter(|e| !used_t.contains(e)).collect();
    if pool_s.is_empty() || pool_t.is_empty() {
        return Vec::new();
    }
    let best_t: Vec<usize> = pool_s
        .par_iter()
        .map(|&s| nearest_in(source.row(s), target, &pool_t, 1, None)[0])
        .collect();
    let best_s: std::collections::HashMap<usize, usize> = pool_t
        .par_iter()
        .map(|&t| (t, nearest_in(target.row(t), source, &pool_s, 1, None)[0]))
        .collect();
    pool_s
        .iter()
        .zip(best_t)
        .filter(|&(&s, t)| best_s[&t] == s)
        .map(|(&s, t)| (s, t, l1(source.row(s), target.row(t))))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub loss: f64,
    pub train_pairs: usize,
    pub added_pairs: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpansionRound {
    pub epoch: usize,
    pub added: Vec<(usize, usize, f64)>,
}

/// Mutable training state; gold test labels are only held, never read.
#[derive(Debug, Clone)]
pub struct AlignmentState {
    pub train_pairs: Vec<(usize, usize)>,
    pub test_pairs: Vec<(usize, usize)>,
    pub history: Vec<EpochRecord>,
    pub expansions: Vec<ExpansionRound>,
    pub source_embeddings: Array2<f64>,
    pub target_embeddings: Array2<f64>,
}

/// Zeroes the entity-table gradient rows of entities outside `pairs`.
fn mask_non_seed_rows(grads: &mut Gradients, bound: &BoundParams, pairs: &[(usize, usize)]) {
    for (name, pick) in [(EMBED_SOURCE, 0usize), (EMBED_TARGET, 1)] {
        let Some(g) = grads.get_mut(bound.var(name)) else {
            continue;
        };
        let keep: HashSet<usize> = pairs.iter().map(|p| if pick == 0 { p.0 } else { p.1 }).collect();
        for (i, mut row) in g.rows_mut().into_iter().enumerate() {
            if !keep.contains(&i) {
                row.fill(0.0);
            }
        }
    }
}

/// What a training callback sees after each epoch. The embeddings are the
/// ones the epoch's loss was computed from, before the parameter update.
pub struct EpochView<'e> {
    pub record: &'e EpochRecord,
    pub source: &'e Array2<f64>,
    pub target: &'e Array2<f64>,
}

pub struct TrainOutcome {
    pub params: ParameterStore,
    pub state: AlignmentState,
}

pub struct Trainer<'a> {
    pub source: &'a GraphContext,
    pub target: &'a GraphContext,
    pub config: TrainConfig,
}

impl<'a> Trainer<'a> {
    pub fn new(source: &'a GraphContext, target: &'a GraphContext, config: TrainConfig) -> Result<Self> {
        config.validate()?;
        Ok(Trainer { source, target, config })
    }

    fn knn(&self, emb: &Array2<f64>) -> Vec<Vec<usize>> {
        nearest_neighbors(emb, self.config.negatives_k)
    }

    /// Runs the configured number of epochs, calling `on_epoch` after each.
    pub fn train_with(
        &self,
        mut params: ParameterStore,
        seeds: &SeedSet,
        mut on_epoch: impl FnMut(EpochView<'_>),
    ) -> Result<TrainOutcome> {
        let cfg = &self.config;
        let model_cfg = cfg.model();
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed.wrapping_add(0x5eed));
        let mut adam = Adam::new(cfg.learning_rate);
        let mut train_pairs = seeds.train_pairs.clone();
        let mut history = Vec::with_capacity(cfg.epochs);
        let mut expansions = Vec::new();
        type Neighbors = Vec<Vec<usize>>;
        let mut knn: Option<(Neighbors, Neighbors)> = None;
        let freeze_tables = cfg.embedding_updates == EmbeddingUpdates::None;
        let trainable = |name: &str| !freeze_tables || (name != EMBED_SOURCE && name != EMBED_TARGET);

        for epoch in 1..=cfg.epochs {
            let mut tape = Tape::new();
            let bound = params.bind(&mut tape);
            let src = model::forward(&mut tape, self.source, bound.var(EMBED_SOURCE), &bound, &model_cfg)?.output;
            let tgt = model::forward(&mut tape, self.target, bound.var(EMBED_TARGET), &bound, &model_cfg)?.output;
            let (knn_s, knn_t) = knn.get_or_insert_with(|| (self.knn(tape.value(src)), self.knn(tape.value(tgt))));
            let contrasts = sample_negatives(&train_pairs, knn_s, knn_t, &mut rng);
            let loss = margin_loss(&mut tape, src, tgt, &contrasts, cfg.margin);
            let loss_value = tape.value(loss)[[0, 0]];
            if !loss_value.is_finite() {
                return Err(AlignError::NonFiniteLoss {
                    epoch,
                    value: loss_value,
                });
            }
            let grads = tape.backward(loss);
            let mut grads = grads;
            if cfg.embedding_updates == EmbeddingUpdates::Seeds {
                mask_non_seed_rows(&mut grads, &bound, &seeds.train_pairs);
            }
            adam.step(&mut params, &bound, &grads, trainable);

            let mut added_pairs = 0;
            if epoch % cfg.expansion_period == 0 {
                let (s_emb, t_emb) = (tape.value(src), tape.value(tgt));
                knn = Some((self.knn(s_emb), self.knn(t_emb)));
                if cfg.variant == Variant::Semi && epoch > cfg.expansion_warmup {
                    let added = expand_seeds(s_emb, t_emb, &train_pairs);
                    added_pairs = added.len();
                    train_pairs.extend(added.iter().map(|&(s, t, _)| (s, t)));
                    expansions.push(ExpansionRound { epoch, added });
                }
            }
            let record = EpochRecord {
                epoch,
                loss: loss_value,
                train_pairs: train_pairs.len(),
                added_pairs,
            };
            on_epoch(EpochView {
                record: &record,
                source: tape.value(src),
                target: tape.value(tgt),
            });
            history.push(record);
        }

        let (source_embeddings, target_embeddings) = model::embed_pair(&params, &model_cfg, self.source, self.target)?;
        Ok(TrainOutcome {
            params,
            state: AlignmentState {
                train_pairs,
                test_pairs: seeds.test_pairs.clone(),
                history,
                expansions,
                source_embeddings,
                target_embeddings,
            },
        })
    }

    pub fn train(&self, params: ParameterStore, seeds: &SeedSet) -> Result<TrainOutcome> {
        self.train_with(params, seeds, |_| {})
    }
}
