//! Load → train → evaluate → persist, shared by `train` and `sweep`.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use triplealign::eval::{self, DEFAULT_KS};
use triplealign::kg::{self, expand_relations, load_kg, KnowledgeGraph, SeedSet, Side};
use triplealign::model::{self, init_parameters, EMBED_SOURCE};
use triplealign::trainer::{AlignmentState, EpochRecord};
use triplealign::{Checkpoint, GraphContext, MetricsReport, ParameterStore, TrainConfig, Trainer};

use crate::config::RunConfig;

pub const SNAPSHOT: &str = "config.snapshot";
pub const CHECKPOINT: &str = "checkpoint.bin";
pub const LOSS: &str = "loss.csv";
pub const METRICS: &str = "metrics.json";
pub const EXPANSION_LOG: &str = "expansion.log";

#[derive(Debug, thiserror::Error)]
#[error("dataset directory {0} does not exist")]
pub struct MissingDataset(pub PathBuf);

pub struct Dataset {
    pub source: GraphContext,
    pub target: GraphContext,
    pub seeds: SeedSet,
}

fn load_graphs(dir: &Path) -> anyhow::Result<(KnowledgeGraph, KnowledgeGraph)> {
    if !dir.is_dir() {
        return Err(MissingDataset(dir.to_path_buf()).into());
    }
    Ok((load_kg(dir, Side::Source)?, load_kg(dir, Side::Target)?))
}

fn contexts(k1: KnowledgeGraph, k2: KnowledgeGraph, dir: &Path, cfg: &TrainConfig) -> anyhow::Result<Dataset> {
    let seeds = kg::load_seeds(&dir.join(kg::LINKS_FILE), &k1, &k2, cfg.train_ratio, cfg.rng_seed)?;
    Ok(Dataset {
        source: GraphContext::new(expand_relations(k1)),
        target: GraphContext::new(expand_relations(k2)),
        seeds,
    })
}

/// Loads the dataset and builds the initial parameters for `run`.
pub fn prepare(run: &RunConfig) -> anyhow::Result<(Dataset, ParameterStore)> {
    let cfg = &run.train;
    cfg.validate()?;
    let (k1, k2) = load_graphs(&run.dataset)?;
    let vectors = run.vectors_path();
    let e1 = kg::init_embeddings(&k1, vectors.as_deref(), cfg.entity_dim, cfg.rng_seed)?;
    let e2 = kg::init_embeddings(&k2, vectors.as_deref(), cfg.entity_dim, cfg.rng_seed)?;
    let params = init_parameters(&cfg.model(), &e1, &e2, cfg.rng_seed)?;
    Ok((contexts(k1, k2, &run.dataset, cfg)?, params))
}

/// Loads the dataset for a trained checkpoint, checking that its entity
/// tables fit the graphs.
pub fn prepare_for(dataset: &Path, ck: &Checkpoint) -> anyhow::Result<Dataset> {
    let (k1, k2) = load_graphs(dataset)?;
    let data = contexts(k1, k2, dataset, &ck.config)?;
    for (name, n) in [
        (EMBED_SOURCE, data.source.entity_count()),
        (model::EMBED_TARGET, data.target.entity_count()),
    ] {
        let table = ck
            .params
            .get(name)
            .with_context(|| format!("checkpoint has no {name} table"))?;
        if table.dim() != (n, ck.config.entity_dim) {
            bail!(
                "checkpoint {name} is {:?} but the dataset has {n} entities at dimension {}",
                table.dim(),
                ck.config.entity_dim
            );
        }
    }
    Ok(data)
}

pub fn metrics(data: &Dataset, cfg: &TrainConfig, params: &ParameterStore) -> anyhow::Result<Vec<MetricsReport>> {
    let (src, tgt) = model::embed_pair(params, &cfg.model(), &data.source, &data.target)?;
    Ok(eval::evaluate(&src, &tgt, &data.seeds.test_pairs, &DEFAULT_KS)?)
}

pub fn metrics_json(reports: &[MetricsReport]) -> String {
    let mut s = serde_json::to_string_pretty(reports).expect("reports serialize");
    s.push('\n');
    s
}

fn loss_csv(history: &[EpochRecord]) -> String {
    let mut s = String::from("epoch,loss,train_pairs,added_pairs\n");
    for r in history {
        let _ = writeln!(s, "{},{},{},{}", r.epoch, r.loss, r.train_pairs, r.added_pairs);
    }
    s
}

fn expansion_log(state: &AlignmentState, data: &Dataset) -> String {
    let (g1, g2) = (data.source.graph.base(), data.target.graph.base());
    let mut s = String::from("epoch\tsource\ttarget\tdistance\n");
    for round in &state.expansions {
        for &(a, b, d) in &round.added {
            let _ = writeln!(s, "{}\t{}\t{}\t{d}", round.epoch, g1.entity_uri(a), g2.entity_uri(b));
        }
    }
    s
}

fn write(dir: &Path, name: &str, body: impl AsRef<[u8]>) -> anyhow::Result<()> {
    let path = dir.join(name);
    fs::write(&path, body).with_context(|| format!("cannot write {}", path.display()))
}

/// Trains one run and writes every artifact into `run.out`.
pub fn train(run: &RunConfig, progress: bool) -> anyhow::Result<Vec<MetricsReport>> {
    let (data, params) = prepare(run)?;
    fs::create_dir_all(&run.out).with_context(|| format!("cannot create {}", run.out.display()))?;
    write(&run.out, SNAPSHOT, run.to_toml())?;

    let trainer = Trainer::new(&data.source, &data.target, run.train.clone())?;
    let outcome = trainer.train_with(params, &data.seeds, |view| {
        let r = view.record;
        if progress {
            eprintln!(
                "epoch {:>4}  loss {:.4}  pairs {}  +{}",
                r.epoch, r.loss, r.train_pairs, r.added_pairs
            );
        }
    })?;

    let ck = Checkpoint {
        config: run.train.clone(),
        epoch: run.train.epochs as u64,
        params: outcome.params,
    };
    ck.save(&run.out.join(CHECKPOINT))?;
    write(&run.out, LOSS, loss_csv(&outcome.state.history))?;
    write(&run.out, EXPANSION_LOG, expansion_log(&outcome.state, &data))?;

    // Evaluated through the same path `evaluate` uses, so the numbers
    // reproduce exactly from the checkpoint.
    let reports = metrics(&data, &run.train, &ck.params)?;
    write(&run.out, METRICS, metrics_json(&reports))?;
    Ok(reports)
}
