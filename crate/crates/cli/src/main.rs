mod config;
mod pipeline;
mod sweep;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use triplealign::synth::{self, SynthConfig};
use triplealign::{Ablation, Checkpoint, CycleMode, Variant};

use config::RunConfig;
use pipeline::MissingDataset;
use sweep::Axis;

#[derive(Parser)]
#[command(
    name = "triplealign",
    version,
    about = "Cross-lingual knowledge-graph entity alignment"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one model and write its run directory.
    Train {
        #[command(flatten)]
        run: RunArgs,
        /// Print one line per epoch.
        #[arg(long)]
        progress: bool,
    },
    /// Recompute the metrics of a checkpoint.
    Evaluate {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Defaults to the dataset named in the run's config.snapshot.
        #[arg(long)]
        dataset: Option<PathBuf>,
        /// Also write the metrics JSON here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train once per value along one axis and collect sweep.csv.
    Sweep {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, value_enum)]
        axis: Axis,
        /// Comma-separated axis values; each axis has a default grid.
        #[arg(long, value_delimiter = ',')]
        values: Vec<String>,
        #[arg(long)]
        progress: bool,
    },
    /// Write a synthetic dataset pair with a known alignment.
    GenSynth {
        #[arg(long, default_value_t = 200)]
        entities: usize,
        #[arg(long, default_value_t = 20)]
        relations: usize,
        #[arg(long, default_value_t = 600)]
        triples: usize,
        #[arg(long, default_value_t = 0.0)]
        noise: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Width of the emitted name vectors.
        #[arg(long, default_value_t = 300)]
        dim: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print entity, relation, triple and link counts of a dataset.
    Stats {
        #[arg(long)]
        dataset: PathBuf,
    },
}

/// Config file plus command-line overrides, which win.
#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    dataset: Option<PathBuf>,
    #[arg(long)]
    vectors: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    variant: Option<Variant>,
    /// wo-E, wo-O or wo-C; repeat for several. Replaces the file's flags.
    #[arg(long)]
    ablation: Vec<String>,
    #[arg(long)]
    mode: Option<u8>,
    #[arg(long)]
    depth: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    epochs: Option<usize>,
    /// Fraction of the gold links used as training seeds.
    #[arg(long)]
    ratio: Option<f64>,
}

impl RunArgs {
    fn resolve(self) -> anyhow::Result<RunConfig> {
        let mut run = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        if let Some(d) = self.dataset {
            run.dataset = d;
        }
        if self.vectors.is_some() {
            run.vectors = self.vectors;
        }
        if let Some(o) = self.out {
            run.out = o;
        }
        let cfg = &mut run.train;
        if let Some(v) = self.variant {
            cfg.variant = v;
        }
        if !self.ablation.is_empty() {
            let mut a = Ablation::default();
            for flag in &self.ablation {
                a.enable(flag)?;
            }
            cfg.set_ablation(a);
        }
        if let Some(m) = self.mode {
            cfg.cycle_mode = CycleMode::try_from(m)?;
        }
        if let Some(d) = self.depth {
            cfg.depth = d;
        }
        if let Some(s) = self.seed {
            cfg.rng_seed = s;
        }
        if let Some(e) = self.epochs {
            cfg.epochs = e;
        }
        if let Some(r) = self.ratio {
            cfg.train_ratio = r;
        }
        if run.dataset.as_os_str().is_empty() {
            anyhow::bail!("no dataset given (use --dataset or set `dataset` in the config)");
        }
        cfg.validate()?;
        Ok(run)
    }
}

fn print_metrics(reports: &[triplealign::MetricsReport]) {
    for r in reports {
        let hits: Vec<String> = r.hits.iter().map(|(k, v)| format!("Hits@{k} {v:.2}")).collect();
        println!(
            "{:<17} {}  MRR {:.4}  (n={})",
            r.direction.to_string(),
            hits.join("  "),
            r.mrr,
            r.n_test
        );
    }
}

fn run(cli: Cli) -> anyhow::Result<ExitCode> {
    match cli.command {
        Command::Train { run, progress } => {
            let run = run.resolve()?;
            let reports = pipeline::train(&run, progress)?;
            print_metrics(&reports);
            eprintln!("wrote {}", run.out.display());
        }
        Command::Evaluate {
            checkpoint,
            dataset,
            out,
        } => {
            let ck = Checkpoint::load(&checkpoint)?;
            let dataset = match dataset {
                Some(d) => d,
                None => {
                    let snap = checkpoint.with_file_name(pipeline::SNAPSHOT);
                    RunConfig::load(&snap)
                        .with_context(|| "pass --dataset or keep config.snapshot next to the checkpoint")?
                        .dataset
                }
            };
            let data = pipeline::prepare_for(&dataset, &ck)?;
            let reports = pipeline::metrics(&data, &ck.config, &ck.params)?;
            let json = pipeline::metrics_json(&reports);
            if let Some(path) = out {
                std::fs::write(&path, &json).with_context(|| format!("cannot write {}", path.display()))?;
            }
            print!("{json}");
        }
        Command::Sweep {
            run,
            axis,
            values,
            progress,
        } => {
            let run = run.resolve()?;
            let values = if values.is_empty() {
                axis.default_values()
            } else {
                values
            };
            let failed = sweep::run(&run, axis, &values, progress)?;
            eprintln!("wrote {}", run.out.join(sweep::SWEEP_CSV).display());
            if failed > 0 {
                eprintln!("{failed} of {} cells failed", values.len());
                return Ok(ExitCode::FAILURE);
            }
        }
        Command::GenSynth {
            entities,
            relations,
            triples,
            noise,
            seed,
            dim,
            out,
        } => {
            let cfg = SynthConfig {
                n_entities: entities,
                n_relations: relations,
                n_triples: triples,
                noise,
                seed,
                dim,
            };
            synth::generate(&cfg)?.write(&out)?;
            eprintln!("wrote {}", out.display());
        }
        Command::Stats { dataset } => {
            if !dataset.is_dir() {
                return Err(MissingDataset(dataset).into());
            }
            let stats = triplealign::kg::dataset_stats(&dataset)?;
            println!("{}", serde_json::to_string_pretty(&stats)?);
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<MissingDataset>().is_some() {
                ExitCode::from(2)
            } else {
                ExitCode::FAILURE
            }
        }
    }
}
