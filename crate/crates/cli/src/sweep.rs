//! One training run per grid cell along a single axis.

use std::fmt::Write as _;
use std::str::FromStr;
use std::time::Instant;

use anyhow::{anyhow, bail};
use clap::ValueEnum;
use triplealign::{CycleMode, Direction, MetricsReport};

use crate::config::RunConfig;
use crate::pipeline;

pub const SWEEP_CSV: &str = "sweep.csv";

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Axis {
    /// Relation and ontology widths: `N` sets both, `RxO` sets them apart.
    Dims,
    Depth,
    Ratio,
    Mode,
}

impl Axis {
    pub fn name(self) -> &'static str {
        match self {
            Axis::Dims => "dims",
            Axis::Depth => "depth",
            Axis::Ratio => "ratio",
            Axis::Mode => "mode",
        }
    }

    pub fn default_values(self) -> Vec<String> {
        let v: &[&str] = match self {
            Axis::Dims => &["50", "100", "150", "200", "250", "300"],
            Axis::Depth => &["1", "2", "3"],
            Axis::Ratio => &["0.25", "0.30", "0.35", "0.40", "0.45", "0.50"],
            Axis::Mode => &["1", "2", "3"],
        };
        v.iter().map(|s| s.to_string()).collect()
    }

    /// Applies one axis value to a copy of the base config.
    pub fn apply(self, base: &RunConfig, value: &str) -> anyhow::Result<RunConfig> {
        let mut run = base.clone();
        let cfg = &mut run.train;
        let num =
            |s: &str| usize::from_str(s).map_err(|_| anyhow!("{} value {s:?} is not a positive integer", self.name()));
        match self {
            Axis::Dims => match value.split_once('x') {
                Some((r, o)) => (cfg.relation_dim, cfg.onto_dim) = (num(r)?, num(o)?),
                None => (cfg.relation_dim, cfg.onto_dim) = (num(value)?, num(value)?),
            },
            Axis::Depth => cfg.depth = num(value)?,
            Axis::Ratio => {
                cfg.train_ratio = value
                    .parse()
                    .map_err(|_| anyhow!("ratio value {value:?} is not a number"))?
            }
            Axis::Mode => cfg.cycle_mode = CycleMode::try_from(num(value)? as u8).map_err(|e| anyhow!("{e}"))?,
        }
        run.out = base.out.join(format!("{}-{value}", self.name()));
        cfg.validate()?;
        Ok(run)
    }
}

const HEADER: &str = "axis,value,status,s2t_hits1,s2t_hits10,s2t_mrr,t2s_hits1,t2s_hits10,t2s_mrr,seconds,error\n";

fn row(axis: Axis, value: &str, result: &anyhow::Result<Vec<MetricsReport>>, seconds: f64) -> String {
    let mut s = format!("{},{value},", axis.name());
    match result {
        Ok(reports) => {
            s.push_str("ok");
            for dir in [Direction::SourceToTarget, Direction::TargetToSource] {
                let r = reports
                    .iter()
                    .find(|r| r.direction == dir)
                    .expect("both directions reported");
                let hit = |k| r.hits_at(k).unwrap_or(f64::NAN);
                let _ = write!(s, ",{},{},{}", hit(1), hit(10), r.mrr);
            }
            let _ = writeln!(s, ",{seconds:.3},");
        }
        Err(e) => {
            let msg = format!("{e:#}").replace(['"', '\n'], " ");
            let _ = writeln!(s, "failed,,,,,,,{seconds:.3},\"{msg}\"");
        }
    }
    s
}

/// Runs every cell, logging failures and carrying on; returns the number of
/// failed cells.
pub fn run(base: &RunConfig, axis: Axis, values: &[String], progress: bool) -> anyhow::Result<usize> {
    if values.is_empty() {
        bail!("no values for the {} axis", axis.name());
    }
    std::fs::create_dir_all(&base.out)?;
    let path = base.out.join(SWEEP_CSV);
    let mut csv = String::from(HEADER);
    let mut failed = 0;
    for value in values {
        let start = Instant::now();
        let result = axis.apply(base, value).and_then(|run| pipeline::train(&run, progress));
        if let Err(e) = &result {
            failed += 1;
            eprintln!("{} = {value}: {e:#}", axis.name());
        }
        csv.push_str(&row(axis, value, &result, start.elapsed().as_secs_f64()));
        // Rewritten after every cell so an interrupted sweep keeps its rows.
        std::fs::write(&path, &csv)?;
    }
    Ok(failed)
}
