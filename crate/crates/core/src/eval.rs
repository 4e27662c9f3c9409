//! Hits@k and MRR over L1 nearest-neighbor ranking.

use std::collections::BTreeMap;
use std::fmt;

use ndarray::{Array2, ArrayView1};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{AlignError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    SourceToTarget,
    TargetToSource,
    Averaged,
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Direction::SourceToTarget => "source_to_target",
            Direction::TargetToSource => "target_to_source",
            Direction::Averaged => "averaged",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub direction: Direction,
    /// k → percentage of queries whose gold entity ranks within the top k.
    pub hits: BTreeMap<usize, f64>,
    pub mrr: f64,
    pub n_test: usize,
}

impl MetricsReport {
    pub fn hits_at(&self, k: usize) -> Option<f64> {
        self.hits.get(&k).copied()
    }
}

pub const DEFAULT_KS: [usize; 3] = [1, 10, 50];

pub(crate) fn l1(a: ArrayView1<f64>, b: ArrayView1<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y).abs()).sum()
}

/// For every `(query, gold)` pair, the 1-based rank of `gold` among the gold
/// column of all pairs, by ascending L1 distance from `query`. A candidate
/// at equal distance outranks the gold when its id is lower.
pub fn rank_gold(queries: &Array2<f64>, candidates: &Array2<f64>, pairs: &[(usize, usize)]) -> Vec<usize> {
    let pool: Vec<usize> = pairs.iter().map(|&(_, g)| g).collect();
    pairs
        .par_iter()
        .map(|&(q, gold)| {
            let qrow = queries.row(q);
            let d_gold = l1(qrow, candidates.row(gold));
            1 + pool
                .iter()
                .filter(|&&c| c != gold)
                .filter(|&&c| {
                    let d = l1(qrow, candidates.row(c));
                    d < d_gold || (d == d_gold && c < gold)
                })
                .count()
        })
        .collect()
}

pub fn compute_metrics(ranks: &[usize], ks: &[usize], direction: Direction) -> Result<MetricsReport> {
    if ranks.is_empty() {
        return Err(AlignError::Validation(
            "cannot compute metrics over zero test pairs".into(),
        ));
    }
    if ranks.contains(&0) {
        return Err(AlignError::Validation("ranks are 1-based".into()));
    }
    let n = ranks.len() as f64;
    let hits = ks
        .iter()
        .map(|&k| (k, 100.0 * ranks.iter().filter(|&&r| r <= k).count() as f64 / n))
        .collect();
    let mrr = ranks.iter().map(|&r| 1.0 / r as f64).sum::<f64>() / n;
    Ok(MetricsReport {
        direction,
        hits,
        mrr,
        n_test: ranks.len(),
    })
}

/// Both directions plus their average, in that order.
pub fn evaluate(
    source: &Array2<f64>,
    target: &Array2<f64>,
    test_pairs: &[(usize, usize)],
    ks: &[usize],
) -> Result<Vec<MetricsReport>> {
    let forward = compute_metrics(&rank_gold(source, target, test_pairs), ks, Direction::SourceToTarget)?;
    let swapped: Vec<_> = test_pairs.iter().map(|&(a, b)| (b, a)).collect();
    let backward = compute_metrics(&rank_gold(target, source, &swapped), ks, Direction::TargetToSource)?;
    let hits = ks
        .iter()
        .map(|k| (*k, (forward.hits[k] + backward.hits[k]) / 2.0))
        .collect();
    let averaged = MetricsReport {
        direction: Direction::Averaged,
        hits,
        mrr: (forward.mrr + backward.mrr) / 2.0,
        n_test: forward.n_test,
    };
    Ok(vec![forward, backward, averaged])
}
