//! Run configuration: where the data lives plus every training
//! hyper-parameter, stored as one flat TOML table.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use triplealign::TrainConfig;

/// Keys owned by the run itself; everything else belongs to [`TrainConfig`].
const RUN_KEYS: [&str; 3] = ["dataset", "vectors", "out"];

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    /// Directory with `ent_ids_*`, `triples_*`, optional `rel_ids_*` and
    /// `ref_ent_ids`.
    pub dataset: PathBuf,
    /// Word-vector file for name features. When unset, the dataset's own
    /// `name_vectors.txt` is used if present, otherwise seeded random vectors.
    pub vectors: Option<PathBuf>,
    pub out: PathBuf,
    pub train: TrainConfig,
}

#[derive(Serialize, Deserialize)]
struct RunKeys {
    #[serde(default)]
    dataset: PathBuf,
    vectors: Option<PathBuf>,
    #[serde(default = "default_out")]
    out: PathBuf,
}

fn default_out() -> PathBuf {
    PathBuf::from("runs/latest")
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            dataset: PathBuf::new(),
            vectors: None,
            out: default_out(),
            train: TrainConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> anyhow::Result<Self> {
        let mut table: toml::Table = text.parse()?;
        let mut own = toml::Table::new();
        for key in RUN_KEYS {
            if let Some(v) = table.remove(key) {
                own.insert(key.to_string(), v);
            }
        }
        let keys: RunKeys = own.try_into()?;
        let train = TrainConfig::from_toml(&toml::to_string(&table)?)?;
        Ok(RunConfig {
            dataset: keys.dataset,
            vectors: keys.vectors,
            out: keys.out,
            train,
        })
    }

    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text =
            std::fs::read_to_string(path).map_err(|e| anyhow::anyhow!("cannot read config {}: {e}", path.display()))?;
        Self::from_toml(&text).map_err(|e| anyhow::anyhow!("{}: {e}", path.display()))
    }

    /// Canonical form: run keys first, then the training table.
    pub fn to_toml(&self) -> String {
        let keys = RunKeys {
            dataset: self.dataset.clone(),
            vectors: self.vectors.clone(),
            out: self.out.clone(),
        };
        let mut text = toml::to_string(&keys).expect("paths serialize");
        text.push_str(&self.train.to_toml());
        text
    }

    pub fn vectors_path(&self) -> Option<PathBuf> {
        self.vectors.clone().or_else(|| {
            let p = self.dataset.join(triplealign::synth::VECTORS_FILE);
            p.exists().then_some(p)
        })
    }
}
