//! Synthetic alignment tasks in the DBP15K file layout.
//!
//! The target graph is an id-permuted copy of the source with a fraction of
//! its triples dropped or rewired. Both sides get unrelated entity names and
//! independent random name vectors, so alignment has to come from structure
//! and seeds alone.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{AlignError, Result};
use crate::kg::Triple;

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub n_entities: usize,
    pub n_relations: usize,
    pub n_triples: usize,
    /// Fraction of source triples that are dropped or rewired in the target.
    pub noise: f64,
    pub seed: u64,
    /// Width of the emitted name vectors.
    pub dim: usize,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_entities: 200,
            n_relations: 20,
            n_triples: 600,
            noise: 0.0,
            seed: 0,
            dim: 300,
        }
    }
}

pub const VECTORS_FILE: &str = "name_vectors.txt";

#[derive(Debug, Clone)]
pub struct SynthPair {
    pub config: SynthConfig,
    pub source_triples: Vec<Triple>,
    pub target_triples: Vec<Triple>,
    /// Source entity `i` is target entity `entity_map[i]`.
    pub entity_map: Vec<usize>,
}

fn random_triple(rng: &mut ChaCha8Rng, n: usize, k: usize) -> Triple {
    let h = rng.random_range(0..n);
    let mut t = rng.random_range(0..n);
    if n > 1 {
        while t == h {
            t = rng.random_range(0..n);
        }
    }
    Triple::new(h, rng.random_range(0..k), t)
}

pub fn generate(cfg: &SynthConfig) -> Result<SynthPair> {
    let (n, k, m) = (cfg.n_entities, cfg.n_relations, cfg.n_triples);
    if n == 0 || k == 0 || m == 0 || cfg.dim == 0 {
        return Err(AlignError::Config("synthetic sizes must be positive".into()));
    }
    if !(0.0..1.0).contains(&cfg.noise) {
        return Err(AlignError::Config(format!(
            "noise must lie in [0, 1), got {}",
            cfg.noise
        )));
    }
    let capacity = if n > 1 { n * (n - 1) * k } else { k };
    if m > capacity {
        return Err(AlignError::Config(format!(
            "{m} distinct triples do not fit {n} entities and {k} relations"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    // a random spanning tree first, so no entity is isolated
    let mut seen = HashSet::with_capacity(m);
    let mut source = Vec::with_capacity(m);
    for child in 1..n {
        if source.len() == m {
            break;
        }
        let parent = rng.random_range(0..child);
        let r = rng.random_range(0..k);
        let t = if rng.random_bool(0.5) {
            Triple::new(parent, r, child)
        } else {
            Triple::new(child, r, parent)
        };
        seen.insert(t);
        source.push(t);
    }
    while source.len() < m {
        let t = random_triple(&mut rng, n, k);
        if seen.insert(t) {
            source.push(t);
        }
    }

    let mut entity_map: Vec<usize> = (0..n).collect();
    entity_map.shuffle(&mut rng);
    let mut relation_map: Vec<usize> = (0..k).collect();
    relation_map.shuffle(&mut rng);

    let n_noisy = (cfg.noise * m as f64).round() as usize;
    let mut order: Vec<usize> = (0..m).collect();
    order.shuffle(&mut rng);
    let noisy: HashSet<usize> = order.into_iter().take(n_noisy).collect();

    let mut target_seen = HashSet::with_capacity(m);
    let mut target = Vec::with_capacity(m);
    for (i, t) in source.iter().enumerate() {
        let mut mapped = Triple::new(entity_map[t.head], relation_map[t.relation], entity_map[t.tail]);
        if noisy.contains(&i) {
            if rng.random_bool(0.5) {
                continue;
            }
            mapped.tail = rng.random_range(0..n);
        }
        if target_seen.insert(mapped) {
            target.push(mapped);
        }
    }
    target.shuffle(&mut rng);

    Ok(SynthPair {
        config: cfg.clone(),
        source_triples: source,
        target_triples: target,
        entity_map,
    })
}

pub fn source_name(id: usize) -> String {
    format!("k1e{id}")
}

pub fn target_name(id: usize) -> String {
    format!("k2e{id}")
}

impl SynthPair {
    /// Writes `ent_ids_*`, `rel_ids_*`, `triples_*`, `ref_ent_ids` and the
    /// name-vector file. Target raw ids are offset past the source ids.
    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| AlignError::io(dir, e))?;
        let n = self.config.n_entities;
        let k = self.config.n_relations;
        let put = |name: &str, body: String| {
            let path = dir.join(name);
            fs::write(&path, body).map_err(|e| AlignError::io(path, e))
        };

        let mut ents1 = String::new();
        let mut ents2 = String::new();
        for i in 0..n {
            let _ = writeln!(ents1, "{i}\thttp://synth.kg1/resource/{}", source_name(i));
            let _ = writeln!(ents2, "{}\thttp://synth.kg2/resource/{}", n + i, target_name(i));
        }
        put("ent_ids_1", ents1)?;
        put("ent_ids_2", ents2)?;

        let mut rels1 = String::new();
        let mut rels2 = String::new();
        for r in 0..k {
            let _ = writeln!(rels1, "{r}\thttp://synth.kg1/property/p{r}");
            let _ = writeln!(rels2, "{}\thttp://synth.kg2/property/q{r}", k + r);
        }
        put("rel_ids_1", rels1)?;
        put("rel_ids_2", rels2)?;

        let mut t1 = String::new();
        for t in &self.source_triples {
            let _ = writeln!(t1, "{}\t{}\t{}", t.head, t.relation, t.tail);
        }
        put("triples_1", t1)?;
        let mut t2 = String::new();
        for t in &self.target_triples {
            let _ = writeln!(t2, "{}\t{}\t{}", n + t.head, k + t.relation, n + t.tail);
        }
        put("triples_2", t2)?;

        let mut links = String::new();
        for (i, &j) in self.entity_map.iter().enumerate() {
            let _ = writeln!(links, "{i}\t{}", n + j);
        }
        put(crate::kg::LINKS_FILE, links)?;

        let mut rng = ChaCha8Rng::seed_from_u64(self.config.seed ^ 0x9e37_79b9_7f4a_7c15);
        let normal = Normal::new(0.0, 1.0 / (self.config.dim as f64).sqrt()).expect("valid std dev");
        let mut vectors = String::new();
        for name in (0..n).map(source_name).chain((0..n).map(target_name)) {
            vectors.push_str(&name);
            for _ in 0..self.config.dim {
                let v: f64 = normal.sample(&mut rng);
                let _ = write!(vectors, " {v}");
            }
            vectors.push('\n');
        }
        put(VECTORS_FILE, vectors)
    }
}
