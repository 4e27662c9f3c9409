//! Knowledge-graph loading, relation expansion and entity initialization.
//!
//! On disk a dataset pair follows the DBP15K layout: `ent_ids_{1,2}`
//! (`id<TAB>uri`), `triples_{1,2}` (`h<TAB>r<TAB>t`), optional
//! `rel_ids_{1,2}` (`id<TAB>uri`) and `ref_ent_ids` (`id1<TAB>id2`). Raw ids in
//! these files are global across both sides; every in-memory structure uses
//! dense per-graph ids instead.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fmt;
use std::fs;
use std::path::Path;
use std::sync::Arc;

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{AlignError, Result};
use crate::sparse::{normalized_adjacency, CsrMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Triple {
    pub head: usize,
    pub relation: usize,
    pub tail: usize,
}

impl Triple {
    pub fn new(head: usize, relation: usize, tail: usize) -> Self {
        Triple { head, relation, tail }
    }
}

impl fmt::Display for Triple {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}, {})", self.head, self.relation, self.tail)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Side {
    Source,
    Target,
}

impl Side {
    fn suffix(self) -> &'static str {
        match self {
            Side::Source => "1",
            Side::Target => "2",
        }
    }
}

/// One side of an alignment task: entities, relations and relational triples.
#[derive(Debug, Clone)]
pub struct KnowledgeGraph {
    entity_uris: Vec<String>,
    entity_names: Vec<String>,
    raw_ids: Vec<u64>,
    dense_ids: HashMap<u64, usize>,
    relation_count: usize,
    triples: Vec<Triple>,
}

impl KnowledgeGraph {
    /// Builds a graph from dense ids. `uris[i]` is the URI of entity `i`.
    /// Duplicate triples are dropped; out-of-range ids are rejected.
    pub fn new(uris: Vec<String>, relation_count: usize, triples: Vec<Triple>) -> Result<Self> {
        if uris.is_empty() {
            return Err(AlignError::Validation(
                "a knowledge graph needs at least one entity".into(),
            ));
        }
        let n = uris.len();
        let mut seen = HashSet::with_capacity(triples.len());
        let mut unique = Vec::with_capacity(triples.len());
        for t in triples {
            if t.head >= n || t.tail >= n || t.relation >= relation_count {
                return Err(AlignError::Validation(format!(
                    "triple {t} out of range for {n} entities and {relation_count} relations"
                )));
            }
            if seen.insert(t) {
                unique.push(t);
            }
        }
        let raw_ids: Vec<u64> = (0..n as u64).collect();
        let dense_ids = raw_ids.iter().map(|&r| (r, r as usize)).collect();
        let entity_names = uris.iter().map(|u| entity_name(u)).collect();
        Ok(KnowledgeGraph {
            entity_uris: uris,
            entity_names,
            raw_ids,
            dense_ids,
            relation_count,
            triples: unique,
        })
    }

    pub fn entity_count(&self) -> usize {
        self.entity_uris.len()
    }

    pub fn relation_count(&self) -> usize {
        self.relation_count
    }

    pub fn triples(&self) -> &[Triple] {
        &self.triples
    }

    pub fn entity_uri(&self, id: usize) -> &str {
        &self.entity_uris[id]
    }

    /// Normalized entity name: the last URI segment, lowercased.
    pub fn entity_name(&self, id: usize) -> &str {
        &self.entity_names[id]
    }

    /// Id of entity `id` as written in the dataset files.
    pub fn raw_id(&self, id: usize) -> u64 {
        self.raw_ids[id]
    }

    pub fn dense_id(&self, raw: u64) -> Option<usize> {
        self.dense_ids.get(&raw).copied()
    }

    /// Returns a copy with entities relabeled by `perm` (old id → new id).
    pub fn permuted(&self, perm: &[usize]) -> KnowledgeGraph {
        let n = self.entity_count();
        assert_eq!(perm.len(), n);
        let mut uris = vec![String::new(); n];
        let mut names = vec![String::new(); n];
        let mut raw = vec![0u64; n];
        for old in 0..n {
            uris[perm[old]] = self.entity_uris[old].clone();
            names[perm[old]] = self.entity_names[old].clone();
            raw[perm[old]] = self.raw_ids[old];
        }
        let dense_ids = raw.iter().enumerate().map(|(i, &r)| (r, i)).collect();
        let triples = self
            .triples
            .iter()
            .map(|t| Triple::new(perm[t.head], t.relation, perm[t.tail]))
            .collect();
        KnowledgeGraph {
            entity_uris: uris,
            entity_names: names,
            raw_ids: raw,
            dense_ids,
            relation_count: self.relation_count,
            triples,
        }
    }
}

/// Last path segment of a URI, lowercased.
pub fn entity_name(uri: &str) -> String {
    let trimmed = uri.trim_end_matches('/');
    let last = trimmed.rsplit(['/', '#']).next().unwrap_or(trimmed);
    last.to_lowercase()
}

/// Splits a name on `_` and every other non-alphanumeric character.
pub fn tokenize(name: &str) -> Vec<String> {
    name.split(|c: char| !c.is_alphanumeric())
        .filter(|s| !s.is_empty())
        .map(str::to_lowercase)
        .collect()
}

fn read_lines(path: &Path) -> Result<Vec<(usize, String)>> {
    let text = fs::read_to_string(path).map_err(|e| AlignError::io(path, e))?;
    Ok(text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim_end_matches('\r').to_string()))
        .filter(|(_, l)| !l.trim().is_empty())
        .collect())
}

fn parse_id(path: &Path, line: usize, field: &str) -> Result<u64> {
    field
        .trim()
        .parse()
        .map_err(|_| AlignError::parse(path, line, format!("expected an integer id, found {field:?}")))
}

fn parse_id_map(path: &Path) -> Result<(Vec<u64>, Vec<String>)> {
    let mut ids = Vec::new();
    let mut uris = Vec::new();
    let mut seen = HashSet::new();
    for (line, text) in read_lines(path)? {
        let mut parts = text.splitn(2, '\t');
        let id = parse_id(path, line, parts.next().unwrap_or(""))?;
        let uri = parts.next().unwrap_or("").trim().to_string();
        if !seen.insert(id) {
            return Err(AlignError::parse(path, line, format!("duplicate id {id}")));
        }
        ids.push(id);
        uris.push(uri);
    }
    Ok((ids, uris))
}

/// Loads one side of a DBP15K-format dataset directory.
pub fn load_kg(dir: &Path, side: Side) -> Result<KnowledgeGraph> {
    let ent_path = dir.join(format!("ent_ids_{}", side.suffix()));
    let triple_path = dir.join(format!("triples_{}", side.suffix()));
    let rel_path = dir.join(format!("rel_ids_{}", side.suffix()));

    let (raw_ids, uris) = parse_id_map(&ent_path)?;
    if raw_ids.is_empty() {
        return Err(AlignError::Validation(format!(
            "{} lists no entities",
            ent_path.display()
        )));
    }
    let dense_ids: HashMap<u64, usize> = raw_ids.iter().enumerate().map(|(i, &r)| (r, i)).collect();

    let mut raw_triples = Vec::new();
    for (line, text) in read_lines(&triple_path)? {
        let fields: Vec<&str> = text.split('\t').collect();
        if fields.len() != 3 {
            return Err(AlignError::parse(
                &triple_path,
                line,
                "expected head<TAB>relation<TAB>tail",
            ));
        }
        let h = parse_id(&triple_path, line, fields[0])?;
        let r = parse_id(&triple_path, line, fields[1])?;
        let t = parse_id(&triple_path, line, fields[2])?;
        for e in [h, t] {
            if !dense_ids.contains_key(&e) {
                return Err(AlignError::parse(&triple_path, line, format!("unknown entity id {e}")));
            }
        }
        raw_triples.push((line, h, r, t));
    }

    let relation_ids: Vec<u64> = if rel_path.exists() {
        parse_id_map(&rel_path)?.0
    } else {
        raw_triples
            .iter()
            .map(|&(_, _, r, _)| r)
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect()
    };
    let relation_dense: HashMap<u64, usize> = relation_ids.iter().enumerate().map(|(i, &r)| (r, i)).collect();

    let mut seen = HashSet::with_capacity(raw_triples.len());
    let mut triples = Vec::with_capacity(raw_triples.len());
    for (line, h, r, t) in raw_triples {
        let relation = *relation_dense
            .get(&r)
            .ok_or_else(|| AlignError::parse(&triple_path, line, format!("unknown relation id {r}")))?;
        let triple = Triple::new(dense_ids[&h], relation, dense_ids[&t]);
        if seen.insert(triple) {
            triples.push(triple);
        }
    }

    let entity_names = uris.iter().map(|u| entity_name(u)).collect();
    Ok(KnowledgeGraph {
        entity_uris: uris,
        entity_names,
        raw_ids,
        dense_ids,
        relation_count: relation_ids.len(),
        triples,
    })
}

/// A knowledge graph with reverse and self relations added.
///
/// Relation `r` keeps its id, its reverse is `r + k` and the self relation is
/// `2k`, where `k` is the base relation count.
#[derive(Debug, Clone)]
pub struct ExpandedGraph {
    base: KnowledgeGraph,
    triples: Vec<Triple>,
    norm_adjacency: Arc<CsrMatrix>,
}

impl ExpandedGraph {
    pub fn base(&self) -> &KnowledgeGraph {
        &self.base
    }

    pub fn entity_count(&self) -> usize {
        self.base.entity_count()
    }

    pub fn relation_count(&self) -> usize {
        2 * self.base.relation_count() + 1
    }

    pub fn self_relation(&self) -> usize {
        2 * self.base.relation_count()
    }

    pub fn triples(&self) -> &[Triple] {
        &self.triples
    }

    pub fn norm_adjacency(&self) -> &Arc<CsrMatrix> {
        &self.norm_adjacency
    }
}

pub fn expand_relations(kg: KnowledgeGraph) -> ExpandedGraph {
    let k = kg.relation_count();
    let n = kg.entity_count();
    let mut seen = HashSet::with_capacity(2 * kg.triples().len() + n);
    let mut triples = Vec::with_capacity(2 * kg.triples().len() + n);
    let candidates = kg
        .triples()
        .iter()
        .flat_map(|t| [*t, Triple::new(t.tail, t.relation + k, t.head)])
        .chain((0..n).map(|e| Triple::new(e, 2 * k, e)));
    for t in candidates {
        if seen.insert(t) {
            triples.push(t);
        }
    }
    let edges: Vec<(usize, usize)> = triples.iter().map(|t| (t.head, t.tail)).collect();
    let norm_adjacency = Arc::new(normalized_adjacency(&edges, n));
    ExpandedGraph {
        base: kg,
        triples,
        norm_adjacency,
    }
}

/// Train/test split of the gold alignment links, in dense ids
/// `(source, target)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SeedSet {
    pub train_pairs: Vec<(usize, usize)>,
    pub test_pairs: Vec<(usize, usize)>,
    pub ratio: f64,
}

/// Reads `id1<TAB>id2` links, shuffles them under `rng_seed` and keeps the
/// first `⌊ratio·L⌋` for training.
pub fn load_seeds(
    path: &Path,
    source: &KnowledgeGraph,
    target: &KnowledgeGraph,
    ratio: f64,
    rng_seed: u64,
) -> Result<SeedSet> {
    let mut links = Vec::new();
    let mut seen_src = HashSet::new();
    let mut seen_tgt = HashSet::new();
    for (line, text) in read_lines(path)? {
        let fields: Vec<&str> = text.split('\t').collect();
        if fields.len() != 2 {
            return Err(AlignError::parse(path, line, "expected id1<TAB>id2"));
        }
        let a = parse_id(path, line, fields[0])?;
        let b = parse_id(path, line, fields[1])?;
        let s = source
            .dense_id(a)
            .ok_or_else(|| AlignError::parse(path, line, format!("id {a} is not a source entity")))?;
        let t = target
            .dense_id(b)
            .ok_or_else(|| AlignError::parse(path, line, format!("id {b} is not a target entity")))?;
        if !seen_src.insert(s) || !seen_tgt.insert(t) {
            return Err(AlignError::parse(
                path,
                line,
                format!("duplicate link involving {a} or {b}"),
            ));
        }
        links.push((s, t));
    }
    split_links(links, ratio, rng_seed)
}

pub fn split_links(mut links: Vec<(usize, usize)>, ratio: f64, rng_seed: u64) -> Result<SeedSet> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(AlignError::Config(format!(
            "seed ratio must lie in (0, 1), got {ratio}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    links.shuffle(&mut rng);
    let n_train = (ratio * links.len() as f64).floor() as usize;
    let test_pairs = links.split_off(n_train);
    Ok(SeedSet {
        train_pairs: links,
        test_pairs,
        ratio,
    })
}

/// Entity, relation and triple counts of one loaded side.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GraphStats {
    pub entities: usize,
    pub relations: usize,
    pub triples: usize,
}

impl GraphStats {
    pub fn of(kg: &KnowledgeGraph) -> Self {
        GraphStats {
            entities: kg.entity_count(),
            relations: kg.relation_count(),
            triples: kg.triples().len(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub source: GraphStats,
    pub target: GraphStats,
    pub links: usize,
}

/// Loads both sides and the link file of a dataset directory and counts
/// them. Links are validated exactly as [`load_seeds`] does.
pub fn dataset_stats(dir: &Path) -> Result<DatasetStats> {
    let source = load_kg(dir, Side::Source)?;
    let target = load_kg(dir, Side::Target)?;
    let seeds = load_seeds(&dir.join(LINKS_FILE), &source, &target, 0.5, 0)?;
    Ok(DatasetStats {
        source: GraphStats::of(&source),
        target: GraphStats::of(&target),
        links: seeds.train_pairs.len() + seeds.test_pairs.len(),
    })
}

/// Name of the gold link file inside a dataset directory.
pub const LINKS_FILE: &str = "ref_ent_ids";

/// Initial entity features, one row per entity.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix(Array2<f64>);

impl EmbeddingMatrix {
    pub fn new(values: Array2<f64>) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(AlignError::Validation("embedding matrix has non-finite entries".into()));
        }
        Ok(EmbeddingMatrix(values))
    }

    pub fn dim(&self) -> usize {
        self.0.ncols()
    }

    pub fn rows(&self) -> usize {
        self.0.nrows()
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.0
    }

    pub fn into_inner(self) -> Array2<f64> {
        self.0
    }
}

pub(crate) fn fnv1a(text: &str) -> u64 {
    text.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| {
        (h ^ b as u64).wrapping_mul(0x0100_0000_01b3)
    })
}

fn fallback_vector(token: &str, dim: usize, norm: f64, rng_seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed ^ fnv1a(token));
    let v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect();
    let len = v.iter().map(|x| x * x).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);
    v.into_iter().map(|x| x * norm / len).collect()
}

/// Reads whitespace-separated `token f1 … f_dim` lines, keeping only the
/// tokens in `wanted`. A two-field first line (word2vec header) is skipped.
pub fn read_word_vectors(path: &Path, dim: usize, wanted: &HashSet<String>) -> Result<HashMap<String, Vec<f64>>> {
    let text = fs::read_to_string(path).map_err(|e| AlignError::io(path, e))?;
    let mut out = HashMap::new();
    for (i, line) in text.lines().enumerate() {
        let mut fields = line.split_whitespace();
        let Some(token) = fields.next() else { continue };
        let rest: Vec<&str> = fields.collect();
        if i == 0 && rest.len() == 1 {
            continue;
        }
        if rest.len() != dim {
            return Err(AlignError::parse(
                path,
                i + 1,
                format!("vector has {} components, expected {dim}", rest.len()),
            ));
        }
        let token = token.to_lowercase();
        if !wanted.contains(&token) || out.contains_key(&token) {
            continue;
        }
        let v = rest
            .iter()
            .map(|f| f.parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| AlignError::parse(path, i + 1, e.to_string()))?;
        out.insert(token, v);
    }
    Ok(out)
}

/// Averages the word vectors of each entity's name tokens. Tokens missing
/// from the vector file get a seeded random vector whose norm is the mean
/// norm of the vectors that were found (1 when none were). Entities whose
/// name has no tokens use their full URI as a single token.
pub fn init_embeddings(
    kg: &KnowledgeGraph,
    vectors_path: Option<&Path>,
    dim: usize,
    rng_seed: u64,
) -> Result<EmbeddingMatrix> {
    if dim == 0 {
        return Err(AlignError::Config("embedding dimension must be positive".into()));
    }
    let tokens: Vec<Vec<String>> = (0..kg.entity_count())
        .map(|e| {
            let t = tokenize(kg.entity_name(e));
            if t.is_empty() {
                vec![kg.entity_uri(e).to_string()]
            } else {
                t
            }
        })
        .collect();
    let wanted: HashSet<String> = tokens.iter().flatten().cloned().collect();
    let vocab = match vectors_path {
        Some(p) => read_word_vectors(p, dim, &wanted)?,
        None => HashMap::new(),
    };
    let norm = if vocab.is_empty() {
        1.0
    } else {
        let mut keys: Vec<&String> = vocab.keys().collect();
        keys.sort();
        keys.iter()
            .map(|k| vocab[*k].iter().map(|x| x * x).sum::<f64>().sqrt())
            .sum::<f64>()
            / keys.len() as f64
    };

    let mut values = Array2::zeros((kg.entity_count(), dim));
    for (e, toks) in tokens.iter().enumerate() {
        let mut row = values.row_mut(e);
        for tok in toks {
            match vocab.get(tok) {
                Some(v) => row.iter_mut().zip(v).for_each(|(r, x)| *r += x),
                None => row
                    .iter_mut()
                    .zip(fallback_vector(tok, dim, norm, rng_seed))
                    .for_each(|(r, x)| *r += x),
            }
        }
        row /= toks.len() as f64;
    }
    EmbeddingMatrix::new(values)
}
