//! End-to-end forward pass for one knowledge graph.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::decoder::{self, CycleMode, NeighborIndex};
use crate::encoder;
use crate::error::{AlignError, Result};
use crate::kg::{EmbeddingMatrix, ExpandedGraph};
use crate::ontology::{self, TripleEnsemble};
use crate::params::{BoundParams, ParameterStore};
use crate::tape::{Tape, Var};
use crate::triple::{self, AttentionOutput, SemanticTriples, TripleIndex};

pub const EMBED_SOURCE: &str = "embed.source";
pub const EMBED_TARGET: &str = "embed.target";

/// Component switches for the ablation variants.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Ablation {
    /// wo-E: drop the global relation feature from the semantic triple.
    pub without_global: bool,
    /// wo-O: drop the ontology path.
    pub without_ontology: bool,
    /// wo-C: decode with a single head/tail pass.
    pub without_cycle: bool,
}

impl Ablation {
    /// Parses `wo-E`, `wo-O` or `wo-C` and switches the matching component off.
    pub fn enable(&mut self, flag: &str) -> Result<()> {
        match flag.trim().to_ascii_lowercase().as_str() {
            "wo-e" => self.without_global = true,
            "wo-o" => self.without_ontology = true,
            "wo-c" => self.without_cycle = true,
            other => {
                return Err(AlignError::Config(format!(
                    "unknown ablation {other:?}; expected wo-E, wo-O or wo-C"
                )))
            }
        }
        Ok(())
    }

    pub fn labels(&self) -> Vec<&'static str> {
        let mut out = Vec::new();
        if self.without_global {
            out.push("wo-E");
        }
        if self.without_ontology {
            out.push("wo-O");
        }
        if self.without_cycle {
            out.push("wo-C");
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelConfig {
    pub entity_dim: usize,
    pub relation_dim: usize,
    pub onto_dim: usize,
    pub depth: usize,
    pub cycle_mode: CycleMode,
    pub ablation: Ablation,
    /// Multiplier on the input embeddings when they enter the parameter
    /// store. Small values let learned seed anchors dominate noisy names.
    pub input_scale: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            entity_dim: 300,
            relation_dim: 100,
            onto_dim: 100,
            depth: 2,
            cycle_mode: CycleMode::Mode2,
            ablation: Ablation::default(),
            input_scale: 0.01,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.depth == 0 {
            return Err(AlignError::Config("depth must be at least 1".into()));
        }
        if self.entity_dim == 0 || self.relation_dim == 0 || self.onto_dim == 0 {
            return Err(AlignError::Config("dimensions must be positive".into()));
        }
        if !(self.input_scale.is_finite() && self.input_scale > 0.0) {
            return Err(AlignError::Config(format!(
                "input_scale must be positive, got {}",
                self.input_scale
            )));
        }
        Ok(())
    }

    /// Width of an ensemble triple, `d_r + 2d_o`.
    pub fn triple_dim(&self) -> usize {
        self.relation_dim + 2 * self.onto_dim
    }

    /// The decoder schedule actually run; wo-C forces mode 1.
    pub fn effective_mode(&self) -> CycleMode {
        if self.ablation.without_cycle {
            CycleMode::Mode1
        } else {
            self.cycle_mode
        }
    }
}

/// Registers every shared (non-embedding) parameter.
pub fn register_parameters(store: &mut ParameterStore, cfg: &ModelConfig, seed: u64) {
    let (d_e, d_r, d_o) = (cfg.entity_dim, cfg.relation_dim, cfg.onto_dim);
    encoder::register(store, cfg.depth, d_e, seed);
    triple::register(store, d_e, d_r, seed);
    ontology::register(store, d_e, d_r, d_o, seed);
    decoder::register(store, d_e, cfg.triple_dim(), seed);
}

/// Builds the full store: shared parameters plus both entity tables.
pub fn init_parameters(
    cfg: &ModelConfig,
    source: &EmbeddingMatrix,
    target: &EmbeddingMatrix,
    seed: u64,
) -> Result<ParameterStore> {
    cfg.validate()?;
    for (label, emb) in [("source", source), ("target", target)] {
        if emb.dim() != cfg.entity_dim {
            return Err(AlignError::Config(format!(
                "{label} embeddings have dimension {}, model expects {}",
                emb.dim(),
                cfg.entity_dim
            )));
        }
    }
    let mut store = ParameterStore::new();
    register_parameters(&mut store, cfg, seed);
    store.insert(EMBED_SOURCE, source.values() * cfg.input_scale);
    store.insert(EMBED_TARGET, target.values() * cfg.input_scale);
    Ok(store)
}

/// Precomputed indices for one expanded graph.
#[derive(Debug, Clone)]
pub struct GraphContext {
    pub graph: ExpandedGraph,
    pub index: TripleIndex,
    pub neighbors: NeighborIndex,
}

impl GraphContext {
    pub fn new(graph: ExpandedGraph) -> Self {
        let index = TripleIndex::from_graph(&graph);
        let neighbors = NeighborIndex::from_adjacency(graph.norm_adjacency());
        GraphContext {
            graph,
            index,
            neighbors,
        }
    }

    pub fn entity_count(&self) -> usize {
        self.graph.entity_count()
    }
}

/// Every intermediate of one forward pass.
pub struct ForwardPass {
    pub encoded: Var,
    pub semantic: SemanticTriples,
    pub fused: TripleEnsemble,
    pub stages: Vec<AttentionOutput>,
    pub gat: AttentionOutput,
    /// Final entity representation `X_f`.
    pub output: Var,
}

pub fn forward(
    tape: &mut Tape,
    ctx: &GraphContext,
    x0: Var,
    params: &BoundParams,
    cfg: &ModelConfig,
) -> Result<ForwardPass> {
    let (rows, cols) = tape.shape(x0);
    if rows != ctx.entity_count() || cols != cfg.entity_dim {
        return Err(AlignError::Shape {
            op: "forward",
            detail: format!(
                "entity matrix is {rows}×{cols}, graph needs {}×{}",
                ctx.entity_count(),
                cfg.entity_dim
            ),
        });
    }
    let encoded = encoder::encode_topology(tape, x0, ctx.graph.norm_adjacency(), cfg.depth, params)?;
    let semantic = triple::semantic_triples(tape, &ctx.index, encoded, params, !cfg.ablation.without_global);
    let fused = ontology::fuse(
        tape,
        &ctx.index,
        encoded,
        semantic.ensemble,
        params,
        cfg.onto_dim,
        !cfg.ablation.without_ontology,
    );
    let width = tape.shape(fused.ensemble).1;
    if width != cfg.triple_dim() {
        return Err(AlignError::Shape {
            op: "ensemble triple",
            detail: format!("width {width}, expected {}", cfg.triple_dim()),
        });
    }
    let stages = decoder::cycle_co_enhance(tape, fused.ensemble, encoded, &ctx.index, cfg.effective_mode(), params);
    let decoded = stages.last().map_or(encoded, |s| s.output);
    let gat = decoder::neighbor_reaggregate(tape, decoded, &ctx.neighbors, params);
    let output = gat.output;
    Ok(ForwardPass {
        encoded,
        semantic,
        fused,
        stages,
        gat,
        output,
    })
}

/// Inference-only pass over both graphs, returning `(X_f source, X_f target)`.
pub fn embed_pair(
    params: &ParameterStore,
    cfg: &ModelConfig,
    source: &GraphContext,
    target: &GraphContext,
) -> Result<(Array2<f64>, Array2<f64>)> {
    let mut tape = Tape::new();
    let bound = params.bind(&mut tape);
    let src = forward(&mut tape, source, bound.var(EMBED_SOURCE), &bound, cfg)?.output;
    let tgt = forward(&mut tape, target, bound.var(EMBED_TARGET), &bound, cfg)?.output;
    Ok((tape.value(src).clone(), tape.value(tgt).clone()))
}
