//! Cross-lingual entity alignment with ontology-enhanced triple attention.
//!
//! The pipeline encodes each knowledge graph with a highway-gated GCN, builds
//! one representation per relational triple from role-wise interaction
//! attention, a relation-level global feature and a latent ontology-pair view,
//! decodes triples back to entities through alternating head/tail attention
//! and a final graph-attention layer, and trains both graphs jointly with an
//! L1 margin loss. An optional bootstrapping mode adds mutual nearest
//! neighbors to the training pairs as training proceeds.
//!
//! Everything runs on [`tape::Tape`], a small reverse-mode autodiff over
//! dense `f64` matrices.

pub mod checkpoint;
pub mod decoder;
pub mod encoder;
pub mod error;
pub mod eval;
pub mod kg;
pub mod model;
pub mod ontology;
pub mod optim;
pub mod params;
pub mod sparse;
pub mod synth;
pub mod tape;
pub mod trainer;
pub mod triple;

pub use checkpoint::Checkpoint;
pub use decoder::{CycleMode, EntityRole};
pub use error::{AlignError, Result};
pub use eval::{Direction, MetricsReport};
pub use kg::{EmbeddingMatrix, ExpandedGraph, KnowledgeGraph, SeedSet, Side, Triple};
pub use model::{Ablation, GraphContext, ModelConfig};
pub use params::ParameterStore;
pub use trainer::{AlignmentState, TrainConfig, Trainer, Variant};
