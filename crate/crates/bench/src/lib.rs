//! Criterion benchmarks for the training step; see `benches/forward.rs`.
