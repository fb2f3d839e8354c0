//! Criterion benchmarks for the qpoisson pipeline; see `benches/pipeline.rs`.
