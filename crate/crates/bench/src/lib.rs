//! Criterion benchmarks for the pipeline, visual prompts and metrics; see
//! `benches/`.
