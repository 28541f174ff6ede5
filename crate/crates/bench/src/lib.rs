//! Criterion benchmarks for the counting pipeline live in `benches/`.
