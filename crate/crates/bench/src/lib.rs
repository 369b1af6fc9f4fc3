//! Criterion benchmarks for the change-point engine; see `benches/`.
