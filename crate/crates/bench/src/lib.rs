//! Criterion benchmarks for the mismatch metrics; see `benches/`.
