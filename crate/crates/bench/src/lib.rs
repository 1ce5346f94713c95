//! Criterion benchmarks for the detector stages; see `benches/`.
