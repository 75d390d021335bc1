//! Criterion benchmarks for muntzlab; see `benches/`.
