//! Criterion benchmarks for `noon-core`; see `benches/`.
