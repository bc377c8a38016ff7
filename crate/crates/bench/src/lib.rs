//! Criterion benchmarks for the hot paths in `nppx-core`; see `benches/`.
