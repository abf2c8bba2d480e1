//! Criterion benchmarks for the harmonic-balance engine live in `benches/`.
