//! Benchmarks for the online conformal learners; see `benches/`.
