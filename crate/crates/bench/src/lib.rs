//! Criterion benchmarks for the simulation core; see `benches/sim.rs`.
