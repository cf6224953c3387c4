//! Benchmarks only; run with `cargo bench -p semlens-bench`.
