//! Benchmarks live in `benches/`; run them with `cargo bench -p cfnlab-bench`.

pub use cfnlab;
