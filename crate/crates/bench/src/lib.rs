//! Benchmark-only crate; see benches/extraction.rs.
