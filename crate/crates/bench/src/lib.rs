//! Shared fixtures for the engine benchmarks.

pub use ideal_core::synthetic::{gaussian_blobs, BlobSpec};
