//! Fixtures shared by the benchmarks.

use ef_lab_core::rng::{standard_normal, stream, Stream};

/// Deterministic standard Gaussian vector.
pub fn gaussian(dim: usize, seed: u64) -> Vec<f64> {
    standard_normal(dim, &mut stream(seed, Stream::Data))
}
