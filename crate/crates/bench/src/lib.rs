//! Fixtures shared by the benchmarks.

use magnitude::{Metric, PointCloud};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// `n` uniform points in `[0, side)^dim`.
pub fn uniform_cloud(n: usize, dim: usize, side: f64, seed: u64) -> PointCloud {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let coords = (0..n * dim).map(|_| rng.random_range(0.0..side)).collect();
    PointCloud::new(coords, dim, Metric::L2).expect("finite coordinates")
}
