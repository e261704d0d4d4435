//! Fixtures shared by the benchmarks.

use pointsift::data::{toy_scene, ToySceneConfig};
use pointsift::{Point3, PointCloud};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// `n` points uniform in the cube `[-1, 1]^3`.
pub fn uniform_points(n: usize, seed: u64) -> Vec<Point3> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)]).collect()
}

/// A labeled toy scene of `points` points.
pub fn scene(points: usize, seed: u64) -> PointCloud {
    let cfg = ToySceneConfig {
        points,
        ..ToySceneConfig::default()
    };
    toy_scene(&cfg, seed).expect("valid toy scene").cloud
}
