//! Instance generators shared by the benchmarks.

use gw_bary::{Coupling, GaugeKind, GmSpace};
use ndarray::{Array1, Array2};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn uniform(n: usize) -> Array1<f64> {
    Array1::from_elem(n, 1.0 / n as f64)
}

pub fn cost(rng: &mut ChaCha8Rng, n: usize, m: usize) -> Array2<f64> {
    Array2::from_shape_fn((n, m), |_| rng.random_range(0.0..1.0))
}

/// Uniform cloud in the unit cube with a squared-Euclidean gauge.
pub fn cloud(rng: &mut ChaCha8Rng, n: usize, d: usize) -> GmSpace {
    let c = Array2::from_shape_fn((n, d), |_| rng.random_range(0.0..1.0));
    GmSpace::from_points(c, GaugeKind::SqEuclid, None).expect("finite points")
}

/// A random permutation plan between uniform measures of size `n`.
pub fn permutation_plan(rng: &mut ChaCha8Rng, n: usize) -> Coupling {
    let mut p: Vec<usize> = (0..n).collect();
    p.shuffle(rng);
    Coupling::from_permutation(&p, uniform(n).view()).expect("valid permutation")
}
