//! Fixtures for the solver benchmarks in `benches/`.

use lqropt_core::instances::random_certified_instance;
use lqropt_core::{DareSolution, Mat, ProblemInstance};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// A certified random instance with `n` states and `m` inputs, fixed by `seed`.
pub fn fixture(n: usize, m: usize, seed: u64) -> (ProblemInstance, DareSolution) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    random_certified_instance(n, m, &mut rng, 1000).expect("a certified instance within 1000 draws")
}

/// Stabilizing gain halfway between zero and the optimum.
pub fn midpoint_gain(star: &DareSolution) -> Mat {
    &star.kstar * 0.5
}
