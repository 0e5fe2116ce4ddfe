#![allow(dead_code)]

use lqropt_core::dare::perturb;
use lqropt_core::instances::random_certified_instance;
use lqropt_core::{classify_gain, DareSolution, Mat, ProblemInstance};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// `count` certified instances with `n` in 2..=5 and `m` in 1..=3.
pub fn certified(seed: u64, count: usize) -> Vec<(ProblemInstance, DareSolution)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let n = rng.random_range(2..=5);
            let m = rng.random_range(1..=3);
            random_certified_instance(n, m, &mut rng, 200).expect("a certified instance within 200 draws")
        })
        .collect()
}

/// Random gain around `center` whose closed loop has radius below `max_rho`.
pub fn stabilizing_near<R: Rng + ?Sized>(
    p: &ProblemInstance,
    center: &Mat,
    radius: f64,
    max_rho: f64,
    rng: &mut R,
) -> Mat {
    let mut r = radius;
    loop {
        let k = perturb(center, r * rng.random::<f64>(), rng);
        if classify_gain(p, &k).unwrap().rho < max_rho {
            return k;
        }
        r *= 0.8;
    }
}
