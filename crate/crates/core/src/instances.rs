//! Built-in and randomly generated problem instances.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::dare::{solve_dare_from_zero, DareSolution};
use crate::lqr::ProblemInstance;
use crate::matlin::{spectral_radius, sym_eig, symmetrize, Mat};

/// Indefinite state penalty of the 5-state benchmark, row-major.
#[rustfmt::skip]
pub const PAPER_SEC5_Q: [f64; 25] = [
     1.62370842,  0.36712592, -1.31209102,  1.97803823, -0.49297266,
     0.36712592,  2.21878741,  0.47525552, -1.07142839,  1.04343275,
    -1.31209102,  0.47525552,  1.90887732, -0.83057818,  0.3818043,
     1.97803823, -1.07142839, -0.83057818,  0.93847322, -0.90779531,
    -0.49297266,  1.04343275,  0.3818043,  -0.90779531, -1.06295748,
];

/// `A = 0.5 I`, `B = I`, `R = I`, `Sigma = I` on five states, with the
/// indefinite [`PAPER_SEC5_Q`].
pub fn paper_sec5() -> ProblemInstance {
    let eye = Mat::identity(5, 5);
    ProblemInstance::new(
        &eye * 0.5,
        eye.clone(),
        Mat::from_row_slice(5, 5, &PAPER_SEC5_Q),
        eye.clone(),
        eye,
    )
    .expect("benchmark instance is valid")
}

fn gaussian<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Mat {
    Mat::from_fn(rows, cols, |_, _| StandardNormal.sample(rng))
}

/// Random orthogonal matrix from the QR factor of a Gaussian matrix.
pub fn random_orthogonal<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Mat {
    let qr = gaussian(n, n, rng).qr();
    let (q, r) = (qr.q(), qr.r());
    let signs = Mat::from_diagonal(&r.diagonal().map(|d| if d < 0.0 { -1.0 } else { 1.0 }));
    q * signs
}

/// Random Gaussian matrix rescaled to spectral radius `rho`.
pub fn random_schur<R: Rng + ?Sized>(n: usize, rho: f64, rng: &mut R) -> Mat {
    loop {
        let a = gaussian(n, n, rng);
        let current = spectral_radius(&a).unwrap_or(0.0);
        if current > 1e-3 {
            return a * (rho / current);
        }
    }
}

/// Random symmetric matrix with eigenvalues drawn from `[lo, hi]`, at least
/// one negative and one positive when `n >= 2`.
pub fn random_mixed_symmetric<R: Rng + ?Sized>(n: usize, lo: f64, hi: f64, rng: &mut R) -> Mat {
    let mut values: Vec<f64> = (0..n).map(|_| rng.random_range(lo..hi)).collect();
    if n >= 2 {
        values[0] = rng.random_range(lo..0.0);
        values[1] = rng.random_range(0.1..hi);
    }
    let u = random_orthogonal(n, rng);
    symmetrize(&(&u * Mat::from_diagonal(&nalgebra::DVector::from_vec(values)) * u.transpose()))
}

/// Random instance for property suites: Schur `A` with `rho(A)` in
/// `[0.3, 0.9]`, Gaussian `B`, mixed-spectrum `Q`, `R = I + 0.1 S` and
/// `Sigma = I`.
pub fn random_instance<R: Rng + ?Sized>(n: usize, m: usize, rng: &mut R) -> ProblemInstance {
    let rho = rng.random_range(0.3..0.9);
    let a = random_schur(n, rho, rng);
    let b = gaussian(n, m, rng);
    let q = random_mixed_symmetric(n, -1.5, 5.0, rng);
    let s = gaussian(m, m, rng);
    let r = Mat::identity(m, m) + symmetrize(&s) * 0.1;
    ProblemInstance::new(a, b, q, r, Mat::identity(n, n)).expect("generated instance is valid")
}

/// Draws random instances until one passes the Riccati certificate.
pub fn random_certified_instance<R: Rng + ?Sized>(
    n: usize,
    m: usize,
    rng: &mut R,
    max_tries: usize,
) -> Option<(ProblemInstance, DareSolution)> {
    (0..max_tries).find_map(|_| {
        let p = random_instance(n, m, rng);
        solve_dare_from_zero(&p, 1e-13, 200).ok().map(|s| (p, s))
    })
}

/// Eigenvalues of the benchmark `Q`, ascending.
pub fn paper_sec5_q_spectrum() -> Vec<f64> {
    sym_eig(&Mat::from_row_slice(5, 5, &PAPER_SEC5_Q))
        .map(|e| e.values.iter().copied().collect())
        .unwrap_or_default()
}
