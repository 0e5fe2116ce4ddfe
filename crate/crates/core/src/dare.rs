//! Ground-truth optimal gain via the Riccati fixed point.
//!
//! Starting from a stabilizing seed, iterate
//!
//! ```text
//! X_j     : Lyapunov value matrix of K_j
//! K_{j+1} = (R + B'X_j B)^{-1} B'X_j A
//! ```
//!
//! until the value matrices stop moving, then certify the limit against the
//! Riccati equation `X = A'XA + Q - A'XB (R + B'XB)^{-1} B'XA` directly.
//! A failed certificate is how an instance without a strict local minimizer
//! over the stabilizing set shows up.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::lqr::{classify_gain, evaluate_gain, Gain, ProblemInstance};
use crate::matlin::{lambda_min, solve_dlyap_transpose, solve_general, spectral_radius, Mat};

/// Certificate tolerance on the Riccati residual, relative to `1 + ||X*||_F`.
pub const DARE_RESIDUAL_TOL: f64 = 1e-10;

#[derive(Debug, Clone)]
pub struct DareSolution {
    pub xstar: Mat,
    pub kstar: Mat,
    /// Frobenius norm of the Riccati residual at `xstar`.
    pub residual: f64,
    /// `rho(A - B K*)`
    pub rho_star: f64,
    /// `R + B'X*B`
    pub hstar: Mat,
    pub iterations: usize,
    /// Value matrices `X_0, X_1, ...` visited by the fixed point.
    pub value_iterates: Vec<Mat>,
}

impl DareSolution {
    /// Optimal cost `Tr(X* Sigma)`.
    pub fn cost(&self, p: &ProblemInstance) -> f64 {
        (&self.xstar * p.sigma()).trace()
    }
}

/// `||A'XA + Q - A'XB (R + B'XB)^{-1} B'XA - X||_F`.
pub fn dare_residual(p: &ProblemInstance, x: &Mat) -> Result<f64> {
    let (a, b) = (p.a(), p.b());
    let h = p.curvature(x);
    let bxa = b.transpose() * x * a;
    let correction = solve_general(&h, &bxa).ok_or(Error::SingularCurvature)?;
    let rhs = a.transpose() * x * a + p.q() - bxa.transpose() * correction;
    Ok((rhs - x).norm())
}

/// `(R + B'XB)^{-1} B'XA`, refusing (numerically) singular curvature.
pub fn riccati_gain(p: &ProblemInstance, x: &Mat) -> Result<Mat> {
    let h = p.curvature(x);
    let scale = h.norm().max(f64::MIN_POSITIVE);
    let lu = h.clone().lu();
    let pivot_floor = 1e-14 * scale;
    let u = lu.u();
    if (0..u.nrows()).any(|i| u[(i, i)].abs() <= pivot_floor) {
        return Err(Error::SingularCurvature);
    }
    lu.solve(&(p.b().transpose() * x * p.a()))
        .ok_or(Error::SingularCurvature)
}

fn value_matrix(p: &ProblemInstance, k: &Mat) -> Result<Mat> {
    solve_dlyap_transpose(&p.closed_loop(k), &p.stage_weight(k))
}

/// Riccati fixed point from the stabilizing seed `k0`.
///
/// Stops once `||X_{j+1} - X_j||_F <= tol (1 + ||X_j||_F)` and returns only
/// certified solutions.
pub fn solve_dare(
    p: &ProblemInstance,
    k0: &Gain,
    tol: f64,
    max_iter: usize,
) -> Result<DareSolution> {
    if !k0.stabilizing {
        return Err(Error::NoStabilizingSeed { rho: k0.rho });
    }
    if !(tol > 0.0) {
        return Err(Error::InvalidInstance(format!("DARE tolerance must be positive, got {tol}")));
    }
    let mut x = value_matrix(p, &k0.k)?;
    let mut history = vec![x.clone()];
    let mut converged = false;
    let mut iterations = 0;

    while iterations < max_iter {
        let k_next = riccati_gain(p, &x)?;
        let gain = classify_gain(p, &k_next)?;
        if !gain.stabilizing {
            return Err(Error::CertificateFailure(format!(
                "fixed-point iterate {} is not stabilizing (rho = {})",
                iterations + 1,
                gain.rho
            )));
        }
        let x_next = value_matrix(p, &k_next)?;
        iterations += 1;
        let step = (&x_next - &x).norm();
        let scale = 1.0 + x.norm();
        x = x_next;
        history.push(x.clone());
        if step <= tol * scale {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::MaxIterExceeded { iterations });
    }

    let kstar = riccati_gain(p, &x)?;
    let hstar = p.curvature(&x);
    let residual = dare_residual(p, &x)?;
    let rho_star = spectral_radius(&p.closed_loop(&kstar))?;
    let solution = DareSolution {
        xstar: x,
        kstar,
        residual,
        rho_star,
        hstar,
        iterations,
        value_iterates: history,
    };
    certify(&solution)?;
    Ok(solution)
}

/// Riccati fixed point seeded with `K0 = 0`, which requires Schur `A`.
pub fn solve_dare_from_zero(p: &ProblemInstance, tol: f64, max_iter: usize) -> Result<DareSolution> {
    let seed = classify_gain(p, &Mat::zeros(p.m(), p.n()))?;
    solve_dare(p, &seed, tol, max_iter)
}

fn certify(sol: &DareSolution) -> Result<()> {
    let bound = DARE_RESIDUAL_TOL * (1.0 + sol.xstar.norm());
    if !(sol.residual <= bound) {
        return Err(Error::CertificateFailure(format!(
            "Riccati residual {:.3e} exceeds {:.3e}",
            sol.residual, bound
        )));
    }
    if !(sol.rho_star < 1.0) {
        return Err(Error::CertificateFailure(format!(
            "optimal gain is not stabilizing (rho = {})",
            sol.rho_star
        )));
    }
    let h_min = lambda_min(&sol.hstar)?;
    if !(h_min > 0.0) {
        return Err(Error::CertificateFailure(format!(
            "R + B'X*B is not positive definite (smallest eigenvalue {h_min:.3e})"
        )));
    }
    Ok(())
}

/// Outcome of sampling stabilizing gains around `K*`.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimalityReport {
    pub samples: usize,
    /// `min_K f(K) - f(K*)`; `None` when no samples were requested.
    pub worst_margin: Option<f64>,
    /// Allowed negative slack, `1e-9 (1 + |f(K*)|)`.
    pub tolerance: f64,
}

impl OptimalityReport {
    pub fn passed(&self) -> bool {
        self.worst_margin.is_none_or(|m| m >= -self.tolerance)
    }
}

/// Draws `samples` stabilizing gains around `K*` by rejection and records
/// the worst cost margin over `f(K*)`.
pub fn verify_global_optimality<R: Rng + ?Sized>(
    p: &ProblemInstance,
    sol: &DareSolution,
    samples: usize,
    rng: &mut R,
) -> Result<OptimalityReport> {
    let fstar = sol.cost(p);
    let tolerance = 1e-9 * (1.0 + fstar.abs());
    let mut worst: Option<f64> = None;
    let max_attempts = 1000 * samples.max(1);
    let mut attempts = 0;
    let mut accepted = 0;
    let mut radius = 1.0 + sol.kstar.norm();

    while accepted < samples {
        if attempts >= max_attempts {
            return Err(Error::SamplingFailure { attempts });
        }
        attempts += 1;
        let k = perturb(&sol.kstar, radius * rng.random::<f64>(), rng);
        let gain = classify_gain(p, &k)?;
        if !gain.stabilizing {
            radius = (radius * 0.9).max(1e-6);
            continue;
        }
        let cost = match evaluate_gain(p, &k) {
            Ok(b) => b.cost,
            // too close to the boundary for the vectorized solve
            Err(Error::NotStabilizing { .. }) => continue,
            Err(e) => return Err(e),
        };
        let margin = cost - fstar;
        worst = Some(worst.map_or(margin, |w: f64| w.min(margin)));
        accepted += 1;
    }
    Ok(OptimalityReport {
        samples,
        worst_margin: worst,
        tolerance,
    })
}

/// `center + radius * D` with `D` uniform on the Frobenius unit sphere.
pub fn perturb<R: Rng + ?Sized>(center: &Mat, radius: f64, rng: &mut R) -> Mat {
    let mut d = Mat::from_fn(center.nrows(), center.ncols(), |_, _| {
        StandardNormal.sample(rng)
    });
    let norm = d.norm();
    if norm > 0.0 {
        d /= norm;
    }
    center + d * radius
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instances;
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn s(v: f64) -> Mat {
        Mat::from_element(1, 1, v)
    }

    fn golden() -> ProblemInstance {
        ProblemInstance::new(s(1.0), s(1.0), s(1.0), s(1.0), s(1.0)).unwrap()
    }

    #[test]
    fn golden_ratio_instance() {
        let p = golden();
        let seed = classify_gain(&p, &s(1.0)).unwrap();
        let sol = solve_dare(&p, &seed, 1e-13, 100).unwrap();
        let phi = (1.0 + 5f64.sqrt()) / 2.0;
        assert_relative_eq!(sol.xstar[(0, 0)], phi, epsilon = 1e-12);
        assert_relative_eq!(sol.kstar[(0, 0)], phi / (1.0 + phi), epsilon = 1e-12);
        assert_relative_eq!(sol.rho_star, 1.0 / (1.0 + phi), epsilon = 1e-12);
        // x^2 - x - 1 = 0
        let x = sol.xstar[(0, 0)];
        assert!((x * x - x - 1.0).abs() < 1e-12);
    }

    #[test]
    fn zero_dynamics() {
        let q = Mat::from_row_slice(2, 2, &[1.0, 0.5, 0.5, -2.0]);
        let p = ProblemInstance::new(Mat::zeros(2, 2), Mat::identity(2, 2), q.clone(), Mat::identity(2, 2) * 3.0, Mat::identity(2, 2)).unwrap();
        let sol = solve_dare_from_zero(&p, 1e-13, 50).unwrap();
        assert!((&sol.xstar - &q).norm() < 1e-14);
        assert!(sol.kstar.norm() < 1e-14);
    }

    fn certified_5x5() -> (ProblemInstance, DareSolution) {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        instances::random_certified_instance(5, 3, &mut rng, 100).unwrap()
    }

    #[test]
    fn certified_instance_meets_certificate() {
        let (p, sol) = certified_5x5();
        assert!(sol.residual <= DARE_RESIDUAL_TOL * (1.0 + sol.xstar.norm()));
        assert!(lambda_min(&sol.hstar).unwrap() > 0.0);
        assert!(sol.rho_star < 1.0);
        assert!(sol.iterations <= 30);
        let again = riccati_gain(&p, &sol.xstar).unwrap();
        assert!((again - &sol.kstar).norm() <= 1e-10);
    }

    #[test]
    fn benchmark_instance_has_no_stabilizing_riccati_solution() {
        // Q has eigenvalues -1.53 and -1.10; with A = I/2, B = R = I each
        // such mode needs x^2 + (0.75 - q) x - q = 0, which has no real root.
        let p = instances::paper_sec5();
        for q in instances::paper_sec5_q_spectrum() {
            let disc = (0.75 - q).powi(2) + 4.0 * q;
            assert_eq!(disc < 0.0, q < -0.25, "q = {q}");
        }
        assert!(matches!(
            solve_dare_from_zero(&p, 1e-13, 100),
            Err(Error::CertificateFailure(_))
        ));
    }

    #[test]
    fn seed_must_stabilize() {
        let p = ProblemInstance::new(s(2.0), s(1.0), s(1.0), s(1.0), s(1.0)).unwrap();
        let seed = classify_gain(&p, &s(0.0)).unwrap();
        assert!(matches!(
            solve_dare(&p, &seed, 1e-12, 10),
            Err(Error::NoStabilizingSeed { .. })
        ));
    }

    #[test]
    fn iteration_budget_is_enforced() {
        let (p, _) = certified_5x5();
        assert!(matches!(
            solve_dare_from_zero(&p, 1e-13, 1),
            Err(Error::MaxIterExceeded { iterations: 1 })
        ));
    }

    #[test]
    fn missing_minimizer_fails_certificate() {
        // With R < 0 the cost is unbounded below along any input direction.
        let p = ProblemInstance::new(s(0.5), s(1.0), s(1.0), s(-1.0), s(1.0)).unwrap();
        let err = solve_dare_from_zero(&p, 1e-13, 200).unwrap_err();
        assert!(
            matches!(
                err,
                Error::CertificateFailure(_) | Error::SingularCurvature | Error::MaxIterExceeded { .. }
            ),
            "{err:?}"
        );
    }

    #[test]
    fn optimality_sampling() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let p = golden();
        let sol = solve_dare(&p, &classify_gain(&p, &s(1.0)).unwrap(), 1e-13, 100).unwrap();

        let empty = verify_global_optimality(&p, &sol, 0, &mut rng).unwrap();
        assert_eq!(empty.worst_margin, None);
        assert!(empty.passed());

        let report = verify_global_optimality(&p, &sol, 1000, &mut rng).unwrap();
        assert!(report.worst_margin.unwrap() >= 0.0);

        let (p, sol) = certified_5x5();
        let report = verify_global_optimality(&p, &sol, 200, &mut rng).unwrap();
        assert!(report.worst_margin.unwrap() >= -1e-9, "{report:?}");
    }
}
