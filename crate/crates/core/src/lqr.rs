//! Indefinite LQR problem data and per-gain quantities.
//!
//! For a plant `x+ = A x + B u` under `u = -K x`, with symmetric (possibly
//! indefinite) penalties `Q`, `R` and an initial-state weight `Sigma > 0`:
//!
//! ```text
//! A_K = A - B K
//! X   : A_K' X A_K + Q + K'RK = X        (value matrix)
//! Y   : A_K Y A_K' + Sigma    = Y        (state correlation)
//! N   = R K - B' X A_K                   (residual, natural gradient / 2)
//! f   = Tr(X Sigma),   grad f = 2 N Y
//! ```
//!
//! The cost is only defined through [`evaluate`] for stabilizing gains. A
//! finite truncated series can still be obtained anywhere with
//! [`cost_by_simulation`].

use crate::dare::DareSolution;
use crate::error::{Error, Result};
use crate::matlin::{
    self, ensure_finite, lambda_max, lambda_min, relative_asymmetry, solve_dlyap,
    solve_dlyap_transpose, symmetrize, Mat,
};

/// One indefinite LQR problem `(A, B, Q, R, Sigma)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProblemInstance {
    a: Mat,
    b: Mat,
    q: Mat,
    r: Mat,
    sigma: Mat,
}

impl ProblemInstance {
    /// Validates dimensions, finiteness and symmetry. `Q` and `R` may be
    /// indefinite; `Sigma` must be positive definite.
    pub fn new(a: Mat, b: Mat, q: Mat, r: Mat, sigma: Mat) -> Result<Self> {
        let n = a.nrows();
        if n == 0 || a.ncols() != n {
            return Err(Error::NonSquare {
                rows: a.nrows(),
                cols: a.ncols(),
            });
        }
        let m = b.ncols();
        if b.nrows() != n || m == 0 {
            return Err(Error::DimensionMismatch {
                what: "B",
                expected: (n, m.max(1)),
                got: b.shape(),
            });
        }
        for (what, mat, dim) in [("Q", &q, n), ("R", &r, m), ("Sigma", &sigma, n)] {
            if mat.shape() != (dim, dim) {
                return Err(Error::DimensionMismatch {
                    what,
                    expected: (dim, dim),
                    got: mat.shape(),
                });
            }
        }
        for mat in [&a, &b, &q, &r, &sigma] {
            ensure_finite(mat)?;
        }
        for (what, mat) in [("Q", &q), ("R", &r), ("Sigma", &sigma)] {
            let asym = relative_asymmetry(mat);
            if asym > matlin::SYMMETRY_TOL {
                return Err(Error::InvalidInstance(format!(
                    "{what} is not symmetric (relative asymmetry {asym:.3e})"
                )));
            }
        }
        let sigma = symmetrize(&sigma);
        let sigma_min = lambda_min(&sigma)?;
        if sigma_min <= 0.0 {
            return Err(Error::InvalidInstance(format!(
                "Sigma must be positive definite (smallest eigenvalue {sigma_min:.3e})"
            )));
        }
        Ok(Self {
            a,
            b,
            q: symmetrize(&q),
            r: symmetrize(&r),
            sigma,
        })
    }

    pub fn a(&self) -> &Mat {
        &self.a
    }
    pub fn b(&self) -> &Mat {
        &self.b
    }
    pub fn q(&self) -> &Mat {
        &self.q
    }
    pub fn r(&self) -> &Mat {
        &self.r
    }
    pub fn sigma(&self) -> &Mat {
        &self.sigma
    }

    /// State dimension `n`.
    pub fn n(&self) -> usize {
        self.a.nrows()
    }

    /// Input dimension `m`.
    pub fn m(&self) -> usize {
        self.b.ncols()
    }

    pub fn closed_loop(&self, k: &Mat) -> Mat {
        &self.a - &self.b * k
    }

    /// `Q + K'RK`.
    pub fn stage_weight(&self, k: &Mat) -> Mat {
        symmetrize(&(&self.q + k.transpose() * &self.r * k))
    }

    /// `R + B'XB`.
    pub fn curvature(&self, x: &Mat) -> Mat {
        symmetrize(&(&self.r + self.b.transpose() * x * &self.b))
    }

    fn check_gain_shape(&self, k: &Mat) -> Result<()> {
        if k.shape() != (self.m(), self.n()) {
            return Err(Error::DimensionMismatch {
                what: "gain K",
                expected: (self.m(), self.n()),
                got: k.shape(),
            });
        }
        Ok(())
    }
}

/// A feedback gain with its cached closed-loop spectral radius.
#[derive(Debug, Clone, PartialEq)]
pub struct Gain {
    pub k: Mat,
    pub rho: f64,
    pub stabilizing: bool,
}

/// Everything derived from a stabilizing gain.
#[derive(Debug, Clone)]
pub struct ValueBundle {
    pub k: Mat,
    /// `A - BK`
    pub ak: Mat,
    pub x: Mat,
    pub y: Mat,
    /// `RK - B'X A_K`
    pub n: Mat,
    /// `2 N Y`
    pub grad: Mat,
    /// `Tr(X Sigma)`
    pub cost: f64,
    /// `R + B'XB`
    pub h: Mat,
}

/// Two-sided gradient-dominance constants at one gain.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DominanceBounds {
    pub tau1: f64,
    pub tau2: f64,
}

pub fn classify_gain(p: &ProblemInstance, k: &Mat) -> Result<Gain> {
    p.check_gain_shape(k)?;
    let rho = matlin::spectral_radius(&p.closed_loop(k))?;
    Ok(Gain {
        k: k.clone(),
        rho,
        stabilizing: rho < 1.0,
    })
}

/// Solves both Lyapunov equations at `gain` and assembles the bundle.
pub fn evaluate(p: &ProblemInstance, gain: &Gain) -> Result<ValueBundle> {
    p.check_gain_shape(&gain.k)?;
    if !gain.stabilizing {
        return Err(Error::NotStabilizing { rho: gain.rho });
    }
    let k = &gain.k;
    let ak = p.closed_loop(k);
    let solve = |r: Result<Mat>| {
        r.map_err(|e| match e {
            Error::Unstable { rho } => Error::NotStabilizing { rho },
            other => other,
        })
    };
    let x = solve(solve_dlyap_transpose(&ak, &p.stage_weight(k)))?;
    let y = solve(solve_dlyap(&ak, p.sigma()))?;
    let n = p.r() * k - p.b().transpose() * &x * &ak;
    let grad = &n * &y * 2.0;
    let cost = (&x * p.sigma()).trace();
    let h = p.curvature(&x);
    Ok(ValueBundle {
        k: k.clone(),
        ak,
        x,
        y,
        n,
        grad,
        cost,
        h,
    })
}

/// Classifies `k` and evaluates it in one go.
pub fn evaluate_gain(p: &ProblemInstance, k: &Mat) -> Result<ValueBundle> {
    evaluate(p, &classify_gain(p, k)?)
}

/// `sum_{j < horizon} Tr((A_K')^j (Q + K'RK) A_K^j Sigma)`.
///
/// Defined for any gain; for unstable loops the partial sums may diverge.
pub fn cost_by_simulation(p: &ProblemInstance, k: &Mat, horizon: usize) -> f64 {
    let ak = p.closed_loop(k);
    let weight = p.stage_weight(k);
    let mut moment = p.sigma().clone();
    let mut total = 0.0;
    for _ in 0..horizon {
        total += (&weight * &moment).trace();
        moment = &ak * &moment * ak.transpose();
    }
    total
}

/// Horizon at which `rho^horizon <= 1e-14`.
pub fn simulation_horizon(rho: f64) -> usize {
    if rho <= 0.0 {
        return 1;
    }
    ((1e-14f64).ln() / rho.ln()).ceil().max(1.0) as usize
}

/// Frobenius norm of the gap in the value-difference identity
///
/// ```text
/// A_Kt'(X - Xt)A_Kt + D'N_K + N_K'D - D'(R + B'XB)D = X - Xt,   D = K - Kt
/// ```
pub fn value_difference_residual(p: &ProblemInstance, k: &Mat, ktil: &Mat) -> Result<f64> {
    let here = evaluate_gain(p, k)?;
    let there = evaluate_gain(p, ktil)?;
    Ok(value_difference_gap(&here, &there).norm())
}

fn value_difference_gap(here: &ValueBundle, there: &ValueBundle) -> Mat {
    let dx = &here.x - &there.x;
    let d = &here.k - &there.k;
    let lhs = there.ak.transpose() * &dx * &there.ak + d.transpose() * &here.n
        + here.n.transpose() * &d
        - d.transpose() * &here.h * &d;
    lhs - dx
}

/// `tau1 = lambda_1(Y_K) lambda_1(R + B'X*B)`, `tau2 = lambda_n(Y*) / lambda_1(R + B'X_K B)`.
pub fn dominance_bounds(
    p: &ProblemInstance,
    k: &Mat,
    star: &DareSolution,
) -> Result<DominanceBounds> {
    let here = evaluate_gain(p, k)?;
    let opt = evaluate_gain(p, &star.kstar)?;
    let h_min = lambda_min(&here.h)?;
    if h_min <= 0.0 {
        return Err(Error::NonPositiveCurvature { lambda_min: h_min });
    }
    let hstar_min = lambda_min(&opt.h)?;
    if hstar_min <= 0.0 {
        return Err(Error::NonPositiveCurvature {
            lambda_min: hstar_min,
        });
    }
    Ok(DominanceBounds {
        tau1: lambda_min(&here.y)? * hstar_min,
        tau2: lambda_max(&opt.y)? / h_min,
    })
}
