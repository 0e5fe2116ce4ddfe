//! Dense real-matrix kernel sized for small systems (n <= 32).
//!
//! Symmetric eigendecompositions and the general Schur form are delegated to
//! `nalgebra`; the discrete Lyapunov solvers are written here against the
//! Kronecker (vectorized) form
//!
//! ```text
//! (I - A' (x) A') vec(X) = vec(W)      <=>      A' X A + W = X
//! ```
//!
//! which is exact and needs no Schur reordering at these sizes.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Dense real matrix. Column-major storage, so `as_slice()` is `vec(M)`.
pub type Mat = DMatrix<f64>;

/// Relative symmetry tolerance accepted on inputs to [`sym_eig`].
pub const SYMMETRY_TOL: f64 = 1e-12;
/// Stability margin used when admitting a matrix to a Lyapunov solve.
pub const STABILITY_MARGIN: f64 = 1e-9;
/// Residual bound `||A'XA + W - X||_F <= LYAP_RESIDUAL_TOL (1 + ||X||_F)`.
pub const LYAP_RESIDUAL_TOL: f64 = 1e-9;
/// Largest admissible relative asymmetry of a raw Lyapunov solution.
pub const LYAP_ASYMMETRY_TOL: f64 = 1e-8;

/// Eigen-decomposition of a symmetric matrix, eigenvalues ascending.
#[derive(Debug, Clone)]
pub struct SymEig {
    pub values: DVector<f64>,
    /// Orthonormal eigenvectors stored as columns, matching `values`.
    pub vectors: Mat,
}

impl SymEig {
    /// Smallest eigenvalue.
    pub fn min(&self) -> f64 {
        self.values[0]
    }

    /// Largest eigenvalue.
    pub fn max(&self) -> f64 {
        self.values[self.values.len() - 1]
    }

    /// `V diag(values) V'`.
    pub fn reconstruct(&self) -> Mat {
        &self.vectors * Mat::from_diagonal(&self.values) * self.vectors.transpose()
    }
}

pub fn ensure_square(m: &Mat) -> Result<usize> {
    if m.nrows() != m.ncols() {
        return Err(Error::NonSquare {
            rows: m.nrows(),
            cols: m.ncols(),
        });
    }
    Ok(m.nrows())
}

pub fn ensure_finite(m: &Mat) -> Result<()> {
    if m.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite)
    }
}

/// `||S - S'||_F / ||S||_F`, zero for the zero matrix.
pub fn relative_asymmetry(s: &Mat) -> f64 {
    let scale = s.norm();
    if scale == 0.0 {
        return 0.0;
    }
    (s - s.transpose()).norm() / scale
}

/// `(S + S') / 2`.
pub fn symmetrize(s: &Mat) -> Mat {
    (s + s.transpose()) * 0.5
}

/// Symmetric eigendecomposition with ascending eigenvalues.
///
/// The input must be symmetric to [`SYMMETRY_TOL`] relative; it is
/// symmetrized before factoring.
pub fn sym_eig(s: &Mat) -> Result<SymEig> {
    ensure_square(s)?;
    ensure_finite(s)?;
    let asymmetry = relative_asymmetry(s);
    if asymmetry > SYMMETRY_TOL {
        return Err(Error::AsymmetricInput { asymmetry });
    }
    let eig = nalgebra::SymmetricEigen::try_new(symmetrize(s), f64::EPSILON, 0)
        .ok_or_else(|| Error::IllConditioned("symmetric eigensolver did not converge".into()))?;

    let n = s.nrows();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let values = DVector::from_iterator(n, order.iter().map(|&i| eig.eigenvalues[i]));
    let mut vectors = Mat::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    Ok(SymEig { values, vectors })
}

/// Smallest eigenvalue of a (numerically) symmetric matrix.
pub fn lambda_min(s: &Mat) -> Result<f64> {
    Ok(sym_eig(&symmetrize(s))?.min())
}

/// Largest eigenvalue of a (numerically) symmetric matrix.
pub fn lambda_max(s: &Mat) -> Result<f64> {
    Ok(sym_eig(&symmetrize(s))?.max())
}

/// `max |lambda_i(M)|` over the complex spectrum, via the real Schur form.
pub fn spectral_radius(m: &Mat) -> Result<f64> {
    let n = ensure_square(m)?;
    if n == 0 {
        return Ok(0.0);
    }
    if !m.iter().all(|v| v.is_finite()) {
        return Ok(f64::INFINITY);
    }
    if n == 1 {
        return Ok(m[(0, 0)].abs());
    }
    let schur = nalgebra::linalg::Schur::try_new(m.clone(), f64::EPSILON, 100_000)
        .ok_or_else(|| Error::IllConditioned("Schur iteration did not converge".into()))?;
    Ok(schur
        .complex_eigenvalues()
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max))
}

/// Largest singular value, `sqrt(lambda_max(M'M))`.
pub fn spectral_norm(m: &Mat) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    let gram = symmetrize(&(m.transpose() * m));
    match sym_eig(&gram) {
        Ok(eig) => eig.max().max(0.0).sqrt(),
        Err(_) => f64::NAN,
    }
}

pub fn frob_norm(m: &Mat) -> f64 {
    m.norm()
}

/// Solves `A' X A + W = X` for symmetric `W` and Schur `A`.
///
/// `W` may be indefinite, in which case so is `X`.
pub fn solve_dlyap_transpose(a: &Mat, w: &Mat) -> Result<Mat> {
    let n = ensure_square(a)?;
    if w.shape() != (n, n) {
        return Err(Error::DimensionMismatch {
            what: "Lyapunov right-hand side",
            expected: (n, n),
            got: w.shape(),
        });
    }
    ensure_finite(a)?;
    ensure_finite(w)?;
    let rho = spectral_radius(a)?;
    if rho >= 1.0 - STABILITY_MARGIN {
        return Err(Error::Unstable { rho });
    }

    let at = a.transpose();
    let system = Mat::identity(n * n, n * n) - at.kronecker(&at);
    let rhs = DVector::from_column_slice(w.as_slice());
    let vec_x = system
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::IllConditioned("vectorized Lyapunov system is singular".into()))?;
    let raw = Mat::from_column_slice(n, n, vec_x.as_slice());
    if !raw.iter().all(|v| v.is_finite()) {
        return Err(Error::IllConditioned("non-finite Lyapunov solution".into()));
    }

    let scale = 1.0 + raw.norm();
    let asymmetry = (&raw - raw.transpose()).norm() / scale;
    if asymmetry > LYAP_ASYMMETRY_TOL {
        return Err(Error::IllConditioned(format!(
            "Lyapunov solution asymmetric ({asymmetry:.3e})"
        )));
    }
    let x = symmetrize(&raw);
    let residual = (&at * &x * a + w - &x).norm();
    if residual > LYAP_RESIDUAL_TOL * (1.0 + x.norm()) {
        return Err(Error::IllConditioned(format!(
            "Lyapunov residual {residual:.3e} too large"
        )));
    }
    Ok(x)
}

/// Solves `A Y A' + S = Y` for Schur `A` and PSD `S`.
pub fn solve_dlyap(a: &Mat, s: &Mat) -> Result<Mat> {
    solve_dlyap_transpose(&a.transpose(), s)
}

/// Solves `H Z = R` for symmetric positive definite `H` via Cholesky.
pub fn solve_spd(h: &Mat, rhs: &Mat) -> Option<Mat> {
    nalgebra::Cholesky::new(symmetrize(h)).map(|c| c.solve(rhs))
}

/// Solves `M Z = R` by LU with partial pivoting.
pub fn solve_general(m: &Mat, rhs: &Mat) -> Option<Mat> {
    m.clone().lu().solve(rhs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn m(rows: usize, cols: usize, row_major: &[f64]) -> Mat {
        Mat::from_row_slice(rows, cols, row_major)
    }

    #[test]
    fn sym_eig_identity_and_diagonal() {
        let eig = sym_eig(&Mat::identity(3, 3)).unwrap();
        assert_eq!(eig.values.as_slice(), &[1.0, 1.0, 1.0]);

        let eig = sym_eig(&m(2, 2, &[2.0, 0.0, 0.0, -1.0])).unwrap();
        assert_relative_eq!(eig.values[0], -1.0);
        assert_relative_eq!(eig.values[1], 2.0);
    }

    #[test]
    fn sym_eig_rejects_bad_input() {
        assert!(matches!(
            sym_eig(&Mat::zeros(2, 3)),
            Err(Error::NonSquare { rows: 2, cols: 3 })
        ));
        assert!(matches!(
            sym_eig(&m(2, 2, &[1.0, 2.0, 0.0, 1.0])),
            Err(Error::AsymmetricInput { .. })
        ));
    }

    #[test]
    fn sym_eig_reconstructs() {
        let s = m(3, 3, &[4.0, 1.0, -2.0, 1.0, 0.5, 3.0, -2.0, 3.0, -1.0]);
        let eig = sym_eig(&s).unwrap();
        assert!((eig.reconstruct() - &s).norm() <= 1e-10 * (1.0 + s.norm()));
        let gram = eig.vectors.transpose() * &eig.vectors;
        assert!((gram - Mat::identity(3, 3)).norm() <= 1e-10);
        assert!(eig.values[0] <= eig.values[1] && eig.values[1] <= eig.values[2]);
    }

    #[test]
    fn spectral_radius_examples() {
        assert_relative_eq!(
            spectral_radius(&(Mat::identity(5, 5) * 0.5)).unwrap(),
            0.5,
            epsilon = 1e-12
        );
        assert_eq!(spectral_radius(&m(2, 2, &[0.0, 1.0, 0.0, 0.0])).unwrap(), 0.0);
        assert_relative_eq!(
            spectral_radius(&m(2, 2, &[0.0, 1.0, -1.0, 0.0])).unwrap(),
            1.0,
            epsilon = 1e-12
        );
        assert!(matches!(
            spectral_radius(&Mat::zeros(1, 2)),
            Err(Error::NonSquare { .. })
        ));
    }

    #[test]
    fn norms() {
        assert_relative_eq!(spectral_norm(&Mat::identity(4, 4)), 1.0, epsilon = 1e-12);
        assert_relative_eq!(spectral_norm(&m(2, 2, &[3.0, 0.0, 0.0, -5.0])), 5.0, epsilon = 1e-12);
        assert_relative_eq!(spectral_norm(&m(2, 1, &[3.0, 4.0])), 5.0, epsilon = 1e-12);
        assert_eq!(frob_norm(&Mat::zeros(3, 3)), 0.0);
        assert_relative_eq!(frob_norm(&Mat::identity(3, 3)), 3f64.sqrt());
        assert_relative_eq!(frob_norm(&m(2, 2, &[1.0, 2.0, 2.0, 1.0])), 10f64.sqrt());
    }

    #[test]
    fn scalar_lyapunov_is_geometric_series() {
        let a = m(1, 1, &[0.5]);
        let one = m(1, 1, &[1.0]);
        assert_relative_eq!(solve_dlyap_transpose(&a, &one).unwrap()[(0, 0)], 4.0 / 3.0, epsilon = 1e-14);
        assert_relative_eq!(solve_dlyap(&a, &one).unwrap()[(0, 0)], 4.0 / 3.0, epsilon = 1e-14);
    }

    #[test]
    fn nilpotent_loop_returns_rhs() {
        let w = m(2, 2, &[1.0, -3.0, -3.0, 2.0]);
        let x = solve_dlyap_transpose(&Mat::zeros(2, 2), &w).unwrap();
        assert!((x - &w).norm() < 1e-15);
        let y = solve_dlyap(&Mat::zeros(2, 2), &Mat::identity(2, 2)).unwrap();
        assert!((y - Mat::identity(2, 2)).norm() < 1e-15);
    }

    #[test]
    fn decoupled_scalars() {
        let y = solve_dlyap(&(Mat::identity(2, 2) * 0.5), &Mat::identity(2, 2)).unwrap();
        assert!((y - Mat::identity(2, 2) * (4.0 / 3.0)).norm() < 1e-14);
    }

    #[test]
    fn lyapunov_rejects_unstable() {
        let a = m(2, 2, &[1.0, 0.0, 0.0, 0.2]);
        assert!(matches!(
            solve_dlyap_transpose(&a, &Mat::identity(2, 2)),
            Err(Error::Unstable { .. })
        ));
        let a = m(1, 1, &[1.0 - 1e-12]);
        assert!(matches!(
            solve_dlyap(&a, &Mat::identity(1, 1)),
            Err(Error::Unstable { .. })
        ));
    }

    #[test]
    fn lyapunov_with_indefinite_rhs_is_not_psd() {
        let a = m(2, 2, &[0.3, 0.1, 0.0, 0.4]);
        let w = m(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        let x = solve_dlyap_transpose(&a, &w).unwrap();
        assert!(lambda_min(&x).unwrap() < 0.0);
        assert!((a.transpose() * &x * &a + &w - &x).norm() < 1e-12);
    }
}
