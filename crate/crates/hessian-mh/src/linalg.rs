//! Dense symmetric positive definite matrices stored together with a
//! Cholesky factor.
//!
//! Every covariance in this crate goes through [`SpdMatrix`]: densities,
//! samples and inverses are all computed from the lower-triangular factor
//! rather than the matrix itself, which stays accurate while the smallest
//! eigenvalue decays like 1/n.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Relative asymmetry tolerated before a matrix is rejected outright.
const SYMMETRY_TOL: f64 = 1e-8;

/// A symmetric positive definite matrix `M = L Lᵀ` with its lower factor.
#[derive(Debug, Clone)]
pub struct SpdMatrix {
    matrix: DMatrix<f64>,
    factor: DMatrix<f64>,
}

impl SpdMatrix {
    /// Builds an SPD matrix from a (numerically) symmetric dense matrix.
    ///
    /// The input is symmetrized exactly as `(M + Mᵀ)/2` before factorization,
    /// so the stored matrix satisfies `M == Mᵀ` in floating point. Fails if
    /// the input is visibly asymmetric or the Cholesky factorization breaks
    /// down (not positive definite).
    pub fn new(matrix: DMatrix<f64>) -> Result<Self> {
        if matrix.nrows() != matrix.ncols() {
            return Err(Error::FactorizationFailed(format!(
                "matrix is {}x{}, expected square",
                matrix.nrows(),
                matrix.ncols()
            )));
        }
        let scale = matrix.amax().max(1.0);
        let asym = (&matrix - matrix.transpose()).amax();
        if asym > SYMMETRY_TOL * scale {
            return Err(Error::FactorizationFailed(format!(
                "matrix is asymmetric (|M - Mᵀ|∞ = {asym:.3e})"
            )));
        }
        let sym = (&matrix + matrix.transpose()) * 0.5;
        let chol = nalgebra::Cholesky::new(sym.clone()).ok_or_else(|| {
            Error::FactorizationFailed("Cholesky failed: matrix not positive definite".into())
        })?;
        let factor = chol.l();
        // a pivot at roundoff scale means the matrix is numerically singular
        let min_pivot = factor.diagonal().iter().fold(f64::INFINITY, |m, &l| m.min(l));
        if !(min_pivot > 0.0) || min_pivot * min_pivot <= 64.0 * f64::EPSILON * scale {
            return Err(Error::FactorizationFailed(format!(
                "matrix is numerically singular (smallest pivot {min_pivot:.3e})"
            )));
        }
        Ok(Self {
            matrix: sym,
            factor,
        })
    }

    pub fn from_diagonal(diag: &[f64]) -> Result<Self> {
        Self::new(DMatrix::from_diagonal(&DVector::from_row_slice(diag)))
    }

    pub fn identity(dim: usize) -> Self {
        Self {
            matrix: DMatrix::identity(dim, dim),
            factor: DMatrix::identity(dim, dim),
        }
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    /// Lower-triangular factor `L` with `M = L Lᵀ` and positive diagonal.
    pub fn factor(&self) -> &DMatrix<f64> {
        &self.factor
    }

    /// `L z`, the map sending standard normal noise to noise of covariance `M`.
    pub fn apply_factor(&self, z: &DVector<f64>) -> DVector<f64> {
        &self.factor * z
    }

    /// `L⁻¹ v` by forward substitution.
    pub fn solve_factor(&self, v: &DVector<f64>) -> DVector<f64> {
        let mut out = v.clone();
        self.factor.solve_lower_triangular_mut(&mut out);
        out
    }

    /// `M⁻¹ v` via the two triangular solves.
    pub fn solve(&self, v: &DVector<f64>) -> DVector<f64> {
        let mut out = self.solve_factor(v);
        self.factor.tr_solve_lower_triangular_mut(&mut out);
        out
    }

    /// Dense inverse `M⁻¹`, assembled column by column from the factor.
    pub fn inverse(&self) -> DMatrix<f64> {
        let d = self.dim();
        let mut inv = DMatrix::zeros(d, d);
        for j in 0..d {
            let mut e = DVector::zeros(d);
            e[j] = 1.0;
            inv.set_column(j, &self.solve(&e));
        }
        // symmetrize away the last rounding
        (&inv + inv.transpose()) * 0.5
    }

    /// `log det M = 2 Σ log L_ii`.
    pub fn log_det(&self) -> f64 {
        2.0 * self.factor.diagonal().iter().map(|l| l.ln()).sum::<f64>()
    }

    /// The quadratic form `vᵀ M⁻¹ v = ‖L⁻¹ v‖²`.
    pub fn inv_quad_form(&self, v: &DVector<f64>) -> f64 {
        self.solve_factor(v).norm_squared()
    }

    /// `c · M` for `c > 0`; the factor scales by `√c`.
    pub fn scale(&self, c: f64) -> Result<Self> {
        if !(c > 0.0) {
            return Err(Error::FactorizationFailed(format!(
                "scale factor must be positive, got {c}"
            )));
        }
        Ok(Self {
            matrix: &self.matrix * c,
            factor: &self.factor * c.sqrt(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn factor_reproduces_matrix() {
        let m = DMatrix::from_row_slice(2, 2, &[2.0, 0.3, 0.3, 1.0]);
        let spd = SpdMatrix::new(m.clone()).unwrap();
        let rebuilt = spd.factor() * spd.factor().transpose();
        assert_relative_eq!(rebuilt, m, max_relative = 1e-12);
        assert!(spd.factor().diagonal().iter().all(|&l| l > 0.0));
    }

    #[test]
    fn rejects_indefinite() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(matches!(
            SpdMatrix::new(m),
            Err(Error::FactorizationFailed(_))
        ));
    }

    #[test]
    fn rejects_asymmetric() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, -0.5, 1.0]);
        assert!(SpdMatrix::new(m).is_err());
    }

    #[test]
    fn inverse_and_logdet() {
        let m = DMatrix::from_row_slice(3, 3, &[4.0, 1.0, 0.0, 1.0, 3.0, 0.5, 0.0, 0.5, 2.0]);
        let spd = SpdMatrix::new(m.clone()).unwrap();
        let id = spd.inverse() * &m;
        assert_relative_eq!(id, DMatrix::identity(3, 3), epsilon = 1e-12);
        let det = m.determinant();
        assert_relative_eq!(spd.log_det(), det.ln(), max_relative = 1e-12);
    }

    #[test]
    fn quad_form_matches_inverse() {
        let m = DMatrix::from_row_slice(2, 2, &[2.0, 0.4, 0.4, 1.5]);
        let spd = SpdMatrix::new(m).unwrap();
        let v = DVector::from_row_slice(&[0.7, -1.3]);
        let direct = v.dot(&(spd.inverse() * &v));
        assert_relative_eq!(spd.inv_quad_form(&v), direct, max_relative = 1e-12);
    }
}
