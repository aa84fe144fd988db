//! Mode finding and the Gaussian curvature approximation
//! `N(x_n, n⁻¹ H_n⁻¹)` of a concentrating target.
//!
//! The mode `x_n` minimizes `J(x) = U(x) - n⁻¹ log π₀(x)` over the support;
//! `H_n = ∇²U(x_n) - n⁻¹ ∇² log π₀(x_n)` is its curvature core. Optimization
//! is damped Newton with Armijo backtracking and additive `λI` modification
//! whenever the Hessian factorization fails mid-run.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::linalg::SpdMatrix;
use crate::measures::{GaussianMeasure, Point, TargetFamily};

/// Tolerances and limits for the damped Newton iteration.
#[derive(Debug, Clone)]
pub struct NewtonOptions {
    pub grad_tol: f64,
    pub max_iter: usize,
    pub step_floor: f64,
    pub armijo_c: f64,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        Self {
            grad_tol: 1e-10,
            max_iter: 200,
            step_floor: 1e-14,
            armijo_c: 1e-4,
        }
    }
}

/// What the optimizer did on the way to the mode.
#[derive(Debug, Clone, Copy)]
pub struct OptimizerTrace {
    pub iterations: usize,
    pub final_grad_norm: f64,
}

/// The Gaussian approximation `N(x_n, C_n)` with `C_n = n⁻¹ H_n⁻¹`.
#[derive(Debug, Clone)]
pub struct LaplaceApproximation {
    map_point: Point,
    precision_core: SpdMatrix,
    covariance: SpdMatrix,
    n: f64,
    trace: OptimizerTrace,
}

impl LaplaceApproximation {
    pub fn map_point(&self) -> &Point {
        &self.map_point
    }

    /// `H_n`, the precision core (the covariance is `n⁻¹ H_n⁻¹`).
    pub fn precision_core(&self) -> &SpdMatrix {
        &self.precision_core
    }

    /// `C_n = n⁻¹ H_n⁻¹`.
    pub fn covariance(&self) -> &SpdMatrix {
        &self.covariance
    }

    pub fn n(&self) -> f64 {
        self.n
    }

    pub fn trace(&self) -> OptimizerTrace {
        self.trace
    }

    pub fn dim(&self) -> usize {
        self.map_point.len()
    }

    /// The approximation as a Gaussian measure.
    pub fn gaussian(&self) -> Result<GaussianMeasure> {
        GaussianMeasure::new(self.map_point.clone(), self.covariance.clone())
    }
}

fn objective(target: &TargetFamily, n: f64, x: &Point) -> f64 {
    if !target.in_support(x) {
        return f64::INFINITY;
    }
    target.potential().value(x) - target.log_prior().value(x) / n
}

fn objective_gradient(target: &TargetFamily, n: f64, x: &Point) -> Point {
    target.potential().gradient(x) - target.log_prior().gradient(x) / n
}

fn objective_hessian(target: &TargetFamily, n: f64, x: &Point) -> DMatrix<f64> {
    target.potential().hessian(x) - target.log_prior().hessian(x) / n
}

/// Cholesky of `H + λI`, doubling `λ` from `1e-10‖H‖` until it succeeds.
fn modified_cholesky(h: &DMatrix<f64>) -> Result<nalgebra::Cholesky<f64, nalgebra::Dyn>> {
    if let Some(chol) = nalgebra::Cholesky::new(h.clone()) {
        return Ok(chol);
    }
    let scale = h.amax().max(f64::MIN_POSITIVE);
    let mut lambda = 1e-10 * scale;
    for _ in 0..80 {
        let shifted = h + DMatrix::identity(h.nrows(), h.ncols()) * lambda;
        if let Some(chol) = nalgebra::Cholesky::new(shifted) {
            return Ok(chol);
        }
        lambda *= 2.0;
    }
    Err(Error::FactorizationFailed(
        "Hessian modification failed to reach positive definiteness".into(),
    ))
}

/// Finds the minimizer of `J(x) = U(x) - n⁻¹ log π₀(x)` by damped Newton.
///
/// Converges when `‖∇J‖ ≤ grad_tol` and the Hessian at the candidate is
/// positive definite; an indefinite Hessian there is reported as a
/// degenerate minimum. Non-convergence carries the best iterate seen.
pub fn map_estimate(
    target: &TargetFamily,
    n: f64,
    x0: &Point,
    opts: &NewtonOptions,
) -> Result<(Point, OptimizerTrace)> {
    if !(n > 0.0) {
        return Err(Error::Config(format!("concentration must be positive, got {n}")));
    }
    if !target.in_support(x0) {
        return Err(Error::OutsideSupport);
    }
    let mut x = x0.clone();
    let mut fx = objective(target, n, &x);
    for iter in 0..opts.max_iter {
        let grad = objective_gradient(target, n, &x);
        let grad_norm = grad.norm();
        if grad_norm <= opts.grad_tol {
            let hess = objective_hessian(target, n, &x);
            if nalgebra::Cholesky::new(hess).is_none() {
                return Err(Error::DegenerateMinimum(format!(
                    "stationary point at iteration {iter} has a non-positive-definite Hessian"
                )));
            }
            return Ok((
                x,
                OptimizerTrace {
                    iterations: iter,
                    final_grad_norm: grad_norm,
                },
            ));
        }
        let hess = objective_hessian(target, n, &x);
        let chol = modified_cholesky(&hess)?;
        let direction = -chol.solve(&grad);
        let slope = grad.dot(&direction);

        let mut t = 1.0;
        loop {
            let candidate = &x + &direction * t;
            let fc = objective(target, n, &candidate);
            if fc <= fx + opts.armijo_c * t * slope {
                x = candidate;
                fx = fc;
                break;
            }
            t *= 0.5;
            if t < opts.step_floor {
                return Err(Error::NonConvergence {
                    iterations: iter,
                    grad_norm,
                    best: x.iter().copied().collect(),
                });
            }
        }
    }
    let grad_norm = objective_gradient(target, n, &x).norm();
    Err(Error::NonConvergence {
        iterations: opts.max_iter,
        grad_norm,
        best: x.iter().copied().collect(),
    })
}

/// Builds `N(x_n, n⁻¹ H_n⁻¹)` from a converged mode estimate.
pub fn laplace_approximation(
    target: &TargetFamily,
    n: f64,
    x0: &Point,
) -> Result<LaplaceApproximation> {
    laplace_approximation_with(target, n, x0, &NewtonOptions::default())
}

pub fn laplace_approximation_with(
    target: &TargetFamily,
    n: f64,
    x0: &Point,
    opts: &NewtonOptions,
) -> Result<LaplaceApproximation> {
    let (x_n, trace) = map_estimate(target, n, x0, opts)?;
    let h_n = objective_hessian(target, n, &x_n);
    let precision_core = SpdMatrix::new(h_n)
        .map_err(|e| Error::DegenerateMinimum(format!("curvature core not SPD: {e}")))?;
    let covariance = SpdMatrix::new(precision_core.inverse() / n)
        .map_err(|e| Error::DegenerateMinimum(format!("covariance not SPD: {e}")))?;
    Ok(LaplaceApproximation {
        map_point: x_n,
        precision_core,
        covariance,
        n,
        trace,
    })
}

/// Classification of `∇²U(x_⋆)` in the small-noise limit.
#[derive(Debug, Clone)]
pub enum Definiteness {
    PositiveDefinite,
    /// Positive semi-definite with the listed (orthonormal) null directions;
    /// the uninformed directions of a ridge-shaped potential.
    PositiveSemiDefinite { null_space: Vec<Point> },
    Indefinite,
}

/// `∇²U(x_⋆)` together with its definiteness report.
#[derive(Debug, Clone)]
pub struct LimitHessian {
    pub matrix: DMatrix<f64>,
    pub definiteness: Definiteness,
}

/// Evaluates the limit Hessian `∇²U(x_⋆)` at a stationary point of `U`.
///
/// Semi-definiteness is allowed and flagged rather than treated as an error:
/// for Gaussian references the finite-n curvature core stays SPD because the
/// reference contributes `-n⁻¹ ∇² log π₀ ≻ 0`.
pub fn limit_hessian(target: &TargetFamily, x_star: &Point) -> LimitHessian {
    let h = target.potential().hessian(x_star);
    let sym = (&h + h.transpose()) * 0.5;
    let eig = nalgebra::SymmetricEigen::new(sym.clone());
    let scale = eig.eigenvalues.amax().max(1.0);
    let tol = 1e-10 * scale;
    let mut null_space = Vec::new();
    let mut indefinite = false;
    for (i, &lambda) in eig.eigenvalues.iter().enumerate() {
        if lambda < -tol {
            indefinite = true;
        } else if lambda <= tol {
            null_space.push(eig.eigenvectors.column(i).into_owned());
        }
    }
    let definiteness = if indefinite {
        Definiteness::Indefinite
    } else if null_space.is_empty() {
        Definiteness::PositiveDefinite
    } else {
        Definiteness::PositiveSemiDefinite { null_space }
    };
    LimitHessian {
        matrix: sym,
        definiteness,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measures::{SmoothFunction, LOG_2_PI};
    use approx::assert_relative_eq;
    use nalgebra::dvector;

    fn std_normal_prior(dim: usize) -> SmoothFunction {
        SmoothFunction::analytic(
            move |x: &Point| -0.5 * x.norm_squared() - 0.5 * dim as f64 * LOG_2_PI,
            |x: &Point| -x,
            move |x: &Point| -DMatrix::identity(x.len(), x.len()),
        )
    }

    fn ridge_2d() -> TargetFamily {
        // U(x) = ½x₂², π₀ = N(0, I₂)
        TargetFamily::new(
            2,
            SmoothFunction::analytic(
                |x: &Point| 0.5 * x[1] * x[1],
                |x: &Point| dvector![0.0, x[1]],
                |_| DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 0.0, 1.0]),
            ),
            std_normal_prior(2),
        )
    }

    /// Symmetric cubic-tail potential U = ½(x + x³/3)² with N(0,1) reference.
    fn cubic_symmetric_1d() -> TargetFamily {
        let g = |x: f64| x + x * x * x / 3.0;
        let gp = |x: f64| 1.0 + x * x;
        let gpp = |x: f64| 2.0 * x;
        TargetFamily::new(
            1,
            SmoothFunction::analytic(
                move |x: &Point| 0.5 * g(x[0]) * g(x[0]),
                move |x: &Point| dvector![g(x[0]) * gp(x[0])],
                move |x: &Point| {
                    DMatrix::from_element(1, 1, gp(x[0]) * gp(x[0]) + g(x[0]) * gpp(x[0]))
                },
            ),
            std_normal_prior(1),
        )
    }

    /// 1-d golden-section search, the independent mode oracle.
    fn golden_section(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64, tol: f64) -> f64 {
        let phi = (5f64.sqrt() - 1.0) / 2.0;
        let (mut c, mut d) = (b - phi * (b - a), a + phi * (b - a));
        while (b - a).abs() > tol {
            if f(c) < f(d) {
                b = d;
            } else {
                a = c;
            }
            c = b - phi * (b - a);
            d = a + phi * (b - a);
        }
        0.5 * (a + b)
    }

    #[test]
    fn quadratic_ridge_minimum_at_origin() {
        let fam = ridge_2d();
        for n in [1.0, 100.0] {
            let (x, trace) =
                map_estimate(&fam, n, &dvector![3.0, 3.0], &NewtonOptions::default()).unwrap();
            assert!(x.norm() < 1e-9, "x_n = {x:?}");
            assert!(trace.final_grad_norm <= 1e-10);
        }
    }

    #[test]
    fn cubic_map_matches_golden_section_oracle() {
        let fam = cubic_symmetric_1d();
        let n = 1e4;
        let j = |x: f64| {
            let p = dvector![x];
            fam.potential().value(&p) - fam.log_prior().value(&p) / n
        };
        let oracle = golden_section(j, -1.0, 1.0, 1e-12);
        let (x, _) = map_estimate(&fam, n, &dvector![1.0], &NewtonOptions::default()).unwrap();
        assert!(x[0].abs() <= 1e-6, "x_n = {}", x[0]);
        assert!((x[0] - oracle).abs() <= 1e-6);
    }

    #[test]
    fn shifted_quadratic_has_linear_stationarity() {
        // U = ½(x-2)², π₀ = N(0,1), n = 1: (x-2) + x = 0 at x = 1
        let fam = TargetFamily::new(
            1,
            SmoothFunction::analytic(
                |x: &Point| 0.5 * (x[0] - 2.0) * (x[0] - 2.0),
                |x: &Point| dvector![x[0] - 2.0],
                |_| DMatrix::from_element(1, 1, 1.0),
            ),
            std_normal_prior(1),
        );
        let (x, _) = map_estimate(&fam, 1.0, &dvector![0.0], &NewtonOptions::default()).unwrap();
        assert_relative_eq!(x[0], 1.0, epsilon = 1e-10);
    }

    #[test]
    fn ridge_laplace_covariance_matches_closed_form() {
        let fam = ridge_2d();
        for n in [1.0, 100.0, 1e4] {
            let la = laplace_approximation(&fam, n, &dvector![1.0, -2.0]).unwrap();
            // H_n = diag(1/n, 1 + 1/n), C_n = diag(1, 1/(n+1))
            let h = la.precision_core().matrix();
            assert_relative_eq!(h[(0, 0)], 1.0 / n, max_relative = 1e-9);
            assert_relative_eq!(h[(1, 1)], 1.0 + 1.0 / n, max_relative = 1e-9);
            let c = la.covariance().matrix();
            assert_relative_eq!(c[(0, 0)], 1.0, max_relative = 1e-9);
            assert_relative_eq!(c[(1, 1)], 1.0 / (n + 1.0), max_relative = 1e-9);
            // C_n · (n H_n) = I
            let prod = c * h * n;
            assert_relative_eq!(prod, DMatrix::identity(2, 2), epsilon = 1e-10);
        }
    }

    #[test]
    fn conjugate_gaussian_posterior_is_exact() {
        // π₀ = N(0,1), U = ½x², n=1: posterior N(0, ½)
        let fam = TargetFamily::new(
            1,
            SmoothFunction::analytic(
                |x: &Point| 0.5 * x[0] * x[0],
                |x: &Point| dvector![x[0]],
                |_| DMatrix::from_element(1, 1, 1.0),
            ),
            std_normal_prior(1),
        );
        let la = laplace_approximation(&fam, 1.0, &dvector![0.7]).unwrap();
        assert_relative_eq!(la.covariance().matrix()[(0, 0)], 0.5, max_relative = 1e-10);
    }

    #[test]
    fn cubic_curvature_limit() {
        let fam = cubic_symmetric_1d();
        let la = laplace_approximation(&fam, 1e4, &dvector![1.0]).unwrap();
        let n_cn = 1e4 * la.covariance().matrix()[(0, 0)];
        assert!((n_cn - 1.0).abs() <= 1e-2, "n·C_n = {n_cn}");
    }

    #[test]
    fn limit_hessian_reports_null_space() {
        let fam = ridge_2d();
        let lh = limit_hessian(&fam, &dvector![0.0, 0.0]);
        match lh.definiteness {
            Definiteness::PositiveSemiDefinite { null_space } => {
                assert_eq!(null_space.len(), 1);
                assert_relative_eq!(null_space[0][0].abs(), 1.0, epsilon = 1e-12);
            }
            other => panic!("expected semi-definite, got {other:?}"),
        }
        let cubic = cubic_symmetric_1d();
        let lh = limit_hessian(&cubic, &dvector![0.0]);
        assert!(matches!(lh.definiteness, Definiteness::PositiveDefinite));
        assert_relative_eq!(lh.matrix[(0, 0)], 1.0, epsilon = 1e-12);
    }

    #[test]
    fn gauss_newton_limit_hessian_for_linear_forward_map() {
        // U = ½‖y - Ax‖²_Σ with linear A and y = 0: ∇²U = AᵀΣ⁻¹A everywhere
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.0, 2.0]);
        let sigma_inv = DMatrix::from_diagonal(&dvector![2.0, 0.5]);
        let expected = a.transpose() * &sigma_inv * &a;
        let (a2, s2) = (a.clone(), sigma_inv.clone());
        let fam = TargetFamily::new(
            2,
            SmoothFunction::analytic(
                move |x: &Point| {
                    let r = &a * x;
                    0.5 * r.dot(&(&sigma_inv * &r))
                },
                move |x: &Point| a2.transpose() * (&s2 * (&a2 * x)),
                move |_| expected.clone(),
            ),
            std_normal_prior(2),
        );
        let lh = limit_hessian(&fam, &dvector![0.0, 0.0]);
        let want = fam.potential().hessian(&dvector![0.0, 0.0]);
        assert_relative_eq!(lh.matrix, want, epsilon = 1e-12);
        assert!(matches!(lh.definiteness, Definiteness::PositiveDefinite));
    }

    #[test]
    fn multistart_agreement() {
        let fam = cubic_symmetric_1d();
        let starts = [-2.0, -1.0, -0.3, 0.2, 0.5, 1.0, 1.5, 2.0, 2.5, 3.0];
        let solutions: Vec<f64> = starts
            .iter()
            .map(|&s| {
                map_estimate(&fam, 100.0, &dvector![s], &NewtonOptions::default())
                    .unwrap()
                    .0[0]
            })
            .collect();
        for pair in solutions.windows(2) {
            assert!((pair[0] - pair[1]).abs() <= 1e-8);
        }
    }
}
