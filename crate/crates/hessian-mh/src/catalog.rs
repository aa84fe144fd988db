//! Built-in example models, keyed by name.
//!
//! All entries use a standard normal reference and an analytic potential:
//!
//! - `gauss_1d`      — conjugate Gaussian, posterior `N(0, 1/(n+1))`.
//! - `gauss_ridge`   — Gaussian ridge on ℝ²: only the second coordinate is
//!   informed, posterior `N(0, diag(1, 1/(1+n)))`.
//! - `cubic_1d`      — skewed cubic-tail potential `U = ½(x + 0.3x² + x³/3)²`;
//!   non-Gaussian at every finite `n`, contracts to a point.
//! - `cubic_ridge_2d` — the same skewed potential applied to `x₂` only, so
//!   the posterior contracts along a one-dimensional informed subspace.
//! - `bayes_nonlin_2d` — nonlinear two-observation inverse problem
//!   `U = ½‖y - F(x)‖²_Σ` with a smooth invertible forward map.

use nalgebra::{dvector, DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::SpdMatrix;
use crate::measures::{GaussianMeasure, Point, SmoothFunction, TargetFamily, LOG_2_PI};

/// Skew parameter of the cubic models; nonzero third derivative at the
/// minimizer keeps the Gaussian-approximation error at its generic decay
/// rate instead of the faster symmetric one.
pub const CUBIC_SKEW: f64 = 0.3;

fn std_normal_prior(dim: usize) -> SmoothFunction {
    SmoothFunction::analytic(
        move |x: &Point| -0.5 * x.norm_squared() - 0.5 * dim as f64 * LOG_2_PI,
        |x: &Point| -x,
        move |x: &Point| -DMatrix::identity(x.len(), x.len()),
    )
}

fn cubic_g(x: f64) -> f64 {
    x + CUBIC_SKEW * x * x + x * x * x / 3.0
}

fn cubic_gp(x: f64) -> f64 {
    1.0 + 2.0 * CUBIC_SKEW * x + x * x
}

fn cubic_gpp(x: f64) -> f64 {
    2.0 * CUBIC_SKEW + 2.0 * x
}

/// One catalog model: target constructor plus the metadata the experiment
/// runners key decisions on.
#[derive(Debug, Clone)]
pub struct CatalogEntry {
    pub name: &'static str,
    pub dim: usize,
    pub description: &'static str,
    /// Minimizer of the potential (the small-noise limit point on the
    /// informed subspace).
    pub x_star: Vec<f64>,
    /// The posterior contracts to a point with nondegenerate limit
    /// curvature, so the Gaussian approximation converges to it.
    pub point_concentration: bool,
    /// Basis of the likelihood-informed subspace when the potential only
    /// depends on part of the space.
    pub informed_subspace: Option<Vec<Vec<f64>>>,
    build: fn() -> TargetFamily,
    exact: Option<fn(f64) -> GaussianMeasure>,
}

impl CatalogEntry {
    pub fn target(&self) -> TargetFamily {
        (self.build)()
    }

    /// The posterior in closed form, when the model is Gaussian-exact.
    pub fn exact_posterior(&self, n: f64) -> Option<GaussianMeasure> {
        self.exact.map(|f| f(n))
    }

    pub fn is_gaussian_exact(&self) -> bool {
        self.exact.is_some()
    }

    /// Default optimizer start.
    pub fn x0(&self) -> Point {
        DVector::zeros(self.dim)
    }

    pub fn x_star(&self) -> Point {
        DVector::from_column_slice(&self.x_star)
    }

    /// Reference covariance for plain autoregressive proposals (the prior's).
    pub fn prior_covariance(&self) -> SpdMatrix {
        SpdMatrix::identity(self.dim)
    }

    /// Whether the Gaussian-approximation decay study applies: either the
    /// posterior contracts to a point or it contracts along a known linear
    /// subspace.
    pub fn rate_study_supported(&self) -> bool {
        self.point_concentration || self.informed_subspace.is_some()
    }

    pub fn informed_subspace_vectors(&self) -> Option<Vec<Point>> {
        self.informed_subspace
            .as_ref()
            .map(|vs| vs.iter().map(|v| DVector::from_column_slice(v)).collect())
    }
}

fn gauss_1d_target() -> TargetFamily {
    TargetFamily::new(
        1,
        SmoothFunction::analytic(
            |x: &Point| 0.5 * x[0] * x[0],
            |x: &Point| dvector![x[0]],
            |_| DMatrix::from_element(1, 1, 1.0),
        ),
        std_normal_prior(1),
    )
}

fn gauss_1d_exact(n: f64) -> GaussianMeasure {
    GaussianMeasure::new(
        dvector![0.0],
        SpdMatrix::from_diagonal(&[1.0 / (n + 1.0)]).expect("diagonal is positive"),
    )
    .expect("dimensions agree")
}

fn gauss_ridge_target() -> TargetFamily {
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

fn gauss_ridge_exact(n: f64) -> GaussianMeasure {
    GaussianMeasure::new(
        dvector![0.0, 0.0],
        SpdMatrix::from_diagonal(&[1.0, 1.0 / (1.0 + n)]).expect("diagonal is positive"),
    )
    .expect("dimensions agree")
}

fn cubic_1d_target() -> TargetFamily {
    TargetFamily::new(
        1,
        SmoothFunction::analytic(
            |x: &Point| {
                let g = cubic_g(x[0]);
                0.5 * g * g
            },
            |x: &Point| dvector![cubic_g(x[0]) * cubic_gp(x[0])],
            |x: &Point| {
                let (g, gp, gpp) = (cubic_g(x[0]), cubic_gp(x[0]), cubic_gpp(x[0]));
                DMatrix::from_element(1, 1, gp * gp + g * gpp)
            },
        ),
        std_normal_prior(1),
    )
}

fn cubic_ridge_2d_target() -> TargetFamily {
    TargetFamily::new(
        2,
        SmoothFunction::analytic(
            |x: &Point| {
                let g = cubic_g(x[1]);
                0.5 * g * g
            },
            |x: &Point| dvector![0.0, cubic_g(x[1]) * cubic_gp(x[1])],
            |x: &Point| {
                let (g, gp, gpp) = (cubic_g(x[1]), cubic_gp(x[1]), cubic_gpp(x[1]));
                DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 0.0, gp * gp + g * gpp])
            },
        ),
        std_normal_prior(2),
    )
}

// Nonlinear forward map F(x) = (x₁ + a sin x₂, x₂ + a sin x₁): diagonally
// dominant Jacobian, hence globally invertible, with bounded curvature.
const NONLIN_A: f64 = 0.2;
const NONLIN_X_STAR: [f64; 2] = [0.3, -0.2];
/// Inverse noise covariance diag(1/0.8, 1/1.25).
const NONLIN_SIGMA_INV: [f64; 2] = [1.25, 0.8];

fn nonlin_forward(x: &Point) -> DVector<f64> {
    dvector![x[0] + NONLIN_A * x[1].sin(), x[1] + NONLIN_A * x[0].sin()]
}

fn nonlin_jacobian(x: &Point) -> DMatrix<f64> {
    DMatrix::from_row_slice(
        2,
        2,
        &[1.0, NONLIN_A * x[1].cos(), NONLIN_A * x[0].cos(), 1.0],
    )
}

fn nonlin_data() -> DVector<f64> {
    nonlin_forward(&dvector![NONLIN_X_STAR[0], NONLIN_X_STAR[1]])
}

fn bayes_nonlin_2d_target() -> TargetFamily {
    let y = nonlin_data();
    let sigma_inv = DVector::from_column_slice(&NONLIN_SIGMA_INV);
    let (y1, s1) = (y.clone(), sigma_inv.clone());
    let (y2, s2) = (y.clone(), sigma_inv.clone());
    TargetFamily::new(
        2,
        SmoothFunction::analytic(
            move |x: &Point| {
                let r = &y - nonlin_forward(x);
                0.5 * (s1[0] * r[0] * r[0] + s1[1] * r[1] * r[1])
            },
            move |x: &Point| {
                let r = &y1 - nonlin_forward(x);
                let j = nonlin_jacobian(x);
                -j.transpose() * dvector![sigma_inv[0] * r[0], sigma_inv[1] * r[1]]
            },
            move |x: &Point| {
                let r = &y2 - nonlin_forward(x);
                let j = nonlin_jacobian(x);
                let weighted = dvector![s2[0] * r[0], s2[1] * r[1]];
                let mut h = DMatrix::zeros(2, 2);
                for k in 0..2 {
                    for l in 0..2 {
                        h[(k, l)] = s2[0] * j[(0, k)] * j[(0, l)] + s2[1] * j[(1, k)] * j[(1, l)];
                    }
                }
                // curvature of the forward map: ∇²F₁ = diag(0, -a sin x₂),
                // ∇²F₂ = diag(-a sin x₁, 0)
                h[(1, 1)] += weighted[0] * NONLIN_A * x[1].sin();
                h[(0, 0)] += weighted[1] * NONLIN_A * x[0].sin();
                h
            },
        ),
        std_normal_prior(2),
    )
}

/// All catalog entries.
pub fn catalog() -> Vec<CatalogEntry> {
    vec![
        CatalogEntry {
            name: "gauss_1d",
            dim: 1,
            description: "conjugate Gaussian: posterior N(0, 1/(n+1))",
            x_star: vec![0.0],
            point_concentration: true,
            informed_subspace: None,
            build: gauss_1d_target,
            exact: Some(gauss_1d_exact),
        },
        CatalogEntry {
            name: "gauss_ridge",
            dim: 2,
            description: "Gaussian ridge: posterior N(0, diag(1, 1/(1+n)))",
            x_star: vec![0.0, 0.0],
            point_concentration: false,
            informed_subspace: Some(vec![vec![0.0, 1.0]]),
            build: gauss_ridge_target,
            exact: Some(gauss_ridge_exact),
        },
        CatalogEntry {
            name: "cubic_1d",
            dim: 1,
            description: "skewed cubic-tail potential, point concentration",
            x_star: vec![0.0],
            point_concentration: true,
            informed_subspace: None,
            build: cubic_1d_target,
            exact: None,
        },
        CatalogEntry {
            name: "cubic_ridge_2d",
            dim: 2,
            description: "skewed cubic potential along x2 only; informed subspace span{e2}",
            x_star: vec![0.0, 0.0],
            point_concentration: false,
            informed_subspace: Some(vec![vec![0.0, 1.0]]),
            build: cubic_ridge_2d_target,
            exact: None,
        },
        CatalogEntry {
            name: "bayes_nonlin_2d",
            dim: 2,
            description: "nonlinear inverse problem U = half |y - F(x)|^2_Sigma",
            x_star: NONLIN_X_STAR.to_vec(),
            point_concentration: true,
            informed_subspace: None,
            build: bayes_nonlin_2d_target,
            exact: None,
        },
    ]
}

/// Looks a model up by its key.
pub fn lookup(name: &str) -> Result<CatalogEntry> {
    catalog()
        .into_iter()
        .find(|e| e.name == name)
        .ok_or_else(|| {
            Error::Config(format!(
                "unknown model '{name}'; available: {}",
                catalog()
                    .iter()
                    .map(|e| e.name)
                    .collect::<Vec<_>>()
                    .join(", ")
            ))
        })
}
