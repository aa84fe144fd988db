//! Gaussian measures, differentiable potentials and the concentrating
//! target family `π_n(dx) ∝ exp(-n U(x)) π₀(dx)`.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::linalg::SpdMatrix;

/// A point of the state space ℝ^d.
pub type Point = DVector<f64>;

pub const LOG_2_PI: f64 = 1.837_877_066_409_345_5;

/// A Gaussian measure `N(mean, cov)` with factorized covariance.
#[derive(Debug, Clone)]
pub struct GaussianMeasure {
    mean: Point,
    cov: SpdMatrix,
}

impl GaussianMeasure {
    pub fn new(mean: Point, cov: SpdMatrix) -> Result<Self> {
        if mean.len() != cov.dim() {
            return Err(Error::Config(format!(
                "mean has dimension {}, covariance {}",
                mean.len(),
                cov.dim()
            )));
        }
        Ok(Self { mean, cov })
    }

    pub fn standard(dim: usize) -> Self {
        Self {
            mean: DVector::zeros(dim),
            cov: SpdMatrix::identity(dim),
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &Point {
        &self.mean
    }

    pub fn cov(&self) -> &SpdMatrix {
        &self.cov
    }

    /// `mean + L z` for externally supplied standard normal noise `z`.
    pub fn sample_with_noise(&self, z: &Point) -> Point {
        &self.mean + self.cov.apply_factor(z)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Point {
        let z = standard_normal_vector(self.dim(), rng);
        self.sample_with_noise(&z)
    }

    /// Log density `-½‖L⁻¹(x-μ)‖² - ½ log det(2πC)`, computed via the factor.
    pub fn log_density(&self, x: &Point) -> f64 {
        let diff = x - &self.mean;
        -0.5 * self.cov.inv_quad_form(&diff)
            - 0.5 * (self.dim() as f64 * LOG_2_PI + self.cov.log_det())
    }

    /// The image measure under `x ↦ A x + b`: `N(Aμ + b, A C Aᵀ)`.
    ///
    /// A singular `A` surfaces as a factorization failure of `A C Aᵀ`.
    pub fn affine_pushforward(&self, a: &DMatrix<f64>, b: &Point) -> Result<Self> {
        let mean = a * &self.mean + b;
        let cov = SpdMatrix::new(a * self.cov.matrix() * a.transpose())?;
        Self::new(mean, cov)
    }
}

/// Draws `dim` independent standard normals.
pub fn standard_normal_vector<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> Point {
    DVector::from_fn(dim, |_, _| StandardNormal.sample(rng))
}

/// Whether derivatives come from closures or central differences.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DerivativeMode {
    Analytic,
    FiniteDifference,
}

type ValueFn = Arc<dyn Fn(&Point) -> f64 + Send + Sync>;
type GradFn = Arc<dyn Fn(&Point) -> Point + Send + Sync>;
type HessFn = Arc<dyn Fn(&Point) -> DMatrix<f64> + Send + Sync>;

/// A scalar function with gradient and Hessian, either supplied analytically
/// or filled in by central finite differences.
#[derive(Clone)]
pub struct SmoothFunction {
    value: ValueFn,
    gradient: Option<GradFn>,
    hessian: Option<HessFn>,
}

impl std::fmt::Debug for SmoothFunction {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SmoothFunction")
            .field("mode", &self.mode())
            .finish()
    }
}

impl SmoothFunction {
    /// Finite-difference derivatives throughout.
    pub fn from_value(value: impl Fn(&Point) -> f64 + Send + Sync + 'static) -> Self {
        Self {
            value: Arc::new(value),
            gradient: None,
            hessian: None,
        }
    }

    pub fn analytic(
        value: impl Fn(&Point) -> f64 + Send + Sync + 'static,
        gradient: impl Fn(&Point) -> Point + Send + Sync + 'static,
        hessian: impl Fn(&Point) -> DMatrix<f64> + Send + Sync + 'static,
    ) -> Self {
        Self {
            value: Arc::new(value),
            gradient: Some(Arc::new(gradient)),
            hessian: Some(Arc::new(hessian)),
        }
    }

    pub fn mode(&self) -> DerivativeMode {
        if self.gradient.is_some() && self.hessian.is_some() {
            DerivativeMode::Analytic
        } else {
            DerivativeMode::FiniteDifference
        }
    }

    pub fn value(&self, x: &Point) -> f64 {
        (self.value)(x)
    }

    pub fn gradient(&self, x: &Point) -> Point {
        match &self.gradient {
            Some(g) => g(x),
            None => fd_gradient(&*self.value, x),
        }
    }

    /// The Hessian, symmetrized to machine precision.
    pub fn hessian(&self, x: &Point) -> DMatrix<f64> {
        let h = match (&self.hessian, &self.gradient) {
            (Some(h), _) => h(x),
            (None, Some(g)) => fd_jacobian_of_gradient(&**g, x),
            (None, None) => fd_hessian_of_value(&*self.value, x),
        };
        (&h + h.transpose()) * 0.5
    }
}

/// Step width for central differences: `h = cbrt(ε) · max(1, |xᵢ|)`.
fn fd_step(xi: f64) -> f64 {
    f64::EPSILON.cbrt() * xi.abs().max(1.0)
}

fn fd_gradient(f: &(dyn Fn(&Point) -> f64 + Send + Sync), x: &Point) -> Point {
    let mut g = DVector::zeros(x.len());
    let mut xp = x.clone();
    for i in 0..x.len() {
        let h = fd_step(x[i]);
        xp[i] = x[i] + h;
        let fp = f(&xp);
        xp[i] = x[i] - h;
        let fm = f(&xp);
        xp[i] = x[i];
        g[i] = (fp - fm) / (2.0 * h);
    }
    g
}

fn fd_jacobian_of_gradient(g: &(dyn Fn(&Point) -> Point + Send + Sync), x: &Point) -> DMatrix<f64> {
    let d = x.len();
    let mut hess = DMatrix::zeros(d, d);
    let mut xp = x.clone();
    for i in 0..d {
        let h = fd_step(x[i]);
        xp[i] = x[i] + h;
        let gp = g(&xp);
        xp[i] = x[i] - h;
        let gm = g(&xp);
        xp[i] = x[i];
        hess.set_column(i, &((gp - gm) / (2.0 * h)));
    }
    hess
}

fn fd_hessian_of_value(f: &(dyn Fn(&Point) -> f64 + Send + Sync), x: &Point) -> DMatrix<f64> {
    let d = x.len();
    // second differences need a larger step to beat roundoff
    let step = |xi: f64| f64::EPSILON.powf(0.25) * xi.abs().max(1.0);
    let mut hess = DMatrix::zeros(d, d);
    let f0 = f(x);
    let mut xp = x.clone();
    for i in 0..d {
        let hi = step(x[i]);
        for j in i..d {
            let hj = step(x[j]);
            let val = if i == j {
                xp[i] = x[i] + hi;
                let fp = f(&xp);
                xp[i] = x[i] - hi;
                let fm = f(&xp);
                xp[i] = x[i];
                (fp - 2.0 * f0 + fm) / (hi * hi)
            } else {
                xp[i] = x[i] + hi;
                xp[j] = x[j] + hj;
                let fpp = f(&xp);
                xp[j] = x[j] - hj;
                let fpm = f(&xp);
                xp[i] = x[i] - hi;
                let fmm = f(&xp);
                xp[j] = x[j] + hj;
                let fmp = f(&xp);
                xp[i] = x[i];
                xp[j] = x[j];
                (fpp - fpm - fmp + fmm) / (4.0 * hi * hj)
            };
            hess[(i, j)] = val;
            hess[(j, i)] = val;
        }
    }
    hess
}

type SupportFn = Arc<dyn Fn(&Point) -> bool + Send + Sync>;

/// The concentrating family `π_n ∝ exp(-n U) π₀` on a common support.
///
/// `U ≥ 0` on the support (the essential infimum is normalized away) and the
/// support indicator is true wherever the reference log density is finite.
#[derive(Clone)]
pub struct TargetFamily {
    dim: usize,
    potential: SmoothFunction,
    log_prior: SmoothFunction,
    support: SupportFn,
}

impl std::fmt::Debug for TargetFamily {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("TargetFamily").field("dim", &self.dim).finish()
    }
}

impl TargetFamily {
    /// A family supported on all of ℝ^d.
    pub fn new(dim: usize, potential: SmoothFunction, log_prior: SmoothFunction) -> Self {
        Self {
            dim,
            potential,
            log_prior,
            support: Arc::new(|_| true),
        }
    }

    pub fn with_support(
        mut self,
        support: impl Fn(&Point) -> bool + Send + Sync + 'static,
    ) -> Self {
        self.support = Arc::new(support);
        self
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn potential(&self) -> &SmoothFunction {
        &self.potential
    }

    pub fn log_prior(&self) -> &SmoothFunction {
        &self.log_prior
    }

    pub fn in_support(&self, x: &Point) -> bool {
        (self.support)(x)
    }

    /// `log π_n(x)` up to the normalizing constant: `-n U(x) + log π₀(x)`.
    ///
    /// States off the support signal [`Error::OutsideSupport`]; consumers
    /// treat the density as -∞ there.
    pub fn log_unnormalized_density(&self, n: f64, x: &Point) -> Result<f64> {
        if !self.in_support(x) {
            return Err(Error::OutsideSupport);
        }
        Ok(-n * self.potential.value(x) + self.log_prior.value(x))
    }
}

/// A standard normal reference with zero potential: the target is `N(0, I_d)`
/// for every `n`. Used as the source chain of affine couplings.
pub fn standard_gaussian_family(dim: usize) -> TargetFamily {
    TargetFamily::new(
        dim,
        SmoothFunction::analytic(
            |_| 0.0,
            {
                move |x: &Point| DVector::zeros(x.len())
            },
            {
                move |x: &Point| DMatrix::zeros(x.len(), x.len())
            },
        ),
        SmoothFunction::analytic(
            move |x: &Point| -0.5 * x.norm_squared() - 0.5 * dim as f64 * LOG_2_PI,
            |x: &Point| -x,
            move |x: &Point| -DMatrix::identity(x.len(), x.len()),
        ),
    )
}
