//! The four Gaussian proposal kernels and their log acceptance-ratio
//! contributions.
//!
//! Everything is computed from log densities; `min{1, exp(·)}` is applied
//! only at the very last step of a transition, so `n·ΔU` never leaves log
//! space. The two autoregressive variants add the log-density ratio of their
//! own invariant Gaussian instead of re-deriving the proposal ratio per call;
//! the two are algebraically identical.

use rand::Rng;

use crate::error::{Error, Result};
use crate::laplace::LaplaceApproximation;
use crate::linalg::SpdMatrix;
use crate::measures::{standard_normal_vector, Point, TargetFamily};

/// A Gaussian proposal kernel.
///
/// - `RandomWalk`: `y ~ N(x, s²C)`, `s > 0`.
/// - `Pcn`: `y ~ N(√(1-s²) x, s²C)`, `s ∈ (0,1]`, reversible w.r.t. `N(0,C)`.
/// - `HessianRw`: `y ~ N(x, s²C_n)` with `C_n` from the curvature
///   approximation, `s > 0`.
/// - `ModifiedPcn`: `y ~ N(x_n + √(1-s²)(x-x_n), s²C_n)`, `s ∈ (0,1]`,
///   reversible w.r.t. `N(x_n, C_n)`; `s = 1` is the independence sampler.
#[derive(Debug, Clone)]
pub enum ProposalKernel {
    RandomWalk { cov: SpdMatrix, step: f64 },
    Pcn { cov: SpdMatrix, step: f64 },
    HessianRw { la: LaplaceApproximation, step: f64 },
    ModifiedPcn { la: LaplaceApproximation, step: f64 },
}

impl ProposalKernel {
    pub fn random_walk(cov: SpdMatrix, step: f64) -> Result<Self> {
        if !(step > 0.0) {
            return Err(Error::Config(format!("random walk step must be > 0, got {step}")));
        }
        Ok(Self::RandomWalk { cov, step })
    }

    pub fn pcn(cov: SpdMatrix, step: f64) -> Result<Self> {
        if !(step > 0.0 && step <= 1.0) {
            return Err(Error::Config(format!("pCN step must lie in (0, 1], got {step}")));
        }
        Ok(Self::Pcn { cov, step })
    }

    pub fn hessian_rw(la: LaplaceApproximation, step: f64) -> Result<Self> {
        if !(step > 0.0) {
            return Err(Error::Config(format!("random walk step must be > 0, got {step}")));
        }
        Ok(Self::HessianRw { la, step })
    }

    pub fn modified_pcn(la: LaplaceApproximation, step: f64) -> Result<Self> {
        if !(step > 0.0 && step <= 1.0) {
            return Err(Error::Config(format!("pCN step must lie in (0, 1], got {step}")));
        }
        Ok(Self::ModifiedPcn { la, step })
    }

    pub fn dim(&self) -> usize {
        match self {
            Self::RandomWalk { cov, .. } | Self::Pcn { cov, .. } => cov.dim(),
            Self::HessianRw { la, .. } | Self::ModifiedPcn { la, .. } => la.dim(),
        }
    }

    pub fn step(&self) -> f64 {
        match self {
            Self::RandomWalk { step, .. }
            | Self::Pcn { step, .. }
            | Self::HessianRw { step, .. }
            | Self::ModifiedPcn { step, .. } => *step,
        }
    }

    /// Short name for records and report rows.
    pub fn descriptor(&self) -> String {
        match self {
            Self::RandomWalk { step, .. } => format!("rw(s={step})"),
            Self::Pcn { step, .. } => format!("pcn(s={step})"),
            Self::HessianRw { step, .. } => format!("rw-hessian(s={step})"),
            Self::ModifiedPcn { step, .. } => format!("pcn-modified(s={step})"),
        }
    }

    /// The proposal as a deterministic function of the noise vector `z`.
    pub fn propose_with_noise(&self, x: &Point, z: &Point) -> Point {
        match self {
            Self::RandomWalk { cov, step } => x + cov.apply_factor(z) * *step,
            Self::Pcn { cov, step } => {
                x * (1.0 - step * step).sqrt() + cov.apply_factor(z) * *step
            }
            Self::HessianRw { la, step } => x + la.covariance().apply_factor(z) * *step,
            Self::ModifiedPcn { la, step } => {
                let m = la.map_point();
                m + (x - m) * (1.0 - step * step).sqrt()
                    + la.covariance().apply_factor(z) * *step
            }
        }
    }

    pub fn propose<R: Rng + ?Sized>(&self, x: &Point, rng: &mut R) -> Point {
        let z = standard_normal_vector(self.dim(), rng);
        self.propose_with_noise(x, &z)
    }

    /// `log r(x, y)` with acceptance probability `α = min{1, exp(log r)}`
    /// for the chain targeting `π_n ∝ exp(-nU) π₀`.
    ///
    /// For the random-walk variants `log r = n[U(x) - U(y)] + log π₀(y) -
    /// log π₀(x)`; the autoregressive variants additionally pick up
    /// `log φ(x) - log φ(y)` for the kernel's invariant Gaussian φ. A
    /// proposal off the support returns -∞ (certain rejection); a current
    /// state off the support means the chain is corrupted and is an error.
    pub fn log_acceptance_ratio(
        &self,
        target: &TargetFamily,
        n: f64,
        x: &Point,
        y: &Point,
    ) -> Result<f64> {
        if !target.in_support(x) {
            return Err(Error::InvalidState(
                "current state lies outside the reference support".into(),
            ));
        }
        if !target.in_support(y) {
            return Ok(f64::NEG_INFINITY);
        }
        let du = n * (target.potential().value(x) - target.potential().value(y));
        let dprior = target.log_prior().value(y) - target.log_prior().value(x);
        let dphi = match self {
            Self::RandomWalk { .. } | Self::HessianRw { .. } => 0.0,
            Self::Pcn { cov, .. } => {
                // log φ_{0,C}(x) - log φ_{0,C}(y); log-determinants cancel
                0.5 * (cov.inv_quad_form(y) - cov.inv_quad_form(x))
            }
            Self::ModifiedPcn { la, .. } => {
                let m = la.map_point();
                let c = la.covariance();
                0.5 * (c.inv_quad_form(&(y - m)) - c.inv_quad_form(&(x - m)))
            }
        };
        Ok(du + dprior + dphi)
    }
}
