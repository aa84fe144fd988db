//! Hessian-preconditioned random-walk Metropolis–Hastings for concentrating
//! targets.
//!
//! The crate samples families `π_n(dx) ∝ exp(-n U(x)) π₀(dx)` whose
//! concentration is controlled by `n`, using Gaussian proposals whose
//! covariance comes from the curvature of the log posterior at its mode
//! (`laplace`). Alongside the samplers (`proposals`, `chain`) it ships the
//! machinery needed to check that their efficiency does not degrade as `n`
//! grows:
//!
//! - `diagnostics` — acceptance rate, directional squared jump distance,
//!   autocorrelation time, and n-free Gaussian reference values;
//! - `quadrature` / `distances` — deterministic Gauss–Hermite oracles for
//!   normalizing constants, moments, and total-variation / Hellinger
//!   distances in d ≤ 3;
//! - `pushforward` — exact finite-state transport of stationary measures and
//!   transition kernels along surjective maps, with spectral gaps computed
//!   from the symmetrized kernel, plus the affine coupling that identifies a
//!   preconditioned chain with a standard one;
//! - `catalog` / `experiments` — named example models and the sweep /
//!   rate-study / fuzz runners behind the CLI.
//!
//! ```
//! use hessian_mh::{catalog, chain, diagnostics, laplace, proposals};
//!
//! let entry = catalog::lookup("gauss_ridge")?;
//! let target = entry.target();
//! let la = laplace::laplace_approximation(&target, 10_000.0, &entry.x0())?;
//! let kernel = proposals::ProposalKernel::hessian_rw(la.clone(), 1.0)?;
//! let record = chain::run_chain(&target, 10_000.0, &kernel, la.map_point(),
//!                               5_000, 500, 42)?;
//! let abar = diagnostics::average_acceptance(&record);
//! assert!(abar.value > 0.4 && abar.value < 0.7);
//! # Ok::<(), hessian_mh::Error>(())
//! ```

// validation guards use `!(x > 0)` so NaN parameters are rejected too
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod catalog;
pub mod chain;
pub mod diagnostics;
pub mod distances;
pub mod error;
pub mod experiments;
pub mod laplace;
pub mod linalg;
pub mod measures;
pub mod proposals;
pub mod pushforward;
pub mod quadrature;

pub use error::{Error, Result};
pub use linalg::SpdMatrix;
pub use measures::{GaussianMeasure, Point, SmoothFunction, TargetFamily};
