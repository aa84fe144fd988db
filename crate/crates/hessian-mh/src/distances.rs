//! Deterministic quadrature oracles in d ≤ 3: normalizing constants,
//! posterior moments, total-variation and Hellinger distances, and the
//! decay studies built on them.

use crate::error::{Error, Result};
use crate::laplace::{laplace_approximation, LaplaceApproximation};
use crate::linalg::SpdMatrix;
use crate::measures::{Point, TargetFamily};
use crate::quadrature::{refine, refinement_schedule, QuadratureGrid, Refined};

/// Default relative tolerance of the adaptive refinements.
pub const QUAD_RTOL: f64 = 1e-9;
const QUAD_ATOL: f64 = 1e-12;

/// Quadrature access to one member `π_n` of a target family, standardized by
/// its Gaussian curvature approximation so node counts stay flat in `n`.
#[derive(Debug, Clone)]
pub struct PosteriorQuadrature<'a> {
    target: &'a TargetFamily,
    n: f64,
    la: LaplaceApproximation,
}

impl<'a> PosteriorQuadrature<'a> {
    pub fn new(target: &'a TargetFamily, n: f64, x0: &Point) -> Result<Self> {
        let la = laplace_approximation(target, n, x0)?;
        Ok(Self { target, n, la })
    }

    pub fn from_approximation(target: &'a TargetFamily, la: LaplaceApproximation) -> Self {
        Self {
            target,
            n: la.n(),
            la,
        }
    }

    pub fn approximation(&self) -> &LaplaceApproximation {
        &self.la
    }

    fn log_unnorm(&self, x: &Point) -> f64 {
        self.target
            .log_unnormalized_density(self.n, x)
            .unwrap_or(f64::NEG_INFINITY)
    }

    /// `log Z_n = log ∫ exp(-nU) π₀ dx`.
    pub fn log_normalizing_constant(&self) -> Result<f64> {
        let refined = refine(
            self.la.map_point(),
            self.la.covariance(),
            QUAD_RTOL,
            QUAD_ATOL,
            |grid| grid.log_integral(|x| self.log_unnorm(x)),
        )?;
        Ok(refined.value)
    }

    /// `Z_n` itself; positive, with the refinement's error estimate applied
    /// on the log scale.
    pub fn normalizing_constant(&self) -> Result<f64> {
        Ok(self.log_normalizing_constant()?.exp())
    }

    /// The posterior expectation `π_n(f)`.
    pub fn moment(&self, f: impl Fn(&Point) -> f64 + Sync) -> Result<f64> {
        let refined = refine(
            self.la.map_point(),
            self.la.covariance(),
            QUAD_RTOL,
            QUAD_ATOL,
            |grid| grid.log_mass_and_mean(|x| self.log_unnorm(x), &f).1,
        )?;
        Ok(refined.value)
    }

    /// `Var_{π_n}(f)`, computed around the quadrature mean.
    pub fn variance(&self, f: impl Fn(&Point) -> f64 + Sync) -> Result<f64> {
        let mean = self.moment(&f)?;
        self.moment(|x| {
            let d = f(x) - mean;
            d * d
        })
    }

    /// A normalized log-density closure for distance computations.
    pub fn normalized_log_density(&self) -> Result<impl Fn(&Point) -> f64 + Sync + '_> {
        let log_z = self.log_normalizing_constant()?;
        Ok(move |x: &Point| self.log_unnorm(x) - log_z)
    }
}

/// `½ ∫ |p - q|` for two normalized log densities, integrated on grids
/// standardized by `(center, cov)`.
///
/// The integrand has kinks where the densities cross. In d = 1 the
/// crossings are located explicitly and the pieces integrated separately,
/// which restores spectral accuracy; in d ≥ 2 the tensor grid is used as-is
/// and the result carries the kink's slower convergence.
pub fn tv_distance(
    center: &Point,
    cov: &SpdMatrix,
    log_p: impl Fn(&Point) -> f64 + Sync,
    log_q: impl Fn(&Point) -> f64 + Sync,
) -> Result<f64> {
    if center.len() == 1 {
        return Ok(tv_distance_1d(center[0], cov.factor()[(0, 0)], &log_p, &log_q));
    }
    // kink-limited accuracy on tensor grids
    let refined = refine(center, cov, 5e-3, 1e-6, |grid| {
        0.5 * grid.log_integral(|x| log_abs_diff_exp(log_p(x), log_q(x))).exp()
    })?;
    Ok(refined.value.clamp(0.0, 1.0))
}

/// Standardized half-width of the 1-d integration window; both densities
/// are negligible this many scale units out.
const TV_WINDOW: f64 = 14.0;

fn tv_distance_1d(
    center: f64,
    scale: f64,
    log_p: &(impl Fn(&Point) -> f64 + Sync),
    log_q: &(impl Fn(&Point) -> f64 + Sync),
) -> f64 {
    let point = |t: f64| nalgebra::dvector![center + scale * t];
    let diff = |t: f64| {
        let x = point(t);
        let (a, b) = (log_p(&x), log_q(&x));
        if a == f64::NEG_INFINITY && b == f64::NEG_INFINITY {
            0.0
        } else if a >= b {
            a.exp() - b.exp()
        } else {
            -(b.exp() - a.exp())
        }
    };
    // locate sign changes on a fine scan, then bisect them down
    const SCAN: usize = 4000;
    let mut cuts = vec![-TV_WINDOW];
    let mut prev_t = -TV_WINDOW;
    let mut prev_v = diff(prev_t);
    for i in 1..=SCAN {
        let t = -TV_WINDOW + 2.0 * TV_WINDOW * i as f64 / SCAN as f64;
        let v = diff(t);
        if v == 0.0 {
            cuts.push(t);
        } else if prev_v != 0.0 && prev_v.signum() != v.signum() {
            let (mut lo, mut hi, mut flo) = (prev_t, t, prev_v);
            for _ in 0..80 {
                let mid = 0.5 * (lo + hi);
                let fm = diff(mid);
                if fm == 0.0 {
                    lo = mid;
                    break;
                }
                if fm.signum() == flo.signum() {
                    lo = mid;
                    flo = fm;
                } else {
                    hi = mid;
                }
            }
            cuts.push(0.5 * (lo + hi));
        }
        prev_t = t;
        prev_v = v;
    }
    cuts.push(TV_WINDOW);
    let mut total = 0.0;
    for pair in cuts.windows(2) {
        total += crate::quadrature::integrate_panels(pair[0], pair[1], |t| diff(t).abs()).abs();
    }
    (0.5 * total * scale).clamp(0.0, 1.0)
}

/// Hellinger distance `(∫ (√p - √q)²)^{1/2}`, valued in `[0, √2]`.
pub fn hellinger_distance(
    center: &Point,
    cov: &SpdMatrix,
    log_p: impl Fn(&Point) -> f64 + Sync,
    log_q: impl Fn(&Point) -> f64 + Sync,
) -> Result<f64> {
    let refined = refine(center, cov, QUAD_RTOL, QUAD_ATOL, |grid| {
        grid.log_integral(|x| 2.0 * log_abs_diff_exp(0.5 * log_p(x), 0.5 * log_q(x)))
            .exp()
    })?;
    Ok(refined.value.max(0.0).sqrt().min(std::f64::consts::SQRT_2))
}

/// `log |e^a - e^b|` without leaving log space.
fn log_abs_diff_exp(a: f64, b: f64) -> f64 {
    if a == b {
        return f64::NEG_INFINITY;
    }
    let (hi, lo) = if a > b { (a, b) } else { (b, a) };
    if hi == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    // ln(1 - e^{lo-hi}) via ln_1p for accuracy near coincidence
    hi + (-((lo - hi).exp())).ln_1p()
}

/// One row of a Hellinger/TV decay table.
#[derive(Debug, Clone, Copy)]
pub struct RatePoint {
    pub n: f64,
    pub hellinger: f64,
    pub tv: f64,
}

/// Decay table plus the fitted log-log slope of `d_H` against `n`.
#[derive(Debug, Clone)]
pub struct RateStudy {
    pub points: Vec<RatePoint>,
    pub slope: f64,
}

/// Distances between `π_n` and its Gaussian curvature approximation over an
/// `n`-grid, with the least-squares slope of `ln d_H` vs `ln n`.
pub fn hellinger_rate_study(
    target: &TargetFamily,
    x0: &Point,
    n_grid: &[f64],
) -> Result<RateStudy> {
    if n_grid.is_empty() {
        return Err(Error::Config("rate study needs a nonempty n grid".into()));
    }
    let mut points = Vec::with_capacity(n_grid.len());
    for &n in n_grid {
        let pq = PosteriorQuadrature::new(target, n, x0)?;
        let gauss = pq.approximation().gaussian()?;
        let log_p = pq.normalized_log_density()?;
        let log_q = |x: &Point| gauss.log_density(x);
        let center = pq.approximation().map_point().clone();
        let cov = pq.approximation().covariance().clone();
        let hellinger = hellinger_distance(&center, &cov, &log_p, log_q)?;
        let tv = tv_distance(&center, &cov, &log_p, log_q)?;
        points.push(RatePoint { n, hellinger, tv });
    }
    Ok(RateStudy {
        slope: log_log_slope(
            points.iter().map(|p| p.n),
            points.iter().map(|p| p.hellinger),
        ),
        points,
    })
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn log_log_slope(xs: impl Iterator<Item = f64>, ys: impl Iterator<Item = f64>) -> f64 {
    let pairs: Vec<(f64, f64)> = xs
        .zip(ys)
        .filter(|&(x, y)| x > 0.0 && y > 0.0)
        .map(|(x, y)| (x.ln(), y.ln()))
        .collect();
    let m = pairs.len() as f64;
    let mean_x = pairs.iter().map(|p| p.0).sum::<f64>() / m;
    let mean_y = pairs.iter().map(|p| p.1).sum::<f64>() / m;
    let sxy: f64 = pairs.iter().map(|p| (p.0 - mean_x) * (p.1 - mean_y)).sum();
    let sxx: f64 = pairs.iter().map(|p| (p.0 - mean_x) * (p.0 - mean_x)).sum();
    sxy / sxx
}

/// One row of the informed-subspace table: `n · vᵀ C_n v` per direction.
#[derive(Debug, Clone)]
pub struct SubspaceRow {
    pub n: f64,
    pub scaled_variances: Vec<f64>,
}

/// Tabulates `n · vᵀ C_n v` over the grid: bounded along directions the
/// likelihood informs, growing like `n` along the rest.
pub fn informed_subspace_check(
    target: &TargetFamily,
    x0: &Point,
    n_grid: &[f64],
    directions: &[Point],
) -> Result<Vec<SubspaceRow>> {
    let mut rows = Vec::with_capacity(n_grid.len());
    for &n in n_grid {
        let la = laplace_approximation(target, n, x0)?;
        let scaled = directions
            .iter()
            .map(|v| n * v.dot(&(la.covariance().matrix() * v)))
            .collect();
        rows.push(SubspaceRow {
            n,
            scaled_variances: scaled,
        });
    }
    Ok(rows)
}

/// Diagnostic used by the grid type's contract: successive refinements of a
/// deliberately mismatched integrand, for testing that the estimated error
/// at least halves per doubling.
pub fn refinement_errors(
    center: &Point,
    cov: &SpdMatrix,
    log_f: impl Fn(&Point) -> f64 + Sync,
) -> Result<Vec<f64>> {
    let mut values = Vec::new();
    for &m in refinement_schedule(center.len()) {
        let grid = QuadratureGrid::standardized(center, cov, m)?;
        values.push(grid.log_integral(&log_f).exp());
    }
    Ok(values.windows(2).map(|w| (w[1] - w[0]).abs()).collect())
}

/// Convenience wrapper: the quadrature answer plus its refinement error.
pub fn refined_moment(
    target: &TargetFamily,
    n: f64,
    x0: &Point,
    f: impl Fn(&Point) -> f64 + Sync,
) -> Result<Refined> {
    let pq = PosteriorQuadrature::new(target, n, x0)?;
    refine(
        pq.approximation().map_point(),
        pq.approximation().covariance(),
        QUAD_RTOL,
        QUAD_ATOL,
        |grid| grid.log_mass_and_mean(|x| pq.log_unnorm(x), &f).1,
    )
}
