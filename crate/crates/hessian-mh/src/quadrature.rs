//! Tensor Gauss–Hermite quadrature in coordinates standardized by a Gaussian
//! approximation of the integrand.
//!
//! Integrals are assembled in log space with a running max-subtraction so
//! that densities scaled by `exp(-nU)` at `n = 10⁴` neither underflow nor
//! overflow. Node counts double until two successive estimates agree.

use std::collections::HashMap;
use std::sync::Mutex;

use nalgebra::{DMatrix, DVector};
use once_cell::sync::Lazy;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::SpdMatrix;
use crate::measures::Point;

/// Quadrature is tensor-product; above this dimension it refuses to run.
pub const MAX_QUADRATURE_DIM: usize = 3;

/// Nodes and log-weights of the m-point Hermite rule for weight `e^{-t²}`.
///
/// Weights are stored in logs: past |t| ≈ 27 they underflow f64 outright,
/// yet reweighted integrands still need them to full relative accuracy.
#[derive(Debug, Clone)]
pub struct HermiteRule {
    pub nodes: Vec<f64>,
    pub log_weights: Vec<f64>,
}

fn compute_hermite_rule(m: usize) -> HermiteRule {
    // Golub-Welsch eigenvalues of the symmetric tridiagonal Jacobi matrix
    // give the nodes. The weights come from the Christoffel identity
    // w_i = 1 / Σ_{k<m} p_k(x_i)² for the orthonormal Hermite family; the
    // sum is accumulated with a running log offset because it reaches
    // e^{x²} in the far tail. Eigenvector components would lose all
    // relative accuracy out there.
    let mut jacobi = DMatrix::zeros(m, m);
    for k in 1..m {
        let b = (k as f64 / 2.0).sqrt();
        jacobi[(k - 1, k)] = b;
        jacobi[(k, k - 1)] = b;
    }
    let mut nodes: Vec<f64> = nalgebra::SymmetricEigen::new(jacobi)
        .eigenvalues
        .iter()
        .copied()
        .collect();
    nodes.sort_by(f64::total_cmp);
    let log_weights = nodes.iter().map(|&x| hermite_log_weight(m, x)).collect();
    HermiteRule { nodes, log_weights }
}

/// `log w = -log Σ_{k=0}^{m-1} p_k(x)²` with the orthonormal recurrence
/// `p_{k+1} = (x p_k - √(k/2) p_{k-1}) / √((k+1)/2)`, rescaled on the fly.
fn hermite_log_weight(m: usize, x: f64) -> f64 {
    const RESCALE: f64 = 1e150;
    let mut offset = 0.0f64; // log of the running scale factor
    let mut prev = 0.0f64;
    let mut curr = std::f64::consts::PI.powf(-0.25);
    // log-sum-exp accumulator of 2(log|p_k| + offset)
    let mut max = 2.0 * curr.ln();
    let mut sum = 1.0f64;
    for k in 0..m - 1 {
        let next = (x * curr - (k as f64 / 2.0).sqrt() * prev) / ((k as f64 + 1.0) / 2.0).sqrt();
        prev = curr;
        curr = next;
        if curr.abs() > RESCALE || prev.abs() > RESCALE {
            prev /= RESCALE;
            curr /= RESCALE;
            offset += RESCALE.ln();
        }
        if curr != 0.0 {
            let term = 2.0 * (curr.abs().ln() + offset);
            if term > max {
                sum = sum * (max - term).exp() + 1.0;
                max = term;
            } else {
                sum += (term - max).exp();
            }
        }
    }
    -(max + sum.ln())
}

static RULE_CACHE: Lazy<Mutex<HashMap<usize, HermiteRule>>> =
    Lazy::new(|| Mutex::new(HashMap::new()));

/// The m-point rule, memoized across calls.
pub fn hermite_rule(m: usize) -> HermiteRule {
    let mut cache = RULE_CACHE.lock().unwrap();
    cache
        .entry(m)
        .or_insert_with(|| compute_hermite_rule(m))
        .clone()
}

/// Nodes and weights of the m-point Legendre rule on `[-1, 1]`.
#[derive(Debug, Clone)]
pub struct LegendreRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

static LEGENDRE_CACHE: Lazy<Mutex<HashMap<usize, LegendreRule>>> =
    Lazy::new(|| Mutex::new(HashMap::new()));

pub fn legendre_rule(m: usize) -> LegendreRule {
    let mut cache = LEGENDRE_CACHE.lock().unwrap();
    cache
        .entry(m)
        .or_insert_with(|| {
            let mut jacobi = DMatrix::zeros(m, m);
            for k in 1..m {
                let kf = k as f64;
                let b = kf / (4.0 * kf * kf - 1.0).sqrt();
                jacobi[(k - 1, k)] = b;
                jacobi[(k, k - 1)] = b;
            }
            let eig = nalgebra::SymmetricEigen::new(jacobi);
            let mut paired: Vec<(f64, f64)> = (0..m)
                .map(|i| {
                    let v0 = eig.eigenvectors[(0, i)];
                    (eig.eigenvalues[i], 2.0 * v0 * v0)
                })
                .collect();
            paired.sort_by(|a, b| a.0.total_cmp(&b.0));
            LegendreRule {
                nodes: paired.iter().map(|p| p.0).collect(),
                weights: paired.iter().map(|p| p.1).collect(),
            }
        })
        .clone()
}

/// `∫_a^b f` by composite Gauss–Legendre with panels of width ≤ 1.
pub fn integrate_panels(a: f64, b: f64, f: impl Fn(f64) -> f64) -> f64 {
    if !(b > a) {
        return 0.0;
    }
    let rule = legendre_rule(16);
    let panels = ((b - a).ceil() as usize).max(1);
    let width = (b - a) / panels as f64;
    let mut total = 0.0;
    for p in 0..panels {
        let lo = a + p as f64 * width;
        let half = 0.5 * width;
        let mid = lo + half;
        for (t, w) in rule.nodes.iter().zip(&rule.weights) {
            total += w * half * f(mid + half * t);
        }
    }
    total
}

/// Streaming log-sum-exp accumulator for nonnegative integrands, with a
/// parallel signed companion for weighted moments.
#[derive(Debug, Clone, Copy)]
struct LogAccumulator {
    max: f64,
    /// Σ exp(ℓ - max) over the density terms.
    mass: f64,
    /// Σ exp(ℓ - max)·f for an attached signed payload.
    weighted: f64,
}

impl LogAccumulator {
    fn new() -> Self {
        Self {
            max: f64::NEG_INFINITY,
            mass: 0.0,
            weighted: 0.0,
        }
    }

    fn push(&mut self, log_term: f64, payload: f64) {
        if log_term == f64::NEG_INFINITY {
            return;
        }
        if log_term > self.max {
            let rescale = (self.max - log_term).exp();
            self.mass *= rescale;
            self.weighted *= rescale;
            self.max = log_term;
        }
        let w = (log_term - self.max).exp();
        self.mass += w;
        self.weighted += w * payload;
    }

    fn merge(mut self, other: Self) -> Self {
        if other.max == f64::NEG_INFINITY {
            return self;
        }
        if self.max == f64::NEG_INFINITY {
            return other;
        }
        if other.max > self.max {
            return other.merge(self);
        }
        let rescale = (other.max - self.max).exp();
        self.mass += other.mass * rescale;
        self.weighted += other.weighted * rescale;
        self
    }

    fn log_mass(&self) -> f64 {
        if self.mass <= 0.0 {
            f64::NEG_INFINITY
        } else {
            self.max + self.mass.ln()
        }
    }

    /// Ratio Σwf / Σw; the shared max cancels.
    fn mean_payload(&self) -> f64 {
        self.weighted / self.mass
    }
}

/// A tensor grid standardized by `x = center + C^{1/2}·√2·t`, where `C^{1/2}`
/// is the Cholesky factor of the supplied covariance.
#[derive(Debug, Clone)]
pub struct QuadratureGrid {
    center: Point,
    scale: DMatrix<f64>,
    /// `log |det C^{1/2}| + (d/2) log 2`, the constant Jacobian.
    log_jacobian: f64,
    rule: HermiteRule,
    nodes_per_axis: usize,
}

impl QuadratureGrid {
    pub fn standardized(center: &Point, cov: &SpdMatrix, nodes_per_axis: usize) -> Result<Self> {
        let d = center.len();
        if d == 0 || d > MAX_QUADRATURE_DIM {
            return Err(Error::DimensionTooLarge {
                dim: d,
                max: MAX_QUADRATURE_DIM,
            });
        }
        if cov.dim() != d {
            return Err(Error::Config(format!(
                "grid center has dimension {d}, covariance {}",
                cov.dim()
            )));
        }
        let scale = cov.factor().clone();
        let log_det_scale = scale.diagonal().iter().map(|l| l.ln()).sum::<f64>();
        Ok(Self {
            center: center.clone(),
            scale,
            log_jacobian: log_det_scale + 0.5 * d as f64 * std::f64::consts::LN_2,
            rule: hermite_rule(nodes_per_axis),
            nodes_per_axis,
        })
    }

    pub fn dim(&self) -> usize {
        self.center.len()
    }

    pub fn nodes_per_axis(&self) -> usize {
        self.nodes_per_axis
    }

    fn point_at(&self, index: &[usize]) -> (Point, f64) {
        let d = self.dim();
        let mut t = DVector::zeros(d);
        let mut logw = self.log_jacobian;
        for (axis, &i) in index.iter().enumerate() {
            let node = self.rule.nodes[i];
            t[axis] = std::f64::consts::SQRT_2 * node;
            // reweight by e^{t²} to undo the Hermite weight
            logw += self.rule.log_weights[i] + node * node;
        }
        (&self.center + &self.scale * t, logw)
    }

    /// `(log ∫ exp(log_f) dx, ∫ exp(log_f)·payload dx / ∫ exp(log_f) dx)`.
    ///
    /// One sweep gives both the log-mass and the payload mean, sharing the
    /// same max-subtraction; `log_f = -∞` nodes are skipped.
    pub fn log_mass_and_mean<F, G>(&self, log_f: F, payload: G) -> (f64, f64)
    where
        F: Fn(&Point) -> f64 + Sync,
        G: Fn(&Point) -> f64 + Sync,
    {
        let m = self.nodes_per_axis;
        let d = self.dim();
        let fold_axis = |first: usize| {
            let mut acc = LogAccumulator::new();
            let mut index = vec![0usize; d];
            index[0] = first;
            loop {
                let (x, logw) = self.point_at(&index);
                let lf = log_f(&x);
                if lf.is_finite() || lf == f64::NEG_INFINITY {
                    acc.push(logw + lf, if lf == f64::NEG_INFINITY { 0.0 } else { payload(&x) });
                }
                // odometer over axes 1..d
                let mut axis = 1;
                loop {
                    if axis >= d {
                        return acc;
                    }
                    index[axis] += 1;
                    if index[axis] < m {
                        break;
                    }
                    index[axis] = 0;
                    axis += 1;
                }
            }
        };
        let acc = if d == 1 {
            (0..m).map(fold_axis).fold(LogAccumulator::new(), LogAccumulator::merge)
        } else {
            // merge the per-slab accumulators in index order so results are
            // bit-reproducible regardless of scheduling
            (0..m)
                .into_par_iter()
                .map(fold_axis)
                .collect::<Vec<_>>()
                .into_iter()
                .fold(LogAccumulator::new(), LogAccumulator::merge)
        };
        (acc.log_mass(), acc.mean_payload())
    }

    /// `log ∫ exp(log_f(x)) dx` for a nonnegative integrand given in logs.
    pub fn log_integral<F>(&self, log_f: F) -> f64
    where
        F: Fn(&Point) -> f64 + Sync,
    {
        self.log_mass_and_mean(log_f, |_| 0.0).0
    }
}

/// Node-count doubling schedule per dimension.
pub fn refinement_schedule(dim: usize) -> &'static [usize] {
    match dim {
        1 => &[32, 64, 128, 256, 512],
        2 => &[24, 48, 96, 192],
        _ => &[16, 32, 64],
    }
}

/// Outcome of an adaptive refinement, with the error estimate from the last
/// doubling.
#[derive(Debug, Clone, Copy)]
pub struct Refined {
    pub value: f64,
    pub error_estimate: f64,
    pub nodes_per_axis: usize,
}

/// Doubles nodes until `|v_k - v_{k-1}| ≤ atol + rtol·|v_k|`.
///
/// `eval` maps a grid to the quantity of interest; non-convergence carries
/// the last two estimates.
pub fn refine<F>(center: &Point, cov: &SpdMatrix, rtol: f64, atol: f64, eval: F) -> Result<Refined>
where
    F: Fn(&QuadratureGrid) -> f64,
{
    let mut history: Vec<f64> = Vec::new();
    for &m in refinement_schedule(center.len()) {
        let grid = QuadratureGrid::standardized(center, cov, m)?;
        let value = eval(&grid);
        if let Some(&prev) = history.last() {
            let err = (value - prev).abs();
            if err <= atol + rtol * value.abs() {
                return Ok(Refined {
                    value,
                    error_estimate: err,
                    nodes_per_axis: m,
                });
            }
        }
        history.push(value);
    }
    let last = *history.last().expect("schedule is never empty");
    let previous = if history.len() >= 2 {
        history[history.len() - 2]
    } else {
        f64::NAN
    };
    Err(Error::QuadratureDidNotConverge { previous, last })
}
