//! Shared quadrature helpers for the integration suites: deterministic
//! references for acceptance rates and jump distances of one-dimensional
//! chains, plus Gaussian closed forms.

#![allow(dead_code)]

use hessian_mh::laplace::LaplaceApproximation;
use hessian_mh::measures::TargetFamily;
use hessian_mh::proposals::ProposalKernel;
use hessian_mh::quadrature::hermite_rule;
use nalgebra::dvector;

pub fn normal_cdf(x: f64) -> f64 {
    0.5 * statrs::function::erf::erfc(-x / std::f64::consts::SQRT_2)
}

/// Posterior-weighted outer nodes standardized by the Gaussian
/// approximation: points `x_i` and normalized weights `ŵ_i`.
pub fn posterior_nodes(
    target: &TargetFamily,
    n: f64,
    la: &LaplaceApproximation,
    m: usize,
) -> (Vec<f64>, Vec<f64>) {
    assert_eq!(target.dim(), 1, "helper is one-dimensional");
    let rule = hermite_rule(m);
    let center = la.map_point()[0];
    let scale = la.covariance().factor()[(0, 0)];
    let xs: Vec<f64> = rule
        .nodes
        .iter()
        .map(|&t| center + scale * std::f64::consts::SQRT_2 * t)
        .collect();
    let logs: Vec<f64> = xs
        .iter()
        .zip(rule.nodes.iter().zip(&rule.log_weights))
        .map(|(&x, (&t, &lw))| {
            let lp = target
                .log_unnormalized_density(n, &dvector![x])
                .unwrap_or(f64::NEG_INFINITY);
            lw + t * t + lp
        })
        .collect();
    let max = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let raw: Vec<f64> = logs.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = raw.iter().sum();
    (xs, raw.iter().map(|w| w / total).collect())
}

/// Standard normal integration nodes (`z_j`, weights) for the proposal
/// noise: `E[g(Z)] ≈ Σ v_j g(z_j)` with `v_j = w_j/√π`.
pub fn noise_nodes(m: usize) -> (Vec<f64>, Vec<f64>) {
    let rule = hermite_rule(m);
    let zs: Vec<f64> = rule
        .nodes
        .iter()
        .map(|&t| std::f64::consts::SQRT_2 * t)
        .collect();
    let ws: Vec<f64> = rule
        .log_weights
        .iter()
        .map(|&lw| (lw - 0.5 * std::f64::consts::PI.ln()).exp())
        .collect();
    (zs, ws)
}

/// Quadrature value of the stationary average acceptance rate
/// `ᾱ = ∫∫ α(x,y) P(x,dy) π_n(dx)` for a one-dimensional kernel.
pub fn quadrature_abar(
    target: &TargetFamily,
    n: f64,
    kernel: &ProposalKernel,
    la: &LaplaceApproximation,
    m: usize,
) -> f64 {
    let (xs, ws) = posterior_nodes(target, n, la, m);
    let (zs, vs) = noise_nodes(m);
    let mut total = 0.0;
    for (x, w) in xs.iter().zip(&ws) {
        let xv = dvector![*x];
        let mut inner = 0.0;
        for (z, v) in zs.iter().zip(&vs) {
            let y = kernel.propose_with_noise(&xv, &dvector![*z]);
            let lr = kernel.log_acceptance_ratio(target, n, &xv, &y).unwrap();
            inner += v * lr.min(0.0).exp();
        }
        total += w * inner;
    }
    total
}

/// Quadrature value of the normalized squared jump distance
/// `ρ̄_f = ∫∫ |f(x)-f(y)|² α P π / Var_π(f)` for `f(x) = x`.
pub fn quadrature_nesjd(
    target: &TargetFamily,
    n: f64,
    kernel: &ProposalKernel,
    la: &LaplaceApproximation,
    m: usize,
) -> f64 {
    let (xs, ws) = posterior_nodes(target, n, la, m);
    let (zs, vs) = noise_nodes(m);
    let mean: f64 = xs.iter().zip(&ws).map(|(x, w)| x * w).sum();
    let var: f64 = xs.iter().zip(&ws).map(|(x, w)| w * (x - mean) * (x - mean)).sum();
    let mut total = 0.0;
    for (x, w) in xs.iter().zip(&ws) {
        let xv = dvector![*x];
        let mut inner = 0.0;
        for (z, v) in zs.iter().zip(&vs) {
            let y = kernel.propose_with_noise(&xv, &dvector![*z]);
            let lr = kernel.log_acceptance_ratio(target, n, &xv, &y).unwrap();
            let jump = y[0] - x;
            inner += v * jump * jump * lr.min(0.0).exp();
        }
        total += w * inner;
    }
    total / var
}

/// `ν(|Δf|⁴) = ∫∫ |f(x)-f(y)|⁴ P(x,dy) μ(dx)` for `f(x) = x`, with μ given
/// by weighted nodes.
pub fn quadrature_fourth_moment(xs: &[f64], ws: &[f64], kernel: &ProposalKernel, m: usize) -> f64 {
    let (zs, vs) = noise_nodes(m);
    let mut total = 0.0;
    for (x, w) in xs.iter().zip(ws) {
        let xv = dvector![*x];
        let mut inner = 0.0;
        for (z, v) in zs.iter().zip(&vs) {
            let y = kernel.propose_with_noise(&xv, &dvector![*z]);
            let jump: f64 = y[0] - x;
            inner += v * jump.powi(4);
        }
        total += w * inner;
    }
    total
}

/// Gaussian-weighted nodes for an arbitrary 1-d Gaussian measure.
pub fn gaussian_nodes(mean: f64, sd: f64, m: usize) -> (Vec<f64>, Vec<f64>) {
    let rule = hermite_rule(m);
    let xs: Vec<f64> = rule
        .nodes
        .iter()
        .map(|&t| mean + sd * std::f64::consts::SQRT_2 * t)
        .collect();
    let ws: Vec<f64> = rule
        .log_weights
        .iter()
        .map(|&lw| (lw - 0.5 * std::f64::consts::PI.ln()).exp())
        .collect();
    (xs, ws)
}

/// Hellinger distance between two Gaussians in closed form.
pub fn gaussian_hellinger(m1: f64, v1: f64, m2: f64, v2: f64) -> f64 {
    let bc = ((2.0 * (v1 * v2).sqrt()) / (v1 + v2)).sqrt()
        * (-(m1 - m2) * (m1 - m2) / (4.0 * (v1 + v2))).exp();
    (2.0 * (1.0 - bc)).max(0.0).sqrt()
}

/// Total variation between two 1-d Gaussians via the density crossings.
pub fn gaussian_tv(m1: f64, v1: f64, m2: f64, v2: f64) -> f64 {
    let (s1, s2) = (v1.sqrt(), v2.sqrt());
    // log p1 - log p2 is the quadratic a x² + b x + c
    let a = 0.5 * (1.0 / v2 - 1.0 / v1);
    let b = m1 / v1 - m2 / v2;
    let c = 0.5 * (m2 * m2 / v2 - m1 * m1 / v1) + (s2 / s1).ln();
    let mut roots: Vec<f64> = if a.abs() < 1e-300 {
        if b.abs() < 1e-300 {
            vec![]
        } else {
            vec![-c / b]
        }
    } else {
        let disc = b * b - 4.0 * a * c;
        if disc <= 0.0 {
            vec![]
        } else {
            let q = -0.5 * (b + b.signum() * disc.sqrt());
            let mut r = vec![q / a, c / q];
            r.sort_by(f64::total_cmp);
            r
        }
    };
    roots.retain(|r| r.is_finite());
    // integrate |p1 - p2| piecewise via Φ differences
    let cdf1 = |x: f64| normal_cdf((x - m1) / s1);
    let cdf2 = |x: f64| normal_cdf((x - m2) / s2);
    let mut cuts = vec![f64::NEG_INFINITY];
    cuts.extend(roots);
    cuts.push(f64::INFINITY);
    let mut tv = 0.0;
    for pair in cuts.windows(2) {
        let (lo, hi) = (pair[0], pair[1]);
        let f1 = if hi.is_infinite() { 1.0 } else { cdf1(hi) } - if lo.is_infinite() { 0.0 } else { cdf1(lo) };
        let f2 = if hi.is_infinite() { 1.0 } else { cdf2(hi) } - if lo.is_infinite() { 0.0 } else { cdf2(lo) };
        tv += (f1 - f2).abs();
    }
    0.5 * tv
}
