//! Configuration-driven experiment runners and their CSV/JSON row types.
//!
//! `run_sweep` estimates acceptance and jump-distance efficiency over an
//! `n`-grid, one row per (n, proposal, direction), with reference columns
//! where an n-free reference exists. `run_rate_study` tabulates the decay of
//! the Gaussian-approximation error. `run_pushforward_check` is the exact
//! finite-state fuzz suite. Rows serialize losslessly to CSV (full double
//! precision, `.` decimal) and reports embed their resolved configuration.

use std::collections::HashMap;
use std::io::Write;
use std::str::FromStr;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::catalog::{self, CatalogEntry};
use crate::chain::{run_replicas, step_rng, ChainRecord};
use crate::diagnostics::{
    average_acceptance, directional_esjd, gaussian_reference_alpha, gaussian_reference_esjd,
    iact, modified_pcn_reference_esjd, target_variance, Estimate,
};
use crate::distances::hellinger_rate_study;
use crate::error::{Error, Result};
use crate::laplace::laplace_approximation;
use crate::measures::Point;
use crate::proposals::ProposalKernel;
use crate::pushforward::{
    exact_spectral_gap, generate, pushforward_kernel, pushforward_measure,
    reversibility_residual, stationary_lag_one_correlation, verify_acceptance_coincidence,
    verify_gap_monotonicity,
};

/// Which proposal family a sweep exercises at each `n`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProposalKind {
    /// Random walk with the curvature covariance `s²C_n`.
    RwHessian,
    /// Autoregressive kernel reversible w.r.t. the curvature Gaussian.
    PcnModified,
    /// Isotropic random walk with the stepsize-only scaling `s/n`.
    RwIso,
    /// Autoregressive kernel reversible w.r.t. the prior.
    Pcn,
}

impl ProposalKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            Self::RwHessian => "rw-hessian",
            Self::PcnModified => "pcn-modified",
            Self::RwIso => "rw-iso",
            Self::Pcn => "pcn",
        }
    }
}

impl FromStr for ProposalKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rw-hessian" => Ok(Self::RwHessian),
            "pcn-modified" => Ok(Self::PcnModified),
            "rw-iso" => Ok(Self::RwIso),
            "pcn" => Ok(Self::Pcn),
            other => Err(Error::Config(format!(
                "unknown proposal '{other}'; expected rw-hessian, pcn-modified, rw-iso or pcn"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ProposalSpec {
    pub kind: ProposalKind,
    pub step: f64,
}

impl ProposalSpec {
    pub fn validate(&self) -> Result<()> {
        match self.kind {
            ProposalKind::RwHessian | ProposalKind::RwIso => {
                if !(self.step > 0.0) {
                    return Err(Error::Config(format!(
                        "step must be positive for {}, got {}",
                        self.kind.as_str(),
                        self.step
                    )));
                }
            }
            ProposalKind::PcnModified | ProposalKind::Pcn => {
                if !(self.step > 0.0 && self.step <= 1.0) {
                    return Err(Error::Config(format!(
                        "step must lie in (0, 1] for {}, got {}",
                        self.kind.as_str(),
                        self.step
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Resolved experiment configuration; defaults give the desk-scale run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub model: String,
    pub n_grid: Vec<f64>,
    pub proposals: Vec<ProposalSpec>,
    pub steps: usize,
    pub burn_in: usize,
    pub seeds: Vec<u64>,
    pub reference_budget: u64,
    pub reference_seed: u64,
}

impl ExperimentConfig {
    pub fn new(model: impl Into<String>) -> Self {
        Self {
            model: model.into(),
            n_grid: vec![1.0, 10.0, 100.0, 1000.0, 10000.0],
            proposals: vec![ProposalSpec {
                kind: ProposalKind::RwHessian,
                step: 1.0,
            }],
            steps: 100_000,
            burn_in: 1_000,
            seeds: (1..=8).collect(),
            reference_budget: 10_000_000,
            reference_seed: 0xA11CE,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_grid.is_empty() {
            return Err(Error::Config("n grid must not be empty".into()));
        }
        if self.n_grid.iter().any(|&n| !(n > 0.0)) {
            return Err(Error::Config("n grid entries must be positive".into()));
        }
        if self.n_grid.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config("n grid must be strictly increasing".into()));
        }
        if self.proposals.is_empty() {
            return Err(Error::Config("at least one proposal is required".into()));
        }
        for spec in &self.proposals {
            spec.validate()?;
        }
        if self.steps == 0 {
            return Err(Error::Config("chain length must be positive".into()));
        }
        if self.seeds.is_empty() {
            return Err(Error::Config("at least one replica seed is required".into()));
        }
        let mut sorted = self.seeds.clone();
        sorted.sort_unstable();
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Config("replica seeds must be distinct".into()));
        }
        catalog::lookup(&self.model)?;
        Ok(())
    }
}

/// One CSV row of a sweep; reference columns are empty where no n-free
/// reference applies.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct SweepRow {
    pub model: String,
    pub n: f64,
    pub proposal: String,
    pub step: f64,
    pub direction: String,
    pub abar: f64,
    pub abar_se: f64,
    pub rejections: u64,
    pub esjd: f64,
    pub esjd_se: f64,
    pub nesjd: f64,
    pub nesjd_se: f64,
    pub tau: f64,
    pub tau_window: u64,
    pub var_fv: f64,
    pub var_provenance: String,
    pub ref_abar: Option<f64>,
    pub ref_abar_se: Option<f64>,
    pub ref_nesjd: Option<f64>,
    pub ref_nesjd_se: Option<f64>,
    pub steps: u64,
    pub burn_in: u64,
    pub seeds: String,
    pub error: Option<String>,
}

impl SweepRow {
    fn failed(
        cfg: &ExperimentConfig,
        n: f64,
        spec: &ProposalSpec,
        seeds: &[u64],
        message: String,
    ) -> Self {
        Self {
            model: cfg.model.clone(),
            n,
            proposal: spec.kind.as_str().to_string(),
            step: spec.step,
            direction: String::new(),
            abar: f64::NAN,
            abar_se: f64::NAN,
            rejections: 0,
            esjd: f64::NAN,
            esjd_se: f64::NAN,
            nesjd: f64::NAN,
            nesjd_se: f64::NAN,
            tau: f64::NAN,
            tau_window: 0,
            var_fv: f64::NAN,
            var_provenance: String::new(),
            ref_abar: None,
            ref_abar_se: None,
            ref_nesjd: None,
            ref_nesjd_se: None,
            steps: cfg.steps as u64,
            burn_in: cfg.burn_in as u64,
            seeds: join_seeds(seeds),
            error: Some(message),
        }
    }
}

pub fn sweep_has_errors(rows: &[SweepRow]) -> bool {
    rows.iter().any(|r| r.error.is_some())
}

fn join_seeds(seeds: &[u64]) -> String {
    seeds
        .iter()
        .map(|s| s.to_string())
        .collect::<Vec<_>>()
        .join(";")
}

/// Pools independent replica estimates: mean value, root-sum-square SE.
fn pool(estimates: &[Estimate]) -> Estimate {
    let r = estimates.len() as f64;
    Estimate {
        value: estimates.iter().map(|e| e.value).sum::<f64>() / r,
        se: estimates.iter().map(|e| e.se * e.se).sum::<f64>().sqrt() / r,
    }
}

/// The n-free reference pair for a proposal kind, if one exists.
fn reference_columns(
    kind: ProposalKind,
    step: f64,
    dim: usize,
    budget: u64,
    seed: u64,
) -> (Option<Estimate>, Option<Estimate>) {
    match kind {
        ProposalKind::RwHessian => (
            Some(gaussian_reference_alpha(dim, step, budget, seed)),
            Some(gaussian_reference_esjd(dim, step, budget, seed)),
        ),
        ProposalKind::PcnModified => (
            Some(Estimate { value: 1.0, se: 0.0 }),
            Some(Estimate {
                value: modified_pcn_reference_esjd(step),
                se: 0.0,
            }),
        ),
        ProposalKind::RwIso | ProposalKind::Pcn => (None, None),
    }
}

fn build_kernel(
    entry: &CatalogEntry,
    la: &crate::laplace::LaplaceApproximation,
    spec: &ProposalSpec,
    n: f64,
) -> Result<ProposalKernel> {
    match spec.kind {
        ProposalKind::RwHessian => ProposalKernel::hessian_rw(la.clone(), spec.step),
        ProposalKind::PcnModified => ProposalKernel::modified_pcn(la.clone(), spec.step),
        ProposalKind::RwIso => {
            ProposalKernel::random_walk(crate::linalg::SpdMatrix::identity(entry.dim), spec.step / n)
        }
        ProposalKind::Pcn => ProposalKernel::pcn(entry.prior_covariance(), spec.step),
    }
}

fn canonical_directions(dim: usize) -> Vec<(String, Point)> {
    (0..dim)
        .map(|i| {
            let mut v = Point::zeros(dim);
            v[i] = 1.0;
            (format!("e{}", i + 1), v)
        })
        .collect()
}

/// Distinct replica seeds per grid cell, derived from the configured seeds.
fn cell_seeds(seeds: &[u64], cell: u64) -> Vec<u64> {
    seeds
        .iter()
        .map(|&s| s.wrapping_add(cell.wrapping_mul(0x9E37_79B9_7F4A_7C15)))
        .collect()
}

fn run_cell(
    cfg: &ExperimentConfig,
    entry: &CatalogEntry,
    n: f64,
    spec: &ProposalSpec,
    seeds: &[u64],
    refs: &(Option<Estimate>, Option<Estimate>),
) -> Result<Vec<SweepRow>> {
    let target = entry.target();
    let la = laplace_approximation(&target, n, &entry.x0())?;
    let kernel = build_kernel(entry, &la, spec, n)?;
    let records: Vec<ChainRecord> = run_replicas(
        &target,
        n,
        &kernel,
        la.map_point(),
        cfg.steps,
        cfg.burn_in,
        seeds,
    )?;
    let abar = pool(&records.iter().map(average_acceptance).collect::<Vec<_>>());
    let rejections: u64 = records.iter().map(|r| r.rejection_count() as u64).sum();
    let exact = entry.exact_posterior(n);
    let mut rows = Vec::new();
    for (name, v) in canonical_directions(entry.dim) {
        let esjd = pool(
            &records
                .iter()
                .map(|r| directional_esjd(r, &v))
                .collect::<Result<Vec<_>>>()?,
        );
        let variance = target_variance(&target, n, &v, &entry.x0(), exact.as_ref())?;
        let taus = records
            .iter()
            .map(|r| iact(r, |x| v.iter().enumerate().map(|(i, vi)| vi * x[i]).sum()))
            .collect::<Result<Vec<_>>>()?;
        let tau = taus.iter().map(|t| t.tau).sum::<f64>() / taus.len() as f64;
        let tau_window = taus.iter().map(|t| t.window).max().unwrap_or(0) as u64;
        rows.push(SweepRow {
            model: cfg.model.clone(),
            n,
            proposal: spec.kind.as_str().to_string(),
            step: spec.step,
            direction: name,
            abar: abar.value,
            abar_se: abar.se,
            rejections,
            esjd: esjd.value,
            esjd_se: esjd.se,
            nesjd: esjd.value / variance.value,
            nesjd_se: esjd.se / variance.value,
            tau,
            tau_window,
            var_fv: variance.value,
            var_provenance: variance.provenance.to_string(),
            ref_abar: refs.0.map(|e| e.value),
            ref_abar_se: refs.0.map(|e| e.se),
            ref_nesjd: refs.1.map(|e| e.value),
            ref_nesjd_se: refs.1.map(|e| e.se),
            steps: cfg.steps as u64,
            burn_in: cfg.burn_in as u64,
            seeds: join_seeds(seeds),
            error: None,
        });
    }
    Ok(rows)
}

/// Runs the full grid; chain failures become row-level error records rather
/// than aborting the sweep.
pub fn run_sweep(cfg: &ExperimentConfig) -> Result<Vec<SweepRow>> {
    cfg.validate()?;
    let entry = catalog::lookup(&cfg.model)?;
    // n-free reference values, shared across the grid
    let refs: HashMap<usize, (Option<Estimate>, Option<Estimate>)> = cfg
        .proposals
        .iter()
        .enumerate()
        .map(|(i, spec)| {
            (
                i,
                reference_columns(
                    spec.kind,
                    spec.step,
                    entry.dim,
                    cfg.reference_budget,
                    cfg.reference_seed,
                ),
            )
        })
        .collect();
    let jobs: Vec<(usize, f64, usize)> = cfg
        .n_grid
        .iter()
        .enumerate()
        .flat_map(|(ni, &n)| (0..cfg.proposals.len()).map(move |pi| (ni, n, pi)))
        .collect();
    let mut results: Vec<(usize, Vec<SweepRow>)> = jobs
        .par_iter()
        .map(|&(ni, n, pi)| {
            let spec = &cfg.proposals[pi];
            let cell = (ni * cfg.proposals.len() + pi) as u64;
            let seeds = cell_seeds(&cfg.seeds, cell);
            let rows = run_cell(cfg, &entry, n, spec, &seeds, &refs[&pi])
                .unwrap_or_else(|e| vec![SweepRow::failed(cfg, n, spec, &seeds, e.to_string())]);
            (ni * cfg.proposals.len() + pi, rows)
        })
        .collect();
    results.sort_by_key(|(order, _)| *order);
    Ok(results.into_iter().flat_map(|(_, rows)| rows).collect())
}

/// One row of a decay-study table; the fitted slope rides in a footer row.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct RateRow {
    pub model: String,
    pub row: String,
    pub n: Option<f64>,
    pub hellinger: Option<f64>,
    pub tv: Option<f64>,
    pub slope: Option<f64>,
}

/// Tabulates the Hellinger/TV decay of the Gaussian approximation over the
/// configured `n`-grid; refuses models whose posteriors do not contract to a
/// point or along a known linear subspace.
pub fn run_rate_study(cfg: &ExperimentConfig) -> Result<Vec<RateRow>> {
    cfg.validate()?;
    let entry = catalog::lookup(&cfg.model)?;
    if !entry.rate_study_supported() {
        return Err(Error::Config(format!(
            "model '{}' is not flagged for the Gaussian-approximation decay study",
            entry.name
        )));
    }
    let target = entry.target();
    let study = hellinger_rate_study(&target, &entry.x0(), &cfg.n_grid)?;
    let mut rows: Vec<RateRow> = study
        .points
        .iter()
        .map(|p| RateRow {
            model: cfg.model.clone(),
            row: "data".into(),
            n: Some(p.n),
            hellinger: Some(p.hellinger),
            tv: Some(p.tv),
            slope: None,
        })
        .collect();
    rows.push(RateRow {
        model: cfg.model.clone(),
        row: "fit".into(),
        n: None,
        hellinger: None,
        tv: None,
        slope: Some(study.slope),
    });
    Ok(rows)
}

/// Configuration echoed into the fuzz report.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct PushforwardConfig {
    pub cases: usize,
    pub seed: u64,
}

/// Worst-case residuals over the fuzz suite; every bound is checked against
/// `1e-12`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PushforwardReport {
    pub config: PushforwardConfig,
    pub cases_run: usize,
    pub max_reversibility_residual: f64,
    pub max_stationarity_residual: f64,
    /// `gap(π,K) - gap(T_*π, T_*K)`, positive iff transport shrank the gap.
    pub max_gap_violation: f64,
    pub max_bijective_gap_residual: f64,
    pub max_acceptance_residual: f64,
    pub max_kernel_representation_residual: f64,
    pub max_correlation_residual: f64,
    pub max_marginal_law_residual: f64,
    /// `gap - 2ᾱ`, positive iff the conductance bound failed.
    pub max_cheeger_slack: f64,
    pub pass: bool,
    pub failure: Option<String>,
}

const FUZZ_TOL: f64 = 1e-12;

/// Exact finite-state fuzz: transported measures/kernels, spectral-gap
/// monotonicity (equality for relabelings), acceptance-rate coincidence on
/// fiber-constant chains, the lag-one correlation identity, the stationary
/// marginal law, and the conductance bound `gap ≤ 2ᾱ`.
pub fn run_pushforward_check(config: PushforwardConfig) -> PushforwardReport {
    let mut report = PushforwardReport {
        config,
        cases_run: 0,
        max_reversibility_residual: 0.0,
        max_stationarity_residual: 0.0,
        max_gap_violation: f64::NEG_INFINITY,
        max_bijective_gap_residual: 0.0,
        max_acceptance_residual: 0.0,
        max_kernel_representation_residual: 0.0,
        max_correlation_residual: 0.0,
        max_marginal_law_residual: 0.0,
        max_cheeger_slack: f64::NEG_INFINITY,
        pass: false,
        failure: None,
    };
    let outcome = (|| -> Result<()> {
        for case in 0..config.cases {
            let mut rng = step_rng(config.seed, case as u64);
            let m = 3 + (case % 8);

            // arbitrary reversible chain under an arbitrary merge
            let chain = generate::reversible_chain(m, &mut rng);
            let m2 = 1 + (case % m);
            let map = generate::surjective_map(m, m2, &mut rng);
            let pushed = pushforward_kernel(&chain, &map)?;
            report.max_reversibility_residual = report
                .max_reversibility_residual
                .max(reversibility_residual(pushed.kernel(), pushed.pi()));
            let pushed_pi = pushforward_measure(chain.pi(), &map);
            report.max_stationarity_residual = report
                .max_stationarity_residual
                .max((pushed.kernel().transpose() * &pushed_pi - &pushed_pi).amax());
            let gaps = verify_gap_monotonicity(&chain, &map)?;
            report.max_gap_violation = report.max_gap_violation.max(gaps.violation());

            // marginal law of the stationary transition measure
            let mut lhs: nalgebra::DMatrix<f64> = nalgebra::DMatrix::zeros(m2, m2);
            for (x, &y) in map.indices().iter().enumerate() {
                for (xp, &yp) in map.indices().iter().enumerate() {
                    lhs[(y, yp)] += chain.pi()[x] * chain.kernel()[(x, xp)];
                }
            }
            let mut marginal_residual = 0.0f64;
            for y in 0..m2 {
                for yp in 0..m2 {
                    marginal_residual = marginal_residual
                        .max((lhs[(y, yp)] - pushed.pi()[y] * pushed.kernel()[(y, yp)]).abs());
                }
            }
            report.max_marginal_law_residual =
                report.max_marginal_law_residual.max(marginal_residual);

            // lag-one correlation identity for a random functional
            let f: Vec<f64> = (0..m2).map(|_| rng.random::<f64>() * 4.0 - 2.0).collect();
            let f_lifted: Vec<f64> = map.indices().iter().map(|&y| f[y]).collect();
            if let (Ok(a), Ok(b)) = (
                stationary_lag_one_correlation(&chain, &f_lifted),
                stationary_lag_one_correlation(&pushed, &f),
            ) {
                report.max_correlation_residual =
                    report.max_correlation_residual.max((a - b).abs());
            }

            // Metropolis chain: conductance bound and bijective transport
            let mh = generate::mh_chain(m, &mut rng);
            let gap = exact_spectral_gap(mh.chain())?;
            report.max_cheeger_slack = report
                .max_cheeger_slack
                .max(gap - 2.0 * mh.average_acceptance());
            let relabel = generate::permutation(m, &mut rng);
            let bijective_gaps = verify_gap_monotonicity(mh.chain(), &relabel)?;
            report.max_bijective_gap_residual = report
                .max_bijective_gap_residual
                .max(bijective_gaps.equality_residual());
            let bijective_acc = verify_acceptance_coincidence(&mh, &relabel)?;
            report.max_acceptance_residual =
                report.max_acceptance_residual.max(bijective_acc.residual());
            report.max_kernel_representation_residual = report
                .max_kernel_representation_residual
                .max(bijective_acc.kernel_residual);

            // fiber-constant lift: acceptance coincides under a real merge
            let (lifted, lift_map) = generate::lifted_mh(&mh, 3, &mut rng);
            let lifted_acc = verify_acceptance_coincidence(&lifted, &lift_map)?;
            report.max_acceptance_residual =
                report.max_acceptance_residual.max(lifted_acc.residual());
            report.max_kernel_representation_residual = report
                .max_kernel_representation_residual
                .max(lifted_acc.kernel_residual);
            let lifted_gap = exact_spectral_gap(lifted.chain())?;
            report.max_cheeger_slack = report
                .max_cheeger_slack
                .max(lifted_gap - 2.0 * lifted.average_acceptance());
            let lift_gaps = verify_gap_monotonicity(lifted.chain(), &lift_map)?;
            report.max_gap_violation = report.max_gap_violation.max(lift_gaps.violation());

            report.cases_run += 1;
        }
        Ok(())
    })();
    match outcome {
        Ok(()) => {
            report.pass = report.max_reversibility_residual <= FUZZ_TOL
                && report.max_stationarity_residual <= FUZZ_TOL
                && report.max_gap_violation <= FUZZ_TOL
                && report.max_bijective_gap_residual <= FUZZ_TOL
                && report.max_acceptance_residual <= FUZZ_TOL
                && report.max_kernel_representation_residual <= FUZZ_TOL
                && report.max_correlation_residual <= FUZZ_TOL
                && report.max_marginal_law_residual <= FUZZ_TOL
                && report.max_cheeger_slack <= FUZZ_TOL;
            if !report.pass {
                report.failure = Some("residual exceeded 1e-12".into());
            }
        }
        Err(e) => {
            report.pass = false;
            report.failure = Some(e.to_string());
        }
    }
    report
}

/// Writes rows as CSV with a header; numbers print in shortest
/// round-trip form.
pub fn write_csv<T: Serialize, W: Write>(rows: &[T], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_sweep_csv<R: std::io::Read>(reader: R) -> Result<Vec<SweepRow>> {
    let mut r = csv::Reader::from_reader(reader);
    let mut out = Vec::new();
    for row in r.deserialize() {
        out.push(row?);
    }
    Ok(out)
}

pub fn read_rate_csv<R: std::io::Read>(reader: R) -> Result<Vec<RateRow>> {
    let mut r = csv::Reader::from_reader(reader);
    let mut out = Vec::new();
    for row in r.deserialize() {
        out.push(row?);
    }
    Ok(out)
}

/// Parses the `key = value` configuration format; `#` starts a comment.
pub fn parse_key_values(text: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .or_else(|| line.split_once(':'))
            .ok_or_else(|| {
                Error::Config(format!("line {}: expected 'key = value'", lineno + 1))
            })?;
        out.push((key.trim().to_string(), value.trim().to_string()));
    }
    Ok(out)
}
