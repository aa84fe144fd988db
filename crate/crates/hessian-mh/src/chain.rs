//! The Metropolis–Hastings transition and chain simulation with
//! reproducible, scheduler-independent randomness.
//!
//! Every step `k` of a chain draws from its own counter-keyed stream
//! `step_rng(seed, k)`, so replicas are bit-reproducible no matter how they
//! are scheduled across threads.

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::measures::{standard_normal_vector, Point, TargetFamily};
use crate::proposals::ProposalKernel;

/// A fresh random stream for step `step` of the chain keyed by `seed`.
///
/// The (seed, step) pair is embedded verbatim in the 256-bit ChaCha key, so
/// streams never overlap and consumption within a step cannot leak into the
/// next one.
pub fn step_rng(seed: u64, step: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[0..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&step.to_le_bytes());
    key[16..24].copy_from_slice(b"mh-chain");
    ChaCha8Rng::from_seed(key)
}

/// One Metropolis–Hastings transition.
#[derive(Debug, Clone)]
pub struct StepOutcome {
    pub next: Point,
    pub proposal: Point,
    pub accepted: bool,
    pub alpha: f64,
}

/// Draw `y ~ P(x, ·)` and `u ~ Unif[0,1)`; accept iff `u < α(x, y)`.
pub fn mh_step<R: Rng + ?Sized>(
    target: &TargetFamily,
    n: f64,
    kernel: &ProposalKernel,
    x: &Point,
    rng: &mut R,
) -> Result<StepOutcome> {
    let z = standard_normal_vector(kernel.dim(), rng);
    let u: f64 = rng.random();
    let y = kernel.propose_with_noise(x, &z);
    let log_r = kernel.log_acceptance_ratio(target, n, x, &y)?;
    let alpha = log_r.exp().min(1.0);
    let accepted = u < alpha;
    Ok(StepOutcome {
        next: if accepted { y.clone() } else { x.clone() },
        proposal: y,
        accepted,
        alpha,
    })
}

/// A simulated chain: `N+1` states, the `N` proposals with their realized
/// acceptance probabilities, and everything needed to reproduce the run.
#[derive(Debug, Clone)]
pub struct ChainRecord {
    dim: usize,
    n: f64,
    seed: u64,
    kernel: String,
    states: Vec<f64>,
    proposals: Vec<f64>,
    accepted: Vec<bool>,
    alpha: Vec<f64>,
}

impl ChainRecord {
    /// Number of recorded transitions.
    pub fn len(&self) -> usize {
        self.accepted.len()
    }

    pub fn is_empty(&self) -> bool {
        self.accepted.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n(&self) -> f64 {
        self.n
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn kernel(&self) -> &str {
        &self.kernel
    }

    /// State `k` for `k ∈ 0..=len()`.
    pub fn state(&self, k: usize) -> &[f64] {
        &self.states[k * self.dim..(k + 1) * self.dim]
    }

    pub fn proposal(&self, k: usize) -> &[f64] {
        &self.proposals[k * self.dim..(k + 1) * self.dim]
    }

    pub fn accepted(&self) -> &[bool] {
        &self.accepted
    }

    pub fn alpha(&self) -> &[f64] {
        &self.alpha
    }

    pub fn state_vector(&self, k: usize) -> Point {
        DVector::from_column_slice(self.state(k))
    }

    /// Fraction of accepted transitions (the Bernoulli estimator).
    pub fn acceptance_fraction(&self) -> f64 {
        if self.accepted.is_empty() {
            return 0.0;
        }
        self.accepted.iter().filter(|&&a| a).count() as f64 / self.accepted.len() as f64
    }

    pub fn rejection_count(&self) -> usize {
        self.accepted.iter().filter(|&&a| !a).count()
    }
}

/// Runs `burn_in + steps` transitions from `x0` and records the last `steps`.
///
/// Bit-reproducible for a fixed seed: step `k` of the combined run always
/// consumes the stream `step_rng(seed, k)`.
pub fn run_chain(
    target: &TargetFamily,
    n: f64,
    kernel: &ProposalKernel,
    x0: &Point,
    steps: usize,
    burn_in: usize,
    seed: u64,
) -> Result<ChainRecord> {
    if steps == 0 {
        return Err(Error::Config("chain length must be at least 1".into()));
    }
    if !target.in_support(x0) {
        return Err(Error::OutsideSupport);
    }
    let dim = target.dim();
    let mut x = x0.clone();
    for k in 0..burn_in {
        let mut rng = step_rng(seed, k as u64);
        x = mh_step(target, n, kernel, &x, &mut rng)?.next;
    }
    let mut states = Vec::with_capacity((steps + 1) * dim);
    let mut proposals = Vec::with_capacity(steps * dim);
    let mut accepted = Vec::with_capacity(steps);
    let mut alpha = Vec::with_capacity(steps);
    states.extend_from_slice(x.as_slice());
    for k in burn_in..burn_in + steps {
        let mut rng = step_rng(seed, k as u64);
        let out = mh_step(target, n, kernel, &x, &mut rng)?;
        x = out.next;
        states.extend_from_slice(x.as_slice());
        proposals.extend_from_slice(out.proposal.as_slice());
        accepted.push(out.accepted);
        alpha.push(out.alpha);
    }
    Ok(ChainRecord {
        dim,
        n,
        seed,
        kernel: kernel.descriptor(),
        states,
        proposals,
        accepted,
        alpha,
    })
}

/// Independent replicas, one per seed, run in parallel.
///
/// The records are identical to sequential `run_chain` calls; execution
/// order is immaterial because every step owns its stream.
pub fn run_replicas(
    target: &TargetFamily,
    n: f64,
    kernel: &ProposalKernel,
    x0: &Point,
    steps: usize,
    burn_in: usize,
    seeds: &[u64],
) -> Result<Vec<ChainRecord>> {
    if seeds.is_empty() {
        return Err(Error::Config("at least one replica seed is required".into()));
    }
    let mut sorted = seeds.to_vec();
    sorted.sort_unstable();
    if sorted.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::Config("replica seeds must be distinct".into()));
    }
    seeds
        .par_iter()
        .map(|&seed| run_chain(target, n, kernel, x0, steps, burn_in, seed))
        .collect()
}
