//! Exact transport of finite-state chains along surjective maps, spectral
//! gaps from the symmetrized kernel, and the affine coupling that identifies
//! a curvature-preconditioned chain with a standard one.
//!
//! On a finite space everything is a finite sum, so the transported kernel
//! `(T_*K)(y, y') = Σ_{x∈T⁻¹(y)} [π_x / (T_*π)_y] Σ_{x'∈T⁻¹(y')} K_{x,x'}`
//! and all its properties can be verified to machine precision.

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::chain::{mh_step, step_rng};
use crate::error::{Error, Result};
use crate::laplace::LaplaceApproximation;
use crate::linalg::SpdMatrix;
use crate::measures::{standard_gaussian_family, Point, TargetFamily};
use crate::proposals::ProposalKernel;

const EXACT_TOL: f64 = 1e-12;

/// A finite-state Markov chain: row-stochastic kernel plus its stationary
/// distribution, with reversibility verified at construction.
#[derive(Debug, Clone)]
pub struct FiniteChain {
    pi: DVector<f64>,
    kernel: DMatrix<f64>,
    reversible: bool,
}

impl FiniteChain {
    /// Validates row sums, stationarity `πK = π`, and records whether the
    /// detailed-balance residual vanishes.
    pub fn new(kernel: DMatrix<f64>, pi: DVector<f64>) -> Result<Self> {
        let m = pi.len();
        if kernel.nrows() != m || kernel.ncols() != m {
            return Err(Error::Config(format!(
                "kernel is {}x{}, stationary vector has length {m}",
                kernel.nrows(),
                kernel.ncols()
            )));
        }
        if pi.iter().any(|&p| p <= 0.0) {
            return Err(Error::Config("stationary probabilities must be positive".into()));
        }
        if (pi.sum() - 1.0).abs() > EXACT_TOL {
            return Err(Error::Config(format!(
                "stationary vector sums to {} instead of 1",
                pi.sum()
            )));
        }
        for i in 0..m {
            let row_sum: f64 = kernel.row(i).sum();
            if (row_sum - 1.0).abs() > EXACT_TOL {
                return Err(Error::Config(format!(
                    "row {i} sums to {row_sum} instead of 1"
                )));
            }
            if kernel.row(i).iter().any(|&k| k < -EXACT_TOL) {
                return Err(Error::Config(format!("row {i} has a negative entry")));
            }
        }
        let stationarity = (kernel.transpose() * &pi - &pi).amax();
        if stationarity > EXACT_TOL {
            return Err(Error::Config(format!(
                "π is not stationary (residual {stationarity:.3e})"
            )));
        }
        let reversible = reversibility_residual(&kernel, &pi) <= EXACT_TOL;
        Ok(Self {
            pi,
            kernel,
            reversible,
        })
    }

    pub fn len(&self) -> usize {
        self.pi.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pi.is_empty()
    }

    pub fn pi(&self) -> &DVector<f64> {
        &self.pi
    }

    pub fn kernel(&self) -> &DMatrix<f64> {
        &self.kernel
    }

    pub fn is_reversible(&self) -> bool {
        self.reversible
    }

    /// Accepted off-diagonal flow `Σ_{i≠j} π_i K_ij`, which equals the
    /// average acceptance rate of a Metropolis chain whose proposal never
    /// proposes the current state.
    pub fn offdiagonal_flow(&self) -> f64 {
        let mut flow = 0.0;
        for i in 0..self.len() {
            for j in 0..self.len() {
                if i != j {
                    flow += self.pi[i] * self.kernel[(i, j)];
                }
            }
        }
        flow
    }
}

/// `max_{i,j} |π_i K_ij - π_j K_ji|`.
pub fn reversibility_residual(kernel: &DMatrix<f64>, pi: &DVector<f64>) -> f64 {
    let m = pi.len();
    let mut worst = 0.0f64;
    for i in 0..m {
        for j in (i + 1)..m {
            worst = worst.max((pi[i] * kernel[(i, j)] - pi[j] * kernel[(j, i)]).abs());
        }
    }
    worst
}

/// A surjective index map `T: {0..m} → {0..m'}`.
#[derive(Debug, Clone)]
pub struct StateMap {
    map: Vec<usize>,
    codomain: usize,
}

impl StateMap {
    pub fn new(map: Vec<usize>) -> Result<Self> {
        if map.is_empty() {
            return Err(Error::Config("state map must not be empty".into()));
        }
        let codomain = map.iter().max().unwrap() + 1;
        let mut seen = vec![false; codomain];
        for &y in &map {
            seen[y] = true;
        }
        if !seen.iter().all(|&s| s) {
            return Err(Error::Config("state map must cover its codomain".into()));
        }
        Ok(Self { map, codomain })
    }

    pub fn identity(m: usize) -> Self {
        Self {
            map: (0..m).collect(),
            codomain: m,
        }
    }

    pub fn domain(&self) -> usize {
        self.map.len()
    }

    pub fn codomain(&self) -> usize {
        self.codomain
    }

    pub fn apply(&self, x: usize) -> usize {
        self.map[x]
    }

    pub fn is_bijective(&self) -> bool {
        self.map.len() == self.codomain
    }

    pub fn indices(&self) -> &[usize] {
        &self.map
    }
}

/// `(T_*π)_y = Σ_{x: T(x)=y} π_x`.
pub fn pushforward_measure(pi: &DVector<f64>, map: &StateMap) -> DVector<f64> {
    let mut out = DVector::zeros(map.codomain());
    for (x, &y) in map.indices().iter().enumerate() {
        out[y] += pi[x];
    }
    out
}

/// The transported kernel, reversible w.r.t. the transported measure
/// whenever the input chain is reversible.
pub fn pushforward_kernel(chain: &FiniteChain, map: &StateMap) -> Result<FiniteChain> {
    if map.domain() != chain.len() {
        return Err(Error::Config(format!(
            "map has domain {}, chain has {} states",
            map.domain(),
            chain.len()
        )));
    }
    if !chain.is_reversible() {
        return Err(Error::NotReversible {
            residual: reversibility_residual(chain.kernel(), chain.pi()),
        });
    }
    let pushed_pi = pushforward_measure(chain.pi(), map);
    for (y, &mass) in pushed_pi.iter().enumerate() {
        if mass <= 0.0 {
            return Err(Error::DegenerateFiber(y));
        }
    }
    let m2 = map.codomain();
    let mut kernel = DMatrix::zeros(m2, m2);
    for (x, &y) in map.indices().iter().enumerate() {
        let weight = chain.pi()[x] / pushed_pi[y];
        for (xp, &yp) in map.indices().iter().enumerate() {
            kernel[(y, yp)] += weight * chain.kernel()[(x, xp)];
        }
    }
    // exact row-stochasticity up to the same rounding as the input
    FiniteChain::new(kernel, pushed_pi)
}

/// Spectral gap `1 - max |λ|` over the nontrivial spectrum of the
/// symmetrized kernel `D^{1/2} K D^{-1/2}`, `D = diag(π)`.
///
/// Self-adjointness of the chain makes the spectrum real; the trivial
/// eigenvalue 1 (constants) is removed and the gap measured against the
/// remaining eigenvalue magnitudes.
pub fn exact_spectral_gap(chain: &FiniteChain) -> Result<f64> {
    if !chain.is_reversible() {
        return Err(Error::NotReversible {
            residual: reversibility_residual(chain.kernel(), chain.pi()),
        });
    }
    let m = chain.len();
    if m == 1 {
        return Ok(1.0);
    }
    let mut sym = DMatrix::zeros(m, m);
    for i in 0..m {
        for j in 0..m {
            sym[(i, j)] = (chain.pi()[i] / chain.pi()[j]).sqrt() * chain.kernel()[(i, j)];
        }
    }
    let sym = (&sym + sym.transpose()) * 0.5;
    let mut eigenvalues: Vec<f64> = nalgebra::SymmetricEigen::new(sym)
        .eigenvalues
        .iter()
        .copied()
        .collect();
    // drop the eigenvalue closest to 1 (the constant function)
    let trivial = eigenvalues
        .iter()
        .enumerate()
        .min_by(|a, b| (a.1 - 1.0).abs().total_cmp(&(b.1 - 1.0).abs()))
        .map(|(i, _)| i)
        .expect("m >= 2");
    eigenvalues.swap_remove(trivial);
    let radius = eigenvalues.iter().fold(0.0f64, |r, &l| r.max(l.abs()));
    Ok(1.0 - radius)
}

/// Gaps on both sides of a transport, for the monotonicity check
/// `gap(T_*π, T_*K) ≥ gap(π, K)` (with equality for bijective maps).
#[derive(Debug, Clone, Copy)]
pub struct GapReport {
    pub original: f64,
    pub pushforward: f64,
    pub bijective: bool,
}

impl GapReport {
    pub fn violation(&self) -> f64 {
        self.original - self.pushforward
    }

    pub fn equality_residual(&self) -> f64 {
        (self.original - self.pushforward).abs()
    }
}

pub fn verify_gap_monotonicity(chain: &FiniteChain, map: &StateMap) -> Result<GapReport> {
    let pushed = pushforward_kernel(chain, map)?;
    Ok(GapReport {
        original: exact_spectral_gap(chain)?,
        pushforward: exact_spectral_gap(&pushed)?,
        bijective: map.is_bijective(),
    })
}

/// A finite-state Metropolis–Hastings chain built from an explicit proposal
/// matrix: `K_ij = P_ij · min{1, π_j P_ji / (π_i P_ij)}` off the diagonal.
#[derive(Debug, Clone)]
pub struct FiniteMh {
    chain: FiniteChain,
    proposal: DMatrix<f64>,
    alpha: DMatrix<f64>,
}

impl FiniteMh {
    pub fn new(pi: DVector<f64>, proposal: DMatrix<f64>) -> Result<Self> {
        let m = pi.len();
        if proposal.nrows() != m || proposal.ncols() != m {
            return Err(Error::Config("proposal matrix shape mismatch".into()));
        }
        for i in 0..m {
            let row: f64 = proposal.row(i).sum();
            if (row - 1.0).abs() > EXACT_TOL {
                return Err(Error::Config(format!(
                    "proposal row {i} sums to {row} instead of 1"
                )));
            }
        }
        let mut alpha = DMatrix::zeros(m, m);
        let mut kernel = DMatrix::zeros(m, m);
        for i in 0..m {
            let mut stay = 0.0;
            for j in 0..m {
                if i == j {
                    alpha[(i, j)] = 1.0;
                    continue;
                }
                let forward = pi[i] * proposal[(i, j)];
                if forward == 0.0 {
                    continue;
                }
                let backward = pi[j] * proposal[(j, i)];
                let a = (backward / forward).min(1.0);
                alpha[(i, j)] = a;
                kernel[(i, j)] = proposal[(i, j)] * a;
                stay += proposal[(i, j)] * (1.0 - a);
            }
            kernel[(i, i)] = proposal[(i, i)] + stay;
        }
        let chain = FiniteChain::new(kernel, pi)?;
        Ok(Self {
            chain,
            proposal,
            alpha,
        })
    }

    pub fn chain(&self) -> &FiniteChain {
        &self.chain
    }

    pub fn proposal(&self) -> &DMatrix<f64> {
        &self.proposal
    }

    pub fn alpha(&self) -> &DMatrix<f64> {
        &self.alpha
    }

    /// `ᾱ = Σ_{i,j} π_i P_ij α_ij` (diagonal proposals always accept).
    pub fn average_acceptance(&self) -> f64 {
        let pi = self.chain.pi();
        let m = pi.len();
        let mut abar = 0.0;
        for i in 0..m {
            for j in 0..m {
                abar += pi[i] * self.proposal[(i, j)] * self.alpha[(i, j)];
            }
        }
        abar
    }
}

/// Both sides of the acceptance-rate identity under a state map.
#[derive(Debug, Clone, Copy)]
pub struct AcceptanceReport {
    pub original: f64,
    pub pushforward: f64,
    /// Largest entrywise gap between the transported kernel and the
    /// Metropolis chain built from the transported proposal.
    pub kernel_residual: f64,
}

impl AcceptanceReport {
    pub fn residual(&self) -> f64 {
        (self.original - self.pushforward).abs()
    }
}

/// Computes `ᾱ` for the chain and for its transported Metropolis version.
///
/// The transported acceptance is `α(y,y') = min{1, ν̄(y',y)/ν̄(y,y')}` with
/// `ν̄ = (T×T)_*[π ⊗ P]`, by direct summation. The two rates coincide
/// whenever the original acceptance probability is constant on fibers of
/// `T×T` — lifted chains and bijective relabelings both satisfy this; for
/// arbitrary merges the identity genuinely fails.
pub fn verify_acceptance_coincidence(mh: &FiniteMh, map: &StateMap) -> Result<AcceptanceReport> {
    if map.domain() != mh.chain().len() {
        return Err(Error::Config("map/chain size mismatch".into()));
    }
    let pi = mh.chain().pi();
    let m2 = map.codomain();
    let pushed_pi = pushforward_measure(pi, map);
    for (y, &mass) in pushed_pi.iter().enumerate() {
        if mass <= 0.0 {
            return Err(Error::DegenerateFiber(y));
        }
    }
    // ν̄(y,y') = Σ_{T(x)=y, T(x')=y'} π_x P_{x,x'}
    let mut nu: DMatrix<f64> = DMatrix::zeros(m2, m2);
    for (x, &y) in map.indices().iter().enumerate() {
        for (xp, &yp) in map.indices().iter().enumerate() {
            nu[(y, yp)] += pi[x] * mh.proposal()[(x, xp)];
        }
    }
    let mut pushed_abar = 0.0;
    let mut pushed_kernel: DMatrix<f64> = DMatrix::zeros(m2, m2);
    for y in 0..m2 {
        let mut stay = 0.0;
        for yp in 0..m2 {
            if nu[(y, yp)] == 0.0 {
                continue;
            }
            let a = if y == yp {
                1.0
            } else {
                (nu[(yp, y)] / nu[(y, yp)]).min(1.0)
            };
            pushed_abar += nu[(y, yp)] * a;
            let proposal = nu[(y, yp)] / pushed_pi[y];
            if y == yp {
                stay += proposal;
            } else {
                pushed_kernel[(y, yp)] = proposal * a;
                stay += proposal * (1.0 - a);
            }
        }
        pushed_kernel[(y, y)] = stay;
    }
    let transported = pushforward_kernel(mh.chain(), map)?;
    let kernel_residual = (&pushed_kernel - transported.kernel()).amax();
    Ok(AcceptanceReport {
        original: mh.average_acceptance(),
        pushforward: pushed_abar,
        kernel_residual,
    })
}

/// Stationary lag-one autocorrelation of `f` under a finite chain.
pub fn stationary_lag_one_correlation(chain: &FiniteChain, f: &[f64]) -> Result<f64> {
    let m = chain.len();
    if f.len() != m {
        return Err(Error::Config("functional length mismatch".into()));
    }
    let pi = chain.pi();
    let mean: f64 = (0..m).map(|i| pi[i] * f[i]).sum();
    let var: f64 = (0..m).map(|i| pi[i] * (f[i] - mean) * (f[i] - mean)).sum();
    if var <= 0.0 {
        return Err(Error::DegenerateFunctional);
    }
    let mut cov = 0.0;
    for i in 0..m {
        for j in 0..m {
            cov += pi[i] * chain.kernel()[(i, j)] * (f[i] - mean) * (f[j] - mean);
        }
    }
    Ok(cov / var)
}

/// Which standard kernel drives an affine coupling.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CoupledVariant {
    HessianRw,
    ModifiedPcn,
}

/// Runs the standard chain (target `N(0, I_d)`) and the preconditioned chain
/// (target `π_n`) with identical per-step noise and uniforms, and returns the
/// largest relative deviation `‖x_k - T(x_k^{std})‖ / (1 + ‖x_k‖)` where
/// `T(x) = x_n + C_n^{1/2} x`.
///
/// For Gaussian targets the preconditioned chain is the exact affine image
/// of the standard one, so the deviation is pure floating-point noise.
pub fn coupled_affine_chain(
    target: &TargetFamily,
    la: &LaplaceApproximation,
    variant: CoupledVariant,
    step: f64,
    steps: usize,
    seed: u64,
) -> Result<f64> {
    let d = target.dim();
    if la.dim() != d {
        return Err(Error::Config("approximation/target dimension mismatch".into()));
    }
    let standard_target = standard_gaussian_family(d);
    let (std_kernel, hess_kernel) = match variant {
        CoupledVariant::HessianRw => (
            ProposalKernel::random_walk(SpdMatrix::identity(d), step)?,
            ProposalKernel::hessian_rw(la.clone(), step)?,
        ),
        CoupledVariant::ModifiedPcn => (
            ProposalKernel::pcn(SpdMatrix::identity(d), step)?,
            ProposalKernel::modified_pcn(la.clone(), step)?,
        ),
    };
    let transport = |x: &Point| la.map_point() + la.covariance().apply_factor(x);
    let mut x_std: Point = DVector::zeros(d);
    let mut x_hess = transport(&x_std);
    let mut worst = 0.0f64;
    let n = la.n();
    for k in 0..steps {
        let mut rng_std = step_rng(seed, k as u64);
        let mut rng_hess = rng_std.clone();
        x_std = mh_step(&standard_target, 1.0, &std_kernel, &x_std, &mut rng_std)?.next;
        x_hess = mh_step(target, n, &hess_kernel, &x_hess, &mut rng_hess)?.next;
        let image = transport(&x_std);
        let dev = (&x_hess - image).norm() / (1.0 + x_hess.norm());
        worst = worst.max(dev);
    }
    Ok(worst)
}

/// Deterministic generators for the exactness fuzz suite.
pub mod generate {
    use super::*;

    /// A reversible chain from symmetric positive flows: `K_ij = S_ij / r_i`
    /// with `π_i = r_i / Σ r`.
    pub fn reversible_chain<R: Rng + ?Sized>(m: usize, rng: &mut R) -> FiniteChain {
        let mut flows = DMatrix::zeros(m, m);
        for i in 0..m {
            for j in i..m {
                let f = 0.05 + rng.random::<f64>();
                flows[(i, j)] = f;
                flows[(j, i)] = f;
            }
        }
        let row_sums: Vec<f64> = (0..m).map(|i| flows.row(i).sum()).collect();
        let total: f64 = row_sums.iter().sum();
        let mut kernel = DMatrix::zeros(m, m);
        for i in 0..m {
            for j in 0..m {
                kernel[(i, j)] = flows[(i, j)] / row_sums[i];
            }
        }
        let pi = DVector::from_iterator(m, row_sums.iter().map(|r| r / total));
        normalize_chain(kernel, pi)
    }

    /// A Metropolis chain with a balanced target (probability ratios ≤ 2.5)
    /// and a symmetric proposal matrix with diagonal slack. Balance keeps
    /// the per-move acceptance ≥ 0.4, so the conductance bound
    /// `gap ≤ 2ᾱ` holds with room to spare.
    pub fn mh_chain<R: Rng + ?Sized>(m: usize, rng: &mut R) -> FiniteMh {
        let raw: Vec<f64> = (0..m).map(|_| 0.8 + 1.2 * rng.random::<f64>()).collect();
        let total: f64 = raw.iter().sum();
        let pi = DVector::from_iterator(m, raw.iter().map(|p| p / total));
        // symmetric off-diagonal weights, rows padded on the diagonal
        let mut proposal = DMatrix::zeros(m, m);
        for i in 0..m {
            for j in (i + 1)..m {
                let w = (0.2 + rng.random::<f64>()) / m as f64;
                proposal[(i, j)] = w;
                proposal[(j, i)] = w;
            }
        }
        for i in 0..m {
            let off: f64 = proposal.row(i).sum();
            proposal[(i, i)] = 1.0 - off;
        }
        FiniteMh::new(pi, proposal).expect("generated proposal is valid")
    }

    /// Splits each base state into a random fiber and lifts the chain so the
    /// acceptance probability is constant on fibers; transporting back along
    /// the fiber map recovers the base chain exactly.
    pub fn lifted_mh<R: Rng + ?Sized>(
        base: &FiniteMh,
        max_fiber: usize,
        rng: &mut R,
    ) -> (FiniteMh, StateMap) {
        let m = base.chain().len();
        let mut map = Vec::new();
        let mut weights: Vec<Vec<f64>> = Vec::new();
        for y in 0..m {
            let size = 1 + rng.random_range(0..max_fiber);
            let raw: Vec<f64> = (0..size).map(|_| 0.2 + rng.random::<f64>()).collect();
            let total: f64 = raw.iter().sum();
            weights.push(raw.iter().map(|w| w / total).collect());
            for _ in 0..size {
                map.push(y);
            }
        }
        let big = map.len();
        let pi_base = base.chain().pi();
        let mut pi = DVector::zeros(big);
        let mut proposal = DMatrix::zeros(big, big);
        let offsets: Vec<usize> = weights
            .iter()
            .scan(0usize, |acc, w| {
                let o = *acc;
                *acc += w.len();
                Some(o)
            })
            .collect();
        for y in 0..m {
            for (i, &wi) in weights[y].iter().enumerate() {
                let x = offsets[y] + i;
                pi[x] = pi_base[y] * wi;
                for yp in 0..m {
                    for (j, &wj) in weights[yp].iter().enumerate() {
                        let xp = offsets[yp] + j;
                        proposal[(x, xp)] = base.proposal()[(y, yp)] * wj;
                    }
                }
            }
        }
        let map = StateMap::new(map).expect("lift map is surjective");
        (
            FiniteMh::new(pi, proposal).expect("lifted proposal is valid"),
            map,
        )
    }

    /// A random surjective map from `m` states onto `m' ≤ m` states.
    pub fn surjective_map<R: Rng + ?Sized>(m: usize, m2: usize, rng: &mut R) -> StateMap {
        assert!(m2 >= 1 && m2 <= m);
        // hit every target once, then scatter the rest
        let mut map: Vec<usize> = (0..m2).collect();
        for _ in m2..m {
            map.push(rng.random_range(0..m2));
        }
        // shuffle positions
        for i in (1..map.len()).rev() {
            let j = rng.random_range(0..=i);
            map.swap(i, j);
        }
        StateMap::new(map).expect("constructed map is surjective")
    }

    /// A uniformly random relabeling of `m` states.
    pub fn permutation<R: Rng + ?Sized>(m: usize, rng: &mut R) -> StateMap {
        let mut map: Vec<usize> = (0..m).collect();
        for i in (1..m).rev() {
            let j = rng.random_range(0..=i);
            map.swap(i, j);
        }
        StateMap::new(map).expect("permutations are surjective")
    }

    /// Rounds a kernel/measure pair so the validation tolerances hold
    /// exactly, fixing stationarity drift from the flow construction.
    fn normalize_chain(kernel: DMatrix<f64>, pi: DVector<f64>) -> FiniteChain {
        FiniteChain::new(kernel, pi).expect("flow construction yields a reversible chain")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use nalgebra::{dmatrix, dvector};

    fn two_state() -> FiniteChain {
        FiniteChain::new(
            dmatrix![0.9, 0.1; 0.1, 0.9],
            dvector![0.5, 0.5],
        )
        .unwrap()
    }

    #[test]
    fn pushforward_measure_merges_mass() {
        let pi = dvector![0.2, 0.3, 0.5];
        let map = StateMap::new(vec![0, 1, 1]).unwrap();
        let pushed = pushforward_measure(&pi, &map);
        assert_relative_eq!(pushed, dvector![0.2, 0.8], epsilon = 1e-15);
        let id = StateMap::identity(3);
        assert_eq!(pushforward_measure(&pi, &id), pi);
        let all = StateMap::new(vec![0, 0, 0]).unwrap();
        assert_relative_eq!(pushforward_measure(&pi, &all)[0], 1.0, epsilon = 1e-15);
    }

    #[test]
    fn non_surjective_map_is_rejected() {
        assert!(StateMap::new(vec![0, 2, 2]).is_err()); // misses index 1
        assert!(StateMap::new(vec![]).is_err());
        let map = StateMap::new(vec![1, 0, 1]).unwrap();
        assert!(!map.is_bijective());
        assert_eq!(map.codomain(), 2);
    }

    #[test]
    fn non_reversible_chain_is_rejected() {
        // a 3-cycle is stationary for the uniform measure but not reversible
        let k = dmatrix![0.0, 1.0, 0.0; 0.0, 0.0, 1.0; 1.0, 0.0, 0.0];
        let pi = dvector![1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0];
        let chain = FiniteChain::new(k, pi).unwrap();
        assert!(!chain.is_reversible());
        assert!(matches!(
            exact_spectral_gap(&chain),
            Err(Error::NotReversible { .. })
        ));
        assert!(matches!(
            pushforward_kernel(&chain, &StateMap::new(vec![0, 0, 1]).unwrap()),
            Err(Error::NotReversible { .. })
        ));
    }

    #[test]
    fn identity_map_preserves_kernel() {
        let chain = two_state();
        let pushed = pushforward_kernel(&chain, &StateMap::identity(2)).unwrap();
        assert_relative_eq!(pushed.kernel(), chain.kernel(), epsilon = 1e-15);
    }

    #[test]
    fn relabeling_permutes_kernel() {
        let mut rng = step_rng(5, 0);
        let chain = generate::reversible_chain(3, &mut rng);
        let map = StateMap::new(vec![2, 0, 1]).unwrap();
        let pushed = pushforward_kernel(&chain, &map).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                assert_relative_eq!(
                    pushed.kernel()[(map.apply(i), map.apply(j))],
                    chain.kernel()[(i, j)],
                    epsilon = 1e-14
                );
            }
        }
    }

    #[test]
    fn three_state_merge_matches_hand_computation() {
        // random reversible 3-state chain, fibers {0} and {1,2}
        let mut rng = step_rng(11, 0);
        let chain = generate::reversible_chain(3, &mut rng);
        let map = StateMap::new(vec![0, 1, 1]).unwrap();
        let pushed = pushforward_kernel(&chain, &map).unwrap();
        let pi = chain.pi();
        let k = chain.kernel();
        let mass = pi[1] + pi[2];
        // fiber-weighted conditional expectation, spelled out
        let k_ba = (pi[1] * k[(1, 0)] + pi[2] * k[(2, 0)]) / mass;
        let k_ab = k[(0, 1)] + k[(0, 2)];
        assert_relative_eq!(pushed.kernel()[(1, 0)], k_ba, epsilon = 1e-14);
        assert_relative_eq!(pushed.kernel()[(0, 1)], k_ab, epsilon = 1e-14);
        assert!(pushed.is_reversible());
    }

    #[test]
    fn spectral_gap_examples() {
        // independence chain: gap 1
        let pi = dvector![0.3, 0.7];
        let mut k = DMatrix::zeros(2, 2);
        for i in 0..2 {
            for j in 0..2 {
                k[(i, j)] = pi[j];
            }
        }
        let chain = FiniteChain::new(k, pi).unwrap();
        assert_relative_eq!(exact_spectral_gap(&chain).unwrap(), 1.0, epsilon = 1e-12);
        // two-state flip-with-0.1: eigenvalues {1, 0.8}
        assert_relative_eq!(exact_spectral_gap(&two_state()).unwrap(), 0.2, epsilon = 1e-12);
        // identity kernel: gap 0
        let idchain = FiniteChain::new(DMatrix::identity(3, 3), dvector![0.2, 0.3, 0.5]).unwrap();
        assert_relative_eq!(exact_spectral_gap(&idchain).unwrap(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn gap_equality_for_relabeling() {
        let report =
            verify_gap_monotonicity(&two_state(), &StateMap::new(vec![1, 0]).unwrap()).unwrap();
        assert!(report.bijective);
        assert!(report.equality_residual() <= 1e-12);
        assert_relative_eq!(report.original, 0.2, epsilon = 1e-12);
    }

    #[test]
    fn birth_death_merge_does_not_shrink_gap() {
        // 4-state birth-death chain merged down to 2 states
        let k = dmatrix![
            0.5, 0.5, 0.0, 0.0;
            0.25, 0.25, 0.5, 0.0;
            0.0, 0.5, 0.25, 0.25;
            0.0, 0.0, 0.5, 0.5
        ];
        let pi = dvector![0.2, 0.4, 0.2, 0.2];
        // fix stationarity: recompute pi by power iteration
        let pi = {
            let mut p = pi.clone();
            for _ in 0..20_000 {
                p = k.transpose() * p;
            }
            &p / p.sum()
        };
        let chain = FiniteChain::new(k, pi).unwrap();
        assert!(chain.is_reversible());
        let map = StateMap::new(vec![0, 0, 1, 1]).unwrap();
        let report = verify_gap_monotonicity(&chain, &map).unwrap();
        assert!(
            report.pushforward >= report.original - 1e-12,
            "gap fell from {} to {}",
            report.original,
            report.pushforward
        );
    }

    #[test]
    fn bijective_acceptance_coincides_exactly() {
        let mut rng = step_rng(3, 1);
        let mh = generate::mh_chain(5, &mut rng);
        let map = generate::permutation(5, &mut rng);
        let report = verify_acceptance_coincidence(&mh, &map).unwrap();
        assert!(report.residual() <= 1e-14);
        assert!(report.kernel_residual <= 1e-14);
    }

    #[test]
    fn four_state_merge_acceptance_coincides() {
        // a 4-state chain built by splitting both states of a 2-state
        // Metropolis chain; merging the fibers back is a genuine
        // non-injective map and the rates agree to machine precision
        let mut rng = step_rng(21, 0);
        let base = generate::mh_chain(2, &mut rng);
        let (four_state, map) = {
            // force fibers of size exactly 2
            let mut lifted = None;
            for attempt in 0..100 {
                let mut r = step_rng(21, 1 + attempt);
                let (chain, m) = generate::lifted_mh(&base, 2, &mut r);
                if chain.chain().len() == 4 {
                    lifted = Some((chain, m));
                    break;
                }
            }
            lifted.expect("a 2+2 split occurs")
        };
        assert_eq!(four_state.chain().len(), 4);
        assert!(!map.is_bijective());
        let report = verify_acceptance_coincidence(&four_state, &map).unwrap();
        assert!(report.residual() <= 1e-12);
    }

    #[test]
    fn zero_noise_coupled_step_holds_exactly() {
        // with zero proposal noise both chains self-propose; whether the
        // uniform accepts or rejects, both hold and the transport deviation
        // stays zero
        let ridge = crate::measures::TargetFamily::new(
            2,
            crate::measures::SmoothFunction::analytic(
                |x: &crate::measures::Point| 0.5 * x[1] * x[1],
                |x: &crate::measures::Point| nalgebra::dvector![0.0, x[1]],
                |_| DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 0.0, 1.0]),
            ),
            crate::measures::SmoothFunction::analytic(
                |x: &crate::measures::Point| -0.5 * x.norm_squared(),
                |x: &crate::measures::Point| -x,
                |_| -DMatrix::identity(2, 2),
            ),
        );
        let la = crate::laplace::laplace_approximation(&ridge, 100.0, &dvector![1.0, 1.0])
            .unwrap();
        let std_target = standard_gaussian_family(2);
        let std_kernel = ProposalKernel::random_walk(SpdMatrix::identity(2), 1.0).unwrap();
        let hess_kernel = ProposalKernel::hessian_rw(la.clone(), 1.0).unwrap();
        let transport =
            |x: &Point| la.map_point() + la.covariance().apply_factor(x);
        let x_std = dvector![0.4, -0.2];
        let x_hess = transport(&x_std);
        let z = DVector::zeros(2);
        let y_std = std_kernel.propose_with_noise(&x_std, &z);
        let y_hess = hess_kernel.propose_with_noise(&x_hess, &z);
        assert_eq!(y_std, x_std);
        assert_eq!(y_hess, x_hess);
        let lr_std = std_kernel
            .log_acceptance_ratio(&std_target, 1.0, &x_std, &y_std)
            .unwrap();
        let lr_hess = hess_kernel
            .log_acceptance_ratio(&ridge, 100.0, &x_hess, &y_hess)
            .unwrap();
        assert_eq!(lr_std, 0.0);
        assert_eq!(lr_hess, 0.0);
        assert_eq!((y_hess - transport(&y_std)).norm(), 0.0);
    }

    #[test]
    fn lifted_merge_acceptance_coincides() {
        let mut rng = step_rng(4, 2);
        let base = generate::mh_chain(4, &mut rng);
        let (lifted, map) = generate::lifted_mh(&base, 3, &mut rng);
        let report = verify_acceptance_coincidence(&lifted, &map).unwrap();
        assert!(
            report.residual() <= 1e-12,
            "ᾱ = {} vs {}",
            report.original,
            report.pushforward
        );
        assert!(report.kernel_residual <= 1e-12);
        // and the transported chain is the base chain
        let transported = pushforward_kernel(lifted.chain(), &map).unwrap();
        assert_relative_eq!(transported.kernel(), base.chain().kernel(), epsilon = 1e-12);
    }

    #[test]
    fn correlation_identity_under_transport() {
        let mut rng = step_rng(9, 3);
        let chain = generate::reversible_chain(6, &mut rng);
        let map = generate::surjective_map(6, 3, &mut rng);
        let pushed = pushforward_kernel(&chain, &map).unwrap();
        let f: Vec<f64> = vec![0.3, -1.0, 2.0];
        let f_lifted: Vec<f64> = map.indices().iter().map(|&y| f[y]).collect();
        let lhs = stationary_lag_one_correlation(&chain, &f_lifted).unwrap();
        let rhs = stationary_lag_one_correlation(&pushed, &f).unwrap();
        assert_relative_eq!(lhs, rhs, epsilon = 1e-12);
    }

    #[test]
    fn marginal_law_of_transport() {
        // pushforward of the stationary transition measure equals the
        // stationary transition measure of the transported chain
        let mut rng = step_rng(13, 4);
        let chain = generate::reversible_chain(5, &mut rng);
        let map = generate::surjective_map(5, 2, &mut rng);
        let pushed = pushforward_kernel(&chain, &map).unwrap();
        let mut lhs = DMatrix::zeros(2, 2);
        for (x, &y) in map.indices().iter().enumerate() {
            for (xp, &yp) in map.indices().iter().enumerate() {
                lhs[(y, yp)] += chain.pi()[x] * chain.kernel()[(x, xp)];
            }
        }
        let mut rhs = DMatrix::zeros(2, 2);
        for y in 0..2 {
            for yp in 0..2 {
                rhs[(y, yp)] = pushed.pi()[y] * pushed.kernel()[(y, yp)];
            }
        }
        assert_relative_eq!(lhs, rhs, epsilon = 1e-13);
    }
}
