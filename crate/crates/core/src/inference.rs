//! Adaptive random-walk Metropolis–Hastings over the covariance parameters.
//!
//! Each kernel is one block (variance and decay proposed jointly on the log
//! scale) and the nugget is its own block. A sweep visits the functional
//! predictor kernels, then the basis kernels, then the nugget.

use std::f64::consts::PI;

use faer::linalg::matmul::triangular::{self, BlockStructure};
use faer::{Accum, Mat, Par};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::basis::{basis_matrix, GlobalBasis};
use crate::error::{FgpError, Result};
use crate::kernels::{cov_from_distances, KernelParams, DEFAULT_JITTER};
use crate::linalg::{add_scaled, axpy, dot, signed_log_det, Cholesky};
use crate::model::{
    log_marginal_likelihood, log_prior, weighted_beta_block, Dataset, KernelBlocks, ModelSpec,
    ParamState,
};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct McmcConfig {
    pub n_iter: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub n_chains: usize,
    pub seed: u64,
    pub target_accept: f64,
    pub adapt_window: usize,
    /// Starting standard deviation of every log-scale proposal.
    pub initial_step: f64,
}

impl Default for McmcConfig {
    fn default() -> Self {
        McmcConfig {
            n_iter: 2000,
            burn_in: 1000,
            thin: 2,
            n_chains: 1,
            seed: 0,
            target_accept: 0.3,
            adapt_window: 50,
            initial_step: 0.3,
        }
    }
}

impl McmcConfig {
    pub fn validate(&self) -> Result<()> {
        if self.burn_in >= self.n_iter {
            return Err(FgpError::invalid_spec(format!(
                "burn_in ({}) must be less than n_iter ({})",
                self.burn_in, self.n_iter
            )));
        }
        if self.thin == 0 || self.n_chains == 0 || self.adapt_window == 0 {
            return Err(FgpError::invalid_spec(
                "thin, n_chains and adapt_window must be at least 1",
            ));
        }
        if self.n_iter - self.burn_in < self.thin {
            return Err(FgpError::invalid_spec(
                "no draws retained: n_iter - burn_in < thin",
            ));
        }
        if !(self.target_accept > 0.0 && self.target_accept < 1.0) {
            return Err(FgpError::invalid_spec("target_accept must lie in (0, 1)"));
        }
        if !(self.initial_step >= 0.0 && self.initial_step.is_finite()) {
            return Err(FgpError::invalid_spec(
                "initial_step must be finite and nonnegative",
            ));
        }
        Ok(())
    }

    /// Number of draws retained per chain.
    pub fn retained(&self) -> usize {
        (self.n_iter - self.burn_in) / self.thin
    }
}

/// A Metropolis–Hastings block.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Block {
    Beta(usize),
    Eta(usize),
    Nugget,
}

impl Block {
    /// Every block in sweep order.
    pub fn all(q: usize, k: usize) -> Vec<Block> {
        (0..q)
            .map(Block::Beta)
            .chain((0..k).map(Block::Eta))
            .chain(std::iter::once(Block::Nugget))
            .collect()
    }

    pub fn name(&self) -> String {
        match self {
            Block::Beta(j) => format!("beta_{}", j + 1),
            Block::Eta(k) => format!("eta_{}", k + 1),
            Block::Nugget => "tau2".to_string(),
        }
    }
}

/// An unnormalized log posterior that is evaluated at single-block changes.
pub trait PosteriorTarget {
    fn state(&self) -> &ParamState;

    fn log_posterior(&self) -> f64;

    /// Log posterior at `candidate`, which differs from the current state only
    /// in `block`. Returns `-inf` outside the prior support.
    fn evaluate(&mut self, block: Block, candidate: &ParamState) -> Result<f64>;

    /// Makes the most recently evaluated candidate the current state.
    fn commit(&mut self, block: Block, candidate: ParamState);
}

/// Reassembles and refactorizes the full covariance on every evaluation.
pub struct DenseTarget<'a, B: GlobalBasis + ?Sized> {
    data: &'a Dataset,
    basis: &'a B,
    spec: &'a ModelSpec,
    state: ParamState,
    log_post: f64,
    pending: f64,
    use_likelihood: bool,
}

impl<'a, B: GlobalBasis + ?Sized> DenseTarget<'a, B> {
    pub fn new(
        data: &'a Dataset,
        basis: &'a B,
        spec: &'a ModelSpec,
        state: ParamState,
    ) -> Result<Self> {
        Self::build(data, basis, spec, state, true)
    }

    /// Target equal to the prior alone.
    pub fn prior_only(
        data: &'a Dataset,
        basis: &'a B,
        spec: &'a ModelSpec,
        state: ParamState,
    ) -> Result<Self> {
        Self::build(data, basis, spec, state, false)
    }

    fn build(
        data: &'a Dataset,
        basis: &'a B,
        spec: &'a ModelSpec,
        state: ParamState,
        use_likelihood: bool,
    ) -> Result<Self> {
        let mut t = DenseTarget {
            data,
            basis,
            spec,
            state: state.clone(),
            log_post: f64::NAN,
            pending: f64::NAN,
            use_likelihood,
        };
        t.log_post = t.value(&state)?;
        Ok(t)
    }

    fn value(&self, state: &ParamState) -> Result<f64> {
        let lp = log_prior(state, self.spec);
        if lp == f64::NEG_INFINITY || !self.use_likelihood {
            return Ok(lp);
        }
        Ok(lp + log_marginal_likelihood(self.data, self.basis, state)?)
    }
}

impl<B: GlobalBasis + ?Sized> PosteriorTarget for DenseTarget<'_, B> {
    fn state(&self) -> &ParamState {
        &self.state
    }

    fn log_posterior(&self) -> f64 {
        self.log_post
    }

    fn evaluate(&mut self, _block: Block, candidate: &ParamState) -> Result<f64> {
        self.pending = self.value(candidate)?;
        Ok(self.pending)
    }

    fn commit(&mut self, _block: Block, candidate: ParamState) {
        self.state = candidate;
        self.log_post = self.pending;
    }
}

/// Keeps `Σ⁻¹`, `Σ⁻¹Y`, `log|Σ|` and `YᵀΣ⁻¹Y` current. A kernel block changes
/// `Σ` by `(b bᵀ) ⊗ D` for an `n x n` matrix `D`, so its proposals are scored
/// with a rank-`n` Woodbury update. Nugget proposals refactorize.
pub struct IncrementalTarget<'a> {
    data: &'a Dataset,
    spec: &'a ModelSpec,
    distances: Mat<f64>,
    basis_values: Mat<f64>,
    blocks: KernelBlocks,
    state: ParamState,
    sigma_inv: Mat<f64>,
    alpha: Vec<f64>,
    log_det: f64,
    quad: f64,
    log_prior: f64,
    pending: Option<Pending>,
    updates_since_refresh: usize,
    refresh_every: usize,
}

enum Pending {
    Kernel {
        new_block: Mat<f64>,
        v: Mat<f64>,
        /// `M⁻¹ D`.
        w: Mat<f64>,
        c: Vec<f64>,
        log_det: f64,
        quad: f64,
        log_prior: f64,
    },
    Nugget {
        chol: Cholesky,
        alpha: Vec<f64>,
        quad: f64,
        log_prior: f64,
    },
    Unchanged {
        log_prior: f64,
    },
}

impl<'a> IncrementalTarget<'a> {
    pub fn new<B: GlobalBasis + ?Sized>(
        data: &'a Dataset,
        basis: &B,
        spec: &'a ModelSpec,
        state: ParamState,
    ) -> Result<Self> {
        if state.q() != data.q() || state.k() != basis.len() {
            return Err(FgpError::invalid_input(
                "state dimensions do not match data and basis",
            ));
        }
        let distances = data.locations().distance_matrix();
        let basis_values = basis_matrix(basis, data.z())?;
        let blocks = KernelBlocks::new(data, &distances, &state);
        let mut t = IncrementalTarget {
            data,
            spec,
            distances,
            basis_values,
            blocks,
            log_prior: log_prior(&state, spec),
            state,
            sigma_inv: Mat::zeros(0, 0),
            alpha: Vec::new(),
            log_det: 0.0,
            quad: 0.0,
            pending: None,
            updates_since_refresh: 0,
            refresh_every: 50,
        };
        t.refresh()?;
        Ok(t)
    }

    /// Number of accepted low-rank updates between full refactorizations.
    pub fn set_refresh_every(&mut self, every: usize) {
        self.refresh_every = every.max(1);
    }

    /// Recomputes every cached quantity from the kernel blocks.
    pub fn refresh(&mut self) -> Result<()> {
        let sigma = self.blocks.assemble(&self.basis_values, self.state.nugget);
        let chol = Cholesky::with_escalation(sigma.as_ref(), DEFAULT_JITTER)
            .map_err(|e| e.with_state(&self.state))?;
        self.install(&chol);
        Ok(())
    }

    fn install(&mut self, chol: &Cholesky) {
        self.alpha = chol.solve_vec(self.data.y());
        self.quad = dot(self.data.y(), &self.alpha);
        self.log_det = chol.log_det();
        self.sigma_inv = chol.inverse();
        self.updates_since_refresh = 0;
    }

    pub fn log_likelihood(&self) -> f64 {
        log_likelihood_from(self.quad, self.log_det, self.data.y().len())
    }

    fn evaluate_kernel(
        &mut self,
        block: Block,
        candidate: &ParamState,
        log_prior: f64,
    ) -> Result<f64> {
        let n = self.data.n();
        let (weights, new_block, old_block) = match block {
            Block::Beta(j) => (
                (0..self.data.s()).map(|s| (s, 1.0)).collect::<Vec<_>>(),
                weighted_beta_block(self.data, &self.distances, j, &candidate.beta_kernels[j]),
                &self.blocks.beta[j],
            ),
            Block::Eta(k) => (
                (0..self.data.s())
                    .map(|s| (s, self.basis_values[(s, k)]))
                    .filter(|&(_, b)| b != 0.0)
                    .collect(),
                cov_from_distances(&self.distances, &candidate.eta_kernels[k]),
                &self.blocks.eta[k],
            ),
            Block::Nugget => unreachable!(),
        };
        if weights.is_empty() {
            self.pending = Some(Pending::Unchanged { log_prior });
            return Ok(log_prior + self.log_likelihood());
        }
        let d = &new_block - old_block;
        let total = self.sigma_inv.nrows();

        // V = Σ⁻¹ U with U = b ⊗ I_n.
        let mut v = Mat::<f64>::zeros(total, n);
        for &(s, b) in &weights {
            add_scaled(
                v.as_mut(),
                b,
                self.sigma_inv.as_ref().submatrix(0, s * n, total, n),
            );
        }
        let mut g = Mat::<f64>::zeros(n, n);
        let mut a = vec![0.0; n];
        for &(s, b) in &weights {
            add_scaled(g.as_mut(), b, v.as_ref().submatrix(s * n, 0, n, n));
            axpy(&mut a, b, &self.alpha[s * n..(s + 1) * n]);
        }
        let mut m = Mat::<f64>::identity(n, n);
        faer::linalg::matmul::matmul(
            m.as_mut(),
            Accum::Add,
            d.as_ref(),
            g.as_ref(),
            1.0,
            Par::Seq,
        );
        let (sign, log_det_m) = signed_log_det(m.as_ref());
        if sign <= 0.0 || !log_det_m.is_finite() {
            return Err(
                FgpError::numerical("proposed covariance is not positive definite")
                    .with_state(candidate),
            );
        }
        let w = crate::linalg::lu_solve(m.as_ref(), d.as_ref());
        let c = crate::linalg::mat_vec(&w, &a);
        let quad = self.quad - dot(&a, &c);
        let log_det = self.log_det + log_det_m;
        let value = log_prior + log_likelihood_from(quad, log_det, total);
        self.pending = Some(Pending::Kernel {
            new_block,
            v,
            w,
            c,
            log_det,
            quad,
            log_prior,
        });
        Ok(value)
    }

    fn evaluate_nugget(&mut self, candidate: &ParamState, log_prior: f64) -> Result<f64> {
        let sigma = self.blocks.assemble(&self.basis_values, candidate.nugget);
        let chol = Cholesky::with_escalation(sigma.as_ref(), DEFAULT_JITTER)
            .map_err(|e| e.with_state(candidate))?;
        let alpha = chol.solve_vec(self.data.y());
        let quad = dot(self.data.y(), &alpha);
        let value = log_prior + log_likelihood_from(quad, chol.log_det(), alpha.len());
        self.pending = Some(Pending::Nugget {
            chol,
            alpha,
            quad,
            log_prior,
        });
        Ok(value)
    }

    fn commit_kernel(&mut self, block: Block, pending: Pending) {
        let Pending::Kernel {
            new_block,
            v,
            mut w,
            c,
            log_det,
            quad,
            log_prior,
        } = pending
        else {
            unreachable!()
        };
        let total = self.sigma_inv.nrows();
        // M⁻¹D is symmetric in exact arithmetic.
        let n = w.nrows();
        for i in 0..n {
            for j in 0..i {
                let s = 0.5 * (w[(i, j)] + w[(j, i)]);
                w[(i, j)] = s;
                w[(j, i)] = s;
            }
        }
        let mut vw = Mat::<f64>::zeros(total, n);
        faer::linalg::matmul::matmul(
            vw.as_mut(),
            Accum::Replace,
            v.as_ref(),
            w.as_ref(),
            1.0,
            Par::Seq,
        );
        triangular::matmul(
            self.sigma_inv.as_mut(),
            BlockStructure::TriangularLower,
            Accum::Add,
            vw.as_ref(),
            BlockStructure::Rectangular,
            v.transpose(),
            BlockStructure::Rectangular,
            -1.0,
            Par::Seq,
        );
        for j in 0..total {
            for i in 0..j {
                self.sigma_inv[(i, j)] = self.sigma_inv[(j, i)];
            }
        }
        let vc = crate::linalg::mat_vec(&v, &c);
        for (a, d) in self.alpha.iter_mut().zip(&vc) {
            *a -= d;
        }
        self.log_det = log_det;
        self.quad = quad;
        self.log_prior = log_prior;
        match block {
            Block::Beta(j) => self.blocks.beta[j] = new_block,
            Block::Eta(k) => self.blocks.eta[k] = new_block,
            Block::Nugget => unreachable!(),
        }
        self.updates_since_refresh += 1;
    }
}

fn log_likelihood_from(quad: f64, log_det: f64, len: usize) -> f64 {
    -0.5 * quad - 0.5 * log_det - 0.5 * len as f64 * (2.0 * PI).ln()
}

impl PosteriorTarget for IncrementalTarget<'_> {
    fn state(&self) -> &ParamState {
        &self.state
    }

    fn log_posterior(&self) -> f64 {
        self.log_prior + self.log_likelihood()
    }

    fn evaluate(&mut self, block: Block, candidate: &ParamState) -> Result<f64> {
        self.pending = None;
        let lp = log_prior(candidate, self.spec);
        if lp == f64::NEG_INFINITY {
            return Ok(lp);
        }
        match block {
            Block::Nugget => self.evaluate_nugget(candidate, lp),
            _ => self.evaluate_kernel(block, candidate, lp),
        }
    }

    fn commit(&mut self, block: Block, candidate: ParamState) {
        let pending = self
            .pending
            .take()
            .expect("commit without a successful evaluate");
        match pending {
            Pending::Unchanged { log_prior } => {
                self.log_prior = log_prior;
                match block {
                    Block::Beta(j) => {
                        self.blocks.beta[j] = weighted_beta_block(
                            self.data,
                            &self.distances,
                            j,
                            &candidate.beta_kernels[j],
                        )
                    }
                    Block::Eta(k) => {
                        self.blocks.eta[k] =
                            cov_from_distances(&self.distances, &candidate.eta_kernels[k])
                    }
                    Block::Nugget => {}
                }
            }
            Pending::Nugget {
                chol,
                alpha,
                quad,
                log_prior,
            } => {
                self.install(&chol);
                self.alpha = alpha;
                self.quad = quad;
                self.log_prior = log_prior;
            }
            p @ Pending::Kernel { .. } => self.commit_kernel(block, p),
        }
        self.state = candidate;
        if self.updates_since_refresh >= self.refresh_every {
            // A failure here leaves the slightly drifted caches in place.
            let _ = self.refresh();
        }
    }
}

/// Log-scale Gaussian random-walk proposal for one block. Returns the
/// candidate and the log Jacobian of the log transform.
pub fn propose<R: Rng + ?Sized>(
    current: &ParamState,
    block: Block,
    step: f64,
    rng: &mut R,
) -> (ParamState, f64) {
    let mut cand = current.clone();
    let mut shift = |x: &mut f64, rng: &mut R| {
        let e: f64 = rng.sample::<f64, _>(StandardNormal) * step;
        *x *= e.exp();
        e
    };
    let log_jac = match block {
        Block::Beta(j) => move_kernel(&mut cand.beta_kernels[j], &mut shift, rng),
        Block::Eta(k) => move_kernel(&mut cand.eta_kernels[k], &mut shift, rng),
        Block::Nugget => shift(&mut cand.nugget, rng),
    };
    (cand, log_jac)
}

fn move_kernel<R: ?Sized>(
    k: &mut KernelParams,
    shift: &mut impl FnMut(&mut f64, &mut R) -> f64,
    rng: &mut R,
) -> f64 {
    shift(&mut k.variance, rng) + shift(&mut k.decay, rng)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StepOutcome {
    Accepted,
    Rejected,
    /// The likelihood could not be evaluated; treated as a rejection.
    Failed,
}

/// One Metropolis–Hastings update of `block`.
pub fn mh_step<T: PosteriorTarget + ?Sized, R: Rng + ?Sized>(
    target: &mut T,
    block: Block,
    step: f64,
    rng: &mut R,
) -> StepOutcome {
    let (cand, log_jac) = propose(target.state(), block, step, rng);
    let u: f64 = rng.random();
    let value = match target.evaluate(block, &cand) {
        Ok(v) => v,
        Err(_) => return StepOutcome::Failed,
    };
    if !value.is_finite() {
        return StepOutcome::Rejected;
    }
    let log_ratio = value - target.log_posterior() + log_jac;
    if u.ln() < log_ratio {
        target.commit(block, cand);
        StepOutcome::Accepted
    } else {
        StepOutcome::Rejected
    }
}

/// Output of one chain.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ChainOutput {
    pub draws: Vec<ParamState>,
    /// Post burn-in acceptance fraction per block.
    pub acceptance_rates: Vec<f64>,
    /// Log posterior after every sweep, burn-in included.
    pub log_posterior_trace: Vec<f64>,
    /// Proposal step sizes in effect during every sweep.
    pub step_size_trace: Vec<Vec<f64>>,
    /// Proposals whose likelihood evaluation failed numerically.
    pub failures: usize,
}

/// Retained draws of every chain.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PosteriorDraws {
    pub block_names: Vec<String>,
    pub chains: Vec<ChainOutput>,
}

impl PosteriorDraws {
    /// All retained draws, chain by chain.
    pub fn draws(&self) -> Vec<ParamState> {
        self.chains
            .iter()
            .flat_map(|c| c.draws.iter().cloned())
            .collect()
    }

    pub fn len(&self) -> usize {
        self.chains.iter().map(|c| c.draws.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Acceptance rate per block averaged over chains.
    pub fn acceptance_rates(&self) -> Vec<f64> {
        let nb = self.block_names.len();
        let mut out = vec![0.0; nb];
        for c in &self.chains {
            for (o, r) in out.iter_mut().zip(&c.acceptance_rates) {
                *o += r / self.chains.len() as f64;
            }
        }
        out
    }

    pub fn posterior_mean_nugget(&self) -> f64 {
        let all: Vec<f64> = self
            .chains
            .iter()
            .flat_map(|c| c.draws.iter().map(|d| d.nugget))
            .collect();
        all.iter().sum::<f64>() / all.len() as f64
    }
}

/// Deterministic starting state inside the prior support.
pub fn initialize_state<B: GlobalBasis + ?Sized>(
    data: &Dataset,
    basis: &B,
    spec: &ModelSpec,
) -> Result<ParamState> {
    let q = data.q();
    let k = basis.len();
    let var_y = data.response_variance();
    let variance = (var_y / (q + k + 1) as f64).max(1e-6);
    let prior = spec.priors.decay;
    let mut decay = (prior.lower * prior.upper).sqrt();
    if !prior.contains(decay) {
        decay = 0.5 * (prior.lower + prior.upper);
    }
    let kernel = |nu| KernelParams::new(variance, decay, nu);
    Ok(ParamState {
        beta_kernels: (0..q)
            .map(|_| kernel(spec.nu_beta))
            .collect::<Result<_>>()?,
        eta_kernels: (0..k).map(|_| kernel(spec.nu_eta)).collect::<Result<_>>()?,
        nugget: (0.1 * var_y).max(1e-6),
    })
}

const INIT_ATTEMPTS: usize = 100;

/// Multiplies every parameter by `exp(N(0, scale²))`, keeping decays inside
/// the prior support.
fn jitter_state<R: Rng + ?Sized>(
    state: &ParamState,
    spec: &ModelSpec,
    scale: f64,
    rng: &mut R,
) -> ParamState {
    let mut s = state.clone();
    let prior = spec.priors.decay;
    let f = |rng: &mut R| (rng.sample::<f64, _>(StandardNormal) * scale).exp();
    for k in s.beta_kernels.iter_mut().chain(s.eta_kernels.iter_mut()) {
        k.variance *= f(rng);
        let d = k.decay * f(rng);
        k.decay = if prior.contains(d) { d } else { k.decay };
    }
    s.nugget *= f(rng);
    s
}

/// Builds a target at `init`, retrying from jittered states when the log
/// posterior is not finite.
fn start_target<'a, T, R: Rng + ?Sized>(
    init: &ParamState,
    spec: &ModelSpec,
    rng: &mut R,
    mut build: impl FnMut(ParamState) -> Result<T>,
) -> Result<T>
where
    T: PosteriorTarget + 'a,
{
    let mut candidate = init.clone();
    for _ in 0..INIT_ATTEMPTS {
        if let Ok(t) = build(candidate.clone()) {
            if t.log_posterior().is_finite() {
                return Ok(t);
            }
        }
        candidate = jitter_state(init, spec, 0.5, rng);
    }
    Err(FgpError::InitializationFailure {
        attempts: INIT_ATTEMPTS,
    })
}

/// Runs one chain against an already-built target over the given blocks.
pub fn run_chain_with<T: PosteriorTarget + ?Sized, R: Rng + ?Sized>(
    target: &mut T,
    blocks: &[Block],
    config: &McmcConfig,
    rng: &mut R,
) -> Result<ChainOutput> {
    config.validate()?;
    let nb = blocks.len();
    let mut steps = vec![config.initial_step; nb];
    let mut window_accepts = vec![0usize; nb];
    let mut kept_accepts = vec![0usize; nb];
    let mut out = ChainOutput {
        draws: Vec::with_capacity(config.retained()),
        acceptance_rates: vec![0.0; nb],
        log_posterior_trace: Vec::with_capacity(config.n_iter),
        step_size_trace: Vec::with_capacity(config.n_iter),
        failures: 0,
    };
    for iter in 0..config.n_iter {
        out.step_size_trace.push(steps.clone());
        for (b, &block) in blocks.iter().enumerate() {
            match mh_step(target, block, steps[b], rng) {
                StepOutcome::Accepted => {
                    window_accepts[b] += 1;
                    if iter >= config.burn_in {
                        kept_accepts[b] += 1;
                    }
                }
                StepOutcome::Rejected => {}
                StepOutcome::Failed => out.failures += 1,
            }
        }
        out.log_posterior_trace.push(target.log_posterior());
        if iter < config.burn_in && (iter + 1) % config.adapt_window == 0 {
            for b in 0..nb {
                let rate = window_accepts[b] as f64 / config.adapt_window as f64;
                steps[b] *= (rate - config.target_accept).exp();
            }
            window_accepts.iter_mut().for_each(|a| *a = 0);
        }
        if iter >= config.burn_in && (iter - config.burn_in + 1) % config.thin == 0 {
            out.draws.push(target.state().clone());
        }
    }
    let kept = (config.n_iter - config.burn_in) as f64;
    out.acceptance_rates = kept_accepts.iter().map(|&a| a as f64 / kept).collect();
    Ok(out)
}

/// RNG stream of chain `chain` under `seed`.
pub fn chain_rng(seed: u64, chain: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(chain as u64);
    rng
}

/// Runs one full chain from `init`, sampling every block.
pub fn run_chain<B: GlobalBasis + ?Sized>(
    init: &ParamState,
    config: &McmcConfig,
    chain: usize,
    data: &Dataset,
    basis: &B,
    spec: &ModelSpec,
) -> Result<ChainOutput> {
    config.validate()?;
    init.validate()?;
    let mut rng = chain_rng(config.seed, chain);
    let start = if chain == 0 {
        init.clone()
    } else {
        jitter_state(init, spec, 0.5, &mut rng)
    };
    let mut target = start_target(&start, spec, &mut rng, |s| {
        IncrementalTarget::new(data, basis, spec, s)
    })?;
    let blocks = Block::all(data.q(), basis.len());
    run_chain_with(&mut target, &blocks, config, &mut rng)
}

/// Runs `config.n_chains` chains concurrently from [`initialize_state`]; chains
/// after the first start from jittered copies of it.
pub fn run_chains<B: GlobalBasis + Sync + ?Sized>(
    data: &Dataset,
    basis: &B,
    spec: &ModelSpec,
    config: &McmcConfig,
) -> Result<PosteriorDraws> {
    config.validate()?;
    spec.validate()?;
    let init = initialize_state(data, basis, spec)?;
    let results: Vec<Result<ChainOutput>> = std::thread::scope(|scope| {
        let handles: Vec<_> = (0..config.n_chains)
            .map(|c| {
                let init = &init;
                scope.spawn(move || run_chain(init, config, c, data, basis, spec))
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("chain thread panicked"))
            .collect()
    });
    Ok(PosteriorDraws {
        block_names: Block::all(data.q(), basis.len())
            .iter()
            .map(Block::name)
            .collect(),
        chains: results.into_iter().collect::<Result<_>>()?,
    })
}
