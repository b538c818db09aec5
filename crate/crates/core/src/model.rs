//! The additive fGP model: data containers, priors, parameter states and the
//! structured covariance of the stacked response.
//!
//! With `n` locations and `S` realizations the response is stacked
//! realization-major, `Y = (Y_1(u_1), .., Y_1(u_n), .., Y_S(u_n))`, and
//!
//! ```text
//! Σ_Y = J_S ⊗ C_β + Σ_k (b_k b_kᵀ) ⊗ C_k + τ² I
//! C_β[i, i'] = Σ_j x_j(u_i) C_{β,j}(u_i, u_i') x_j(u_i')
//! ```
//!
//! where `b_k` is column `k` of the `S x K` basis matrix.

use std::f64::consts::PI;

use faer::Mat;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::basis::{basis_matrix, GlobalBasis, SplineSpec};
use crate::error::{FgpError, Result};
use crate::kernels::{
    cov_from_distances, KernelParams, LocationSet, Point, Smoothness, DEFAULT_JITTER,
};
use crate::linalg::{add_scaled, dot, Cholesky};

/// Training data for one fit.
#[derive(Clone, Debug)]
pub struct Dataset {
    locations: LocationSet,
    x: Mat<f64>,
    z: Mat<f64>,
    y: Vec<f64>,
}

impl Dataset {
    /// `x` is `n x q` (functional predictors at each location), `z` is `S x p`
    /// (global predictors per realization) and `y` has length `S * n`.
    pub fn new(locations: LocationSet, x: Mat<f64>, z: Mat<f64>, y: Vec<f64>) -> Result<Self> {
        let n = locations.len();
        if x.nrows() != n {
            return Err(FgpError::invalid_input(format!(
                "functional predictor matrix has {} rows for {n} locations",
                x.nrows()
            )));
        }
        if z.nrows() == 0 {
            return Err(FgpError::invalid_input("dataset has no realizations"));
        }
        if y.len() != z.nrows() * n {
            return Err(FgpError::invalid_input(format!(
                "response has {} values, expected S * n = {} * {n}",
                y.len(),
                z.nrows()
            )));
        }
        if !all_finite(&x) || !all_finite(&z) || y.iter().any(|v| !v.is_finite()) {
            return Err(FgpError::invalid_input(
                "dataset contains non-finite values",
            ));
        }
        Ok(Dataset { locations, x, z, y })
    }

    pub fn locations(&self) -> &LocationSet {
        &self.locations
    }

    pub fn x(&self) -> &Mat<f64> {
        &self.x
    }

    pub fn z(&self) -> &Mat<f64> {
        &self.z
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    /// Number of locations.
    pub fn n(&self) -> usize {
        self.locations.len()
    }

    /// Number of realizations.
    pub fn s(&self) -> usize {
        self.z.nrows()
    }

    /// Number of functional predictors.
    pub fn q(&self) -> usize {
        self.x.ncols()
    }

    /// Number of global predictors.
    pub fn p(&self) -> usize {
        self.z.ncols()
    }

    pub fn x_row(&self, i: usize) -> Vec<f64> {
        (0..self.q()).map(|j| self.x[(i, j)]).collect()
    }

    pub fn z_row(&self, s: usize) -> Vec<f64> {
        (0..self.p()).map(|d| self.z[(s, d)]).collect()
    }

    /// Returns a copy with realizations reordered by `order`.
    pub fn permute_realizations(&self, order: &[usize]) -> Result<Self> {
        let n = self.n();
        let z = Mat::from_fn(order.len(), self.p(), |s, d| self.z[(order[s], d)]);
        let y = order
            .iter()
            .flat_map(|&s| self.y[s * n..(s + 1) * n].iter().copied())
            .collect();
        Dataset::new(self.locations.clone(), self.x.clone(), z, y)
    }

    pub fn with_response(&self, y: Vec<f64>) -> Result<Self> {
        Dataset::new(self.locations.clone(), self.x.clone(), self.z.clone(), y)
    }

    /// Sample variance of the stacked response.
    pub fn response_variance(&self) -> f64 {
        sample_variance(&self.y)
    }
}

pub(crate) fn all_finite(m: &Mat<f64>) -> bool {
    (0..m.ncols()).all(|j| (0..m.nrows()).all(|i| m[(i, j)].is_finite()))
}

pub(crate) fn sample_variance(v: &[f64]) -> f64 {
    if v.len() < 2 {
        return 0.0;
    }
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (v.len() - 1) as f64
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct InverseGamma {
    pub shape: f64,
    pub scale: f64,
}

impl InverseGamma {
    pub fn ln_pdf(&self, x: f64) -> f64 {
        if !(x > 0.0 && x.is_finite()) {
            return f64::NEG_INFINITY;
        }
        let (a, b) = (self.shape, self.scale);
        a * b.ln() - ln_gamma(a) - (a + 1.0) * x.ln() - b / x
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct UniformPrior {
    pub lower: f64,
    pub upper: f64,
}

impl UniformPrior {
    pub fn ln_pdf(&self, x: f64) -> f64 {
        if x > self.lower && x < self.upper {
            -(self.upper - self.lower).ln()
        } else {
            f64::NEG_INFINITY
        }
    }

    pub fn contains(&self, x: f64) -> bool {
        x > self.lower && x < self.upper
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Priors {
    /// Shared by every kernel variance.
    pub variance: InverseGamma,
    pub nugget: InverseGamma,
    /// Shared by every kernel decay rate.
    pub decay: UniformPrior,
}

impl Priors {
    /// IG(2, 1) on all variances and the nugget; decays uniform on
    /// `(3 / d_max, 3 / d_min)` over nonzero pairwise distances.
    pub fn default_for(locations: &LocationSet) -> Result<Self> {
        let (d_min, d_max) = locations.distance_range().ok_or_else(|| {
            FgpError::invalid_input("need two distinct locations to set default decay bounds")
        })?;
        let mut decay = UniformPrior {
            lower: 3.0 / d_max,
            upper: 3.0 / d_min,
        };
        if decay.lower >= decay.upper {
            // Every pair is equidistant; widen symmetrically.
            decay = UniformPrior {
                lower: decay.lower / 10.0,
                upper: decay.upper * 10.0,
            };
        }
        Ok(Priors {
            variance: InverseGamma {
                shape: 2.0,
                scale: 1.0,
            },
            nugget: InverseGamma {
                shape: 2.0,
                scale: 1.0,
            },
            decay,
        })
    }

    pub fn validate(&self) -> Result<()> {
        for (name, ig) in [("variance", self.variance), ("nugget", self.nugget)] {
            if !(ig.shape > 0.0 && ig.scale > 0.0) {
                return Err(FgpError::invalid_spec(format!(
                    "{name} prior needs positive shape and scale"
                )));
            }
        }
        if !(self.decay.lower > 0.0
            && self.decay.lower < self.decay.upper
            && self.decay.upper.is_finite())
        {
            return Err(FgpError::invalid_spec(format!(
                "decay prior needs 0 < lower < upper (got {} and {})",
                self.decay.lower, self.decay.upper
            )));
        }
        Ok(())
    }
}

/// Everything other than the covariance parameters that determines `Σ_Y`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub basis: SplineSpec,
    pub nu_beta: Smoothness,
    pub nu_eta: Smoothness,
    pub priors: Priors,
}

impl ModelSpec {
    /// Cubic tensor basis with `m` functions per global dimension spanning
    /// the observed range of `Z`, exponential kernels and default priors.
    pub fn default_for(data: &Dataset, m: usize) -> Result<Self> {
        let bounds = (0..data.p())
            .map(|d| {
                let col = (0..data.s()).map(|s| data.z()[(s, d)]);
                let (lo, hi) = col.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| {
                    (a.min(v), b.max(v))
                });
                if hi > lo {
                    (lo, hi)
                } else {
                    (lo - 0.5, hi + 0.5)
                }
            })
            .collect();
        Ok(ModelSpec {
            basis: SplineSpec {
                degree: 3,
                marginal_counts: vec![m; data.p()],
                bounds,
            },
            nu_beta: Smoothness::Half,
            nu_eta: Smoothness::Half,
            priors: Priors::default_for(data.locations())?,
        })
    }

    pub fn validate(&self) -> Result<()> {
        self.basis.validate()?;
        self.priors.validate()
    }
}

/// One value of every covariance parameter.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamState {
    /// One kernel per functional predictor.
    pub beta_kernels: Vec<KernelParams>,
    /// One kernel per basis function.
    pub eta_kernels: Vec<KernelParams>,
    /// Observation noise variance τ².
    pub nugget: f64,
}

impl ParamState {
    pub fn validate(&self) -> Result<()> {
        for k in self.beta_kernels.iter().chain(&self.eta_kernels) {
            k.validate()?;
        }
        if !(self.nugget > 0.0 && self.nugget.is_finite()) {
            return Err(FgpError::invalid_spec(format!(
                "nugget must be positive (got {})",
                self.nugget
            )));
        }
        Ok(())
    }

    pub fn q(&self) -> usize {
        self.beta_kernels.len()
    }

    pub fn k(&self) -> usize {
        self.eta_kernels.len()
    }

    /// Column names of [`ParamState::flatten`].
    pub fn column_names(q: usize, k: usize) -> Vec<String> {
        let mut names = Vec::with_capacity(2 * (q + k) + 1);
        for j in 1..=q {
            names.push(format!("sigma2_beta_{j}"));
            names.push(format!("decay_beta_{j}"));
        }
        for j in 1..=k {
            names.push(format!("sigma2_eta_{j}"));
            names.push(format!("decay_eta_{j}"));
        }
        names.push("tau2".to_string());
        names
    }

    /// `(σ², φ)` of every β kernel, then of every η kernel, then τ².
    pub fn flatten(&self) -> Vec<f64> {
        self.beta_kernels
            .iter()
            .chain(&self.eta_kernels)
            .flat_map(|k| [k.variance, k.decay])
            .chain(std::iter::once(self.nugget))
            .collect()
    }

    pub fn unflatten(
        values: &[f64],
        q: usize,
        k: usize,
        nu_beta: Smoothness,
        nu_eta: Smoothness,
    ) -> Result<Self> {
        if values.len() != 2 * (q + k) + 1 {
            return Err(FgpError::invalid_input(format!(
                "expected {} parameter values for q = {q}, K = {k}, got {}",
                2 * (q + k) + 1,
                values.len()
            )));
        }
        let kernel = |i: usize, nu| KernelParams::new(values[2 * i], values[2 * i + 1], nu);
        let state = ParamState {
            beta_kernels: (0..q).map(|j| kernel(j, nu_beta)).collect::<Result<_>>()?,
            eta_kernels: (0..k)
                .map(|j| kernel(q + j, nu_eta))
                .collect::<Result<_>>()?,
            nugget: values[2 * (q + k)],
        };
        state.validate()?;
        Ok(state)
    }
}

/// Per-kernel `n x n` matrices from which `Σ_Y` is assembled.
#[derive(Clone, Debug)]
pub(crate) struct KernelBlocks {
    /// `diag(x_j) C_{β,j} diag(x_j)`.
    pub beta: Vec<Mat<f64>>,
    /// `C_k`.
    pub eta: Vec<Mat<f64>>,
}

impl KernelBlocks {
    pub fn new(data: &Dataset, distances: &Mat<f64>, state: &ParamState) -> Self {
        KernelBlocks {
            beta: (0..state.q())
                .map(|j| weighted_beta_block(data, distances, j, &state.beta_kernels[j]))
                .collect(),
            eta: state
                .eta_kernels
                .iter()
                .map(|k| cov_from_distances(distances, k))
                .collect(),
        }
    }

    pub fn c_beta(&self, n: usize) -> Mat<f64> {
        let mut c = Mat::zeros(n, n);
        for b in &self.beta {
            add_scaled(c.as_mut(), 1.0, b.as_ref());
        }
        c
    }

    /// `Σ_Y` given the `S x K` basis matrix.
    pub fn assemble(&self, basis_values: &Mat<f64>, nugget: f64) -> Mat<f64> {
        let s_count = basis_values.nrows();
        let n = self
            .beta
            .first()
            .or(self.eta.first())
            .map_or(0, |m| m.nrows());
        let c_beta = self.c_beta(n);
        let mut sigma = Mat::zeros(s_count * n, s_count * n);
        let mut block = Mat::zeros(n, n);
        for s in 0..s_count {
            for t in s..s_count {
                block.copy_from(&c_beta);
                for (k, ck) in self.eta.iter().enumerate() {
                    let w = basis_values[(s, k)] * basis_values[(t, k)];
                    if w != 0.0 {
                        add_scaled(block.as_mut(), w, ck.as_ref());
                    }
                }
                sigma
                    .as_mut()
                    .submatrix_mut(s * n, t * n, n, n)
                    .copy_from(&block);
                if t != s {
                    sigma
                        .as_mut()
                        .submatrix_mut(t * n, s * n, n, n)
                        .copy_from(block.transpose());
                }
            }
        }
        for i in 0..s_count * n {
            sigma[(i, i)] += nugget;
        }
        sigma
    }
}

pub(crate) fn weighted_beta_block(
    data: &Dataset,
    distances: &Mat<f64>,
    j: usize,
    kernel: &KernelParams,
) -> Mat<f64> {
    let x = data.x();
    Mat::from_fn(data.n(), data.n(), |a, b| {
        x[(a, j)] * kernel.cov_at(distances[(a, b)]) * x[(b, j)]
    })
}

fn check_state(data: &Dataset, k: usize, state: &ParamState) -> Result<()> {
    if state.q() != data.q() {
        return Err(FgpError::invalid_input(format!(
            "state has {} functional-predictor kernels, data has q = {}",
            state.q(),
            data.q()
        )));
    }
    if state.k() != k {
        return Err(FgpError::invalid_input(format!(
            "state has {} basis kernels, basis has K = {k}",
            state.k()
        )));
    }
    Ok(())
}

/// `C_β`, the `n x n` covariance shared by every realization pair.
pub fn assemble_c_beta(data: &Dataset, state: &ParamState) -> Result<Mat<f64>> {
    if state.q() != data.q() {
        return Err(FgpError::invalid_input(format!(
            "state has {} functional-predictor kernels, data has q = {}",
            state.q(),
            data.q()
        )));
    }
    let d = data.locations().distance_matrix();
    let mut c = Mat::zeros(data.n(), data.n());
    for (j, k) in state.beta_kernels.iter().enumerate() {
        c += weighted_beta_block(data, &d, j, k);
    }
    Ok(c)
}

/// `Σ_Z`, whose `(s, s')` block is `Σ_k B_k(z_s) C_k B_k(z_s')`.
pub fn assemble_sigma_z<B: GlobalBasis + ?Sized>(
    data: &Dataset,
    basis: &B,
    state: &ParamState,
) -> Result<Mat<f64>> {
    check_state(data, basis.len(), state)?;
    let bv = basis_matrix(basis, data.z())?;
    let d = data.locations().distance_matrix();
    let blocks = KernelBlocks {
        beta: Vec::new(),
        eta: state
            .eta_kernels
            .iter()
            .map(|k| cov_from_distances(&d, k))
            .collect(),
    };
    let n = data.n();
    if blocks.eta.is_empty() {
        return Ok(Mat::zeros(data.s() * n, data.s() * n));
    }
    Ok(blocks.assemble(&bv, 0.0))
}

/// The full covariance `Σ_Y` of the stacked response, without jitter.
pub fn assemble_sigma_y<B: GlobalBasis + ?Sized>(
    data: &Dataset,
    basis: &B,
    state: &ParamState,
) -> Result<Mat<f64>> {
    check_state(data, basis.len(), state)?;
    let bv = basis_matrix(basis, data.z())?;
    let d = data.locations().distance_matrix();
    Ok(KernelBlocks::new(data, &d, state).assemble(&bv, state.nugget))
}

/// Factorizes `Σ_Y`, escalating diagonal jitter if the plain factorization fails.
pub fn factor_sigma_y<B: GlobalBasis + ?Sized>(
    data: &Dataset,
    basis: &B,
    state: &ParamState,
) -> Result<Cholesky> {
    let sigma = assemble_sigma_y(data, basis, state)?;
    Cholesky::with_escalation(sigma.as_ref(), DEFAULT_JITTER).map_err(|e| e.with_state(state))
}

/// One response coordinate: a realization (identified by index, with its
/// global predictors) at a location (with its functional predictors).
#[derive(Clone, Copy, Debug)]
pub struct Site<'a> {
    pub realization: usize,
    pub z: &'a [f64],
    pub location: Point,
    pub x: &'a [f64],
}

/// Prior covariance of the responses at two sites.
///
/// The nugget contributes only when both the realization and the location
/// coincide.
pub fn prior_cov_pair<B: GlobalBasis + ?Sized>(
    basis: &B,
    a: &Site<'_>,
    b: &Site<'_>,
    state: &ParamState,
) -> Result<f64> {
    if a.x.len() != state.q() || b.x.len() != state.q() {
        return Err(FgpError::invalid_input(
            "functional predictor length differs from q",
        ));
    }
    if basis.len() != state.k() {
        return Err(FgpError::invalid_input("basis size differs from K"));
    }
    let d = crate::kernels::distance(a.location, b.location);
    let mut cov = 0.0;
    for (j, k) in state.beta_kernels.iter().enumerate() {
        cov += a.x[j] * k.cov_at(d) * b.x[j];
    }
    let mut ba = vec![0.0; basis.len()];
    let mut bb = vec![0.0; basis.len()];
    basis.eval_into(a.z, &mut ba)?;
    basis.eval_into(b.z, &mut bb)?;
    for (k, kern) in state.eta_kernels.iter().enumerate() {
        cov += ba[k] * kern.cov_at(d) * bb[k];
    }
    if a.realization == b.realization && a.location == b.location {
        cov += state.nugget;
    }
    Ok(cov)
}

/// `log N(y | 0, Σ)` from a Cholesky factor of `Σ`.
pub fn gaussian_log_density(chol: &Cholesky, y: &[f64]) -> f64 {
    let alpha = chol.solve_vec(y);
    -0.5 * dot(y, &alpha) - 0.5 * chol.log_det() - 0.5 * y.len() as f64 * (2.0 * PI).ln()
}

/// Log marginal likelihood of the data with every GP integrated out.
pub fn log_marginal_likelihood<B: GlobalBasis + ?Sized>(
    data: &Dataset,
    basis: &B,
    state: &ParamState,
) -> Result<f64> {
    let chol = factor_sigma_y(data, basis, state)?;
    Ok(gaussian_log_density(&chol, data.y()))
}

/// Sum of log prior densities; `-inf` outside the prior support.
pub fn log_prior(state: &ParamState, spec: &ModelSpec) -> f64 {
    let p = &spec.priors;
    let kernels: f64 = state
        .beta_kernels
        .iter()
        .chain(&state.eta_kernels)
        .map(|k| p.variance.ln_pdf(k.variance) + p.decay.ln_pdf(k.decay))
        .sum();
    kernels + p.nugget.ln_pdf(state.nugget)
}
