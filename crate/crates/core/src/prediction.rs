//! Posterior-predictive inference for new realizations, latent-surface
//! recovery and predictive diagnostics.
//!
//! Test realizations are always new realizations, so the nugget enters only
//! the test-point variances and never the train/test cross-covariance.

use faer::Mat;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Open01};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::basis::{basis_matrix, GlobalBasis};
use crate::error::{FgpError, Result};
use crate::kernels::{cross_cov_matrix, LocationSet};
use crate::linalg::{add_scaled, mat_vec, Cholesky};
use crate::model::{all_finite, factor_sigma_y, Dataset, ParamState};

/// Locations, predictors and optional truth for held-out realizations.
#[derive(Clone, Debug)]
pub struct TestSet {
    locations: LocationSet,
    x: Mat<f64>,
    z: Mat<f64>,
    y: Option<Vec<f64>>,
}

impl TestSet {
    /// `x` is `n_test x q`, `z` is `S_test x p` and `y`, when given, has
    /// length `S_test * n_test` in realization-major order.
    pub fn new(
        locations: LocationSet,
        x: Mat<f64>,
        z: Mat<f64>,
        y: Option<Vec<f64>>,
    ) -> Result<Self> {
        if x.nrows() != locations.len() {
            return Err(FgpError::invalid_input(format!(
                "test predictor matrix has {} rows for {} locations",
                x.nrows(),
                locations.len()
            )));
        }
        if let Some(y) = &y {
            if y.len() != z.nrows() * locations.len() {
                return Err(FgpError::invalid_input(format!(
                    "test truth has {} values, expected {}",
                    y.len(),
                    z.nrows() * locations.len()
                )));
            }
            if y.iter().any(|v| !v.is_finite()) {
                return Err(FgpError::invalid_input(
                    "test truth contains non-finite values",
                ));
            }
        }
        if !all_finite(&x) || !all_finite(&z) {
            return Err(FgpError::invalid_input(
                "test predictors contain non-finite values",
            ));
        }
        Ok(TestSet { locations, x, z, y })
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

    pub fn y(&self) -> Option<&[f64]> {
        self.y.as_deref()
    }

    pub fn n(&self) -> usize {
        self.locations.len()
    }

    pub fn s(&self) -> usize {
        self.z.nrows()
    }

    /// Number of test points, `S_test * n_test`.
    pub fn len(&self) -> usize {
        self.n() * self.s()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn without_truth(&self) -> TestSet {
        TestSet {
            y: None,
            ..self.clone()
        }
    }

    pub fn check_against(&self, data: &Dataset) -> Result<()> {
        if self.x.ncols() != data.q() || self.z.ncols() != data.p() {
            return Err(FgpError::invalid_input(format!(
                "test set has q = {}, p = {} but training data has q = {}, p = {}",
                self.x.ncols(),
                self.z.ncols(),
                data.q(),
                data.p()
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PredictionResult {
    pub mean: Vec<f64>,
    pub sd: Vec<f64>,
    pub lower95: Vec<f64>,
    pub upper95: Vec<f64>,
}

impl PredictionResult {
    pub fn len(&self) -> usize {
        self.mean.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mean.is_empty()
    }
}

/// Covariance between the test points and the training response,
/// `S_test n_test x S n`.
fn cross_covariance<B: GlobalBasis + ?Sized>(
    draw: &ParamState,
    data: &Dataset,
    basis: &B,
    test: &TestSet,
) -> Result<Mat<f64>> {
    let (n, nt) = (data.n(), test.n());
    let bv = basis_matrix(basis, data.z())?;
    let bt = basis_matrix(basis, test.z())?;
    let mut c_beta = Mat::<f64>::zeros(nt, n);
    for (j, kern) in draw.beta_kernels.iter().enumerate() {
        let c = cross_cov_matrix(test.locations(), data.locations(), kern);
        for i in 0..n {
            for a in 0..nt {
                c_beta[(a, i)] += test.x()[(a, j)] * c[(a, i)] * data.x()[(i, j)];
            }
        }
    }
    let c_eta: Vec<Mat<f64>> = draw
        .eta_kernels
        .iter()
        .map(|k| cross_cov_matrix(test.locations(), data.locations(), k))
        .collect();
    let mut cross = Mat::zeros(test.s() * nt, data.s() * n);
    for t in 0..test.s() {
        for s in 0..data.s() {
            let mut block = cross.as_mut().submatrix_mut(t * nt, s * n, nt, n);
            block.copy_from(&c_beta);
            for (k, ck) in c_eta.iter().enumerate() {
                let w = bt[(t, k)] * bv[(s, k)];
                if w != 0.0 {
                    add_scaled(block.as_mut(), w, ck.as_ref());
                }
            }
        }
    }
    Ok(cross)
}

/// Prior variance of each test point.
fn prior_diagonal<B: GlobalBasis + ?Sized>(
    draw: &ParamState,
    basis: &B,
    test: &TestSet,
    include_noise: bool,
) -> Result<Vec<f64>> {
    let bt = basis_matrix(basis, test.z())?;
    let mut out = Vec::with_capacity(test.len());
    for t in 0..test.s() {
        let eta: f64 = draw
            .eta_kernels
            .iter()
            .enumerate()
            .map(|(k, kern)| bt[(t, k)] * bt[(t, k)] * kern.variance)
            .sum();
        for a in 0..test.n() {
            let beta: f64 = draw
                .beta_kernels
                .iter()
                .enumerate()
                .map(|(j, kern)| test.x()[(a, j)].powi(2) * kern.variance)
                .sum();
            out.push(beta + eta + if include_noise { draw.nugget } else { 0.0 });
        }
    }
    Ok(out)
}

fn check_draw<B: GlobalBasis + ?Sized>(draw: &ParamState, data: &Dataset, basis: &B) -> Result<()> {
    if draw.q() != data.q() || draw.k() != basis.len() {
        return Err(FgpError::invalid_input(format!(
            "draw has q = {}, K = {} but data and basis have q = {}, K = {}",
            draw.q(),
            draw.k(),
            data.q(),
            basis.len()
        )));
    }
    draw.validate()
}

/// Conditional mean and variance of the test responses given the training
/// response under one parameter draw. `include_noise` adds the nugget to the
/// test variances.
pub fn predictive_moments<B: GlobalBasis + ?Sized>(
    draw: &ParamState,
    data: &Dataset,
    basis: &B,
    test: &TestSet,
    include_noise: bool,
) -> Result<(Vec<f64>, Vec<f64>)> {
    check_draw(draw, data, basis)?;
    test.check_against(data)?;
    let chol = factor_sigma_y(data, basis, draw)?;
    moments_with_factor(draw, data, basis, test, &chol, include_noise)
}

fn moments_with_factor<B: GlobalBasis + ?Sized>(
    draw: &ParamState,
    data: &Dataset,
    basis: &B,
    test: &TestSet,
    chol: &Cholesky,
    include_noise: bool,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let alpha = chol.solve_vec(data.y());
    let cross = cross_covariance(draw, data, basis, test)?;
    let mean = mat_vec(&cross, &alpha);
    let mut w = cross.transpose().to_owned();
    chol.solve_lower_in_place(&mut w);
    let prior = prior_diagonal(draw, basis, test, include_noise)?;
    let var = prior
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let col = w.col_as_slice(i);
            (p - col.iter().map(|v| v * v).sum::<f64>()).max(0.0)
        })
        .collect();
    Ok((mean, var))
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PredictOptions {
    pub seed: u64,
    /// Stratified Gaussian deviates per draw per test point; `None` uses
    /// `max(1, ceil(4000 / n_draws))`.
    pub deviates_per_draw: Option<usize>,
}

/// Type-7 sample quantile of sorted data.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Monte Carlo mixture of the per-draw predictive Gaussians.
pub fn posterior_predictive<B: GlobalBasis + ?Sized>(
    draws: &[ParamState],
    data: &Dataset,
    basis: &B,
    test: &TestSet,
    options: &PredictOptions,
) -> Result<PredictionResult> {
    if draws.is_empty() {
        return Err(FgpError::invalid_input(
            "posterior predictive needs at least one draw",
        ));
    }
    test.check_against(data)?;
    let per_draw: Vec<(Vec<f64>, Vec<f64>)> = draws
        .iter()
        .map(|d| predictive_moments(d, data, basis, test, true))
        .collect::<Result<_>>()?;
    Ok(mix(&per_draw, options))
}

fn mix(per_draw: &[(Vec<f64>, Vec<f64>)], options: &PredictOptions) -> PredictionResult {
    let nd = per_draw.len();
    let m = options
        .deviates_per_draw
        .unwrap_or_else(|| 4000usize.div_ceil(nd))
        .max(1);
    let points = per_draw[0].0.len();
    let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
    let std_normal = Normal::standard();
    let mut samples = vec![Vec::with_capacity(nd * m); points];
    for (mean, var) in per_draw {
        for i in 0..points {
            let sd = var[i].sqrt();
            // One deviate from each of m equiprobable strata.
            for r in 0..m {
                let u: f64 = Open01.sample(&mut rng);
                let e = std_normal.inverse_cdf((r as f64 + u) / m as f64);
                samples[i].push(mean[i] + sd * e);
            }
        }
    }
    let mut out = PredictionResult {
        mean: Vec::with_capacity(points),
        sd: Vec::with_capacity(points),
        lower95: Vec::with_capacity(points),
        upper95: Vec::with_capacity(points),
    };
    for (i, s) in samples.iter_mut().enumerate() {
        let mean = per_draw.iter().map(|(m, _)| m[i]).sum::<f64>() / nd as f64;
        let second = per_draw
            .iter()
            .map(|(m, v)| v[i] + m[i] * m[i])
            .sum::<f64>()
            / nd as f64;
        s.sort_by(f64::total_cmp);
        let lo = quantile_sorted(s, 0.025).min(mean);
        let hi = quantile_sorted(s, 0.975).max(mean);
        out.mean.push(mean);
        out.sd.push((second - mean * mean).max(0.0).sqrt());
        out.lower95.push(lo);
        out.upper95.push(hi);
    }
    out
}

/// Posterior means and standard deviations of every latent surface on a grid
/// under one draw.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LatentSurfaces {
    /// `q` rows of grid values.
    pub beta_mean: Vec<Vec<f64>>,
    pub beta_sd: Vec<Vec<f64>>,
    /// `K` rows of grid values.
    pub eta_mean: Vec<Vec<f64>>,
    pub eta_sd: Vec<Vec<f64>>,
}

pub fn latent_surfaces<B: GlobalBasis + ?Sized>(
    draw: &ParamState,
    data: &Dataset,
    basis: &B,
    grid: &LocationSet,
) -> Result<LatentSurfaces> {
    check_draw(draw, data, basis)?;
    let chol = factor_sigma_y(data, basis, draw)?;
    let alpha = chol.solve_vec(data.y());
    let bv = basis_matrix(basis, data.z())?;
    let (n, g, s_count) = (data.n(), grid.len(), data.s());

    // Covariance of one latent surface on the grid with Y is a per-realization
    // weight times the grid/location kernel, scaled by the predictor at the
    // training location for functional coefficients.
    let condition = |c: &Mat<f64>, weight: &dyn Fn(usize, usize) -> f64, variance: f64| {
        let mut cross_t = Mat::<f64>::zeros(s_count * n, g);
        for s in 0..s_count {
            for i in 0..n {
                let w = weight(s, i);
                if w == 0.0 {
                    continue;
                }
                for a in 0..g {
                    cross_t[(s * n + i, a)] = w * c[(a, i)];
                }
            }
        }
        let mean: Vec<f64> = (0..g)
            .map(|a| crate::linalg::dot(cross_t.col_as_slice(a), &alpha))
            .collect();
        chol.solve_lower_in_place(&mut cross_t);
        let sd = (0..g)
            .map(|a| {
                let q: f64 = cross_t.col_as_slice(a).iter().map(|v| v * v).sum();
                (variance - q).max(0.0).sqrt()
            })
            .collect();
        (mean, sd)
    };

    let mut out = LatentSurfaces {
        beta_mean: Vec::new(),
        beta_sd: Vec::new(),
        eta_mean: Vec::new(),
        eta_sd: Vec::new(),
    };
    for (j, kern) in draw.beta_kernels.iter().enumerate() {
        let c = cross_cov_matrix(grid, data.locations(), kern);
        let (m, s) = condition(&c, &|_, i| data.x()[(i, j)], kern.variance);
        out.beta_mean.push(m);
        out.beta_sd.push(s);
    }
    for (k, kern) in draw.eta_kernels.iter().enumerate() {
        let c = cross_cov_matrix(grid, data.locations(), kern);
        let (m, s) = condition(&c, &|s, _| bv[(s, k)], kern.variance);
        out.eta_mean.push(m);
        out.eta_sd.push(s);
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub rmse: f64,
    pub coverage95: f64,
    pub avg_length95: f64,
    /// Sample standard deviation of the truth.
    pub truth_sd: f64,
}

pub fn evaluate_metrics(pred: &PredictionResult, truth: &[f64]) -> Result<Metrics> {
    if truth.len() != pred.len() || truth.is_empty() {
        return Err(FgpError::invalid_input(format!(
            "{} predictions for {} truth values",
            pred.len(),
            truth.len()
        )));
    }
    let n = truth.len() as f64;
    let mse = pred
        .mean
        .iter()
        .zip(truth)
        .map(|(m, t)| (m - t).powi(2))
        .sum::<f64>()
        / n;
    let covered = truth
        .iter()
        .enumerate()
        .filter(|&(i, t)| pred.lower95[i] <= *t && *t <= pred.upper95[i])
        .count();
    let length = pred
        .upper95
        .iter()
        .zip(&pred.lower95)
        .map(|(u, l)| u - l)
        .sum::<f64>()
        / n;
    Ok(Metrics {
        rmse: mse.sqrt(),
        coverage95: covered as f64 / n,
        avg_length95: length,
        truth_sd: crate::model::sample_variance(truth).sqrt(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::eval_basis_vector;
    use crate::kernels::KernelParams;
    use crate::model::{assemble_sigma_y, prior_cov_pair, Site};
    use crate::testutil::{random_instance, Instance};
    use faer::linalg::solvers::DenseSolveCore;
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn random_test<R: Rng>(rng: &mut R, inst: &Instance, st: usize, nt: usize) -> TestSet {
        let pts = (0..nt)
            .map(|_| [rng.random_range(0.0..10.0), rng.random_range(0.0..10.0)])
            .collect();
        let q = inst.data.q();
        let x = Mat::from_fn(nt, q, |_, j| {
            if j == 0 {
                1.0
            } else {
                rng.random_range(-2.0..2.0)
            }
        });
        let z = Mat::from_fn(st, 2, |_, _| rng.random_range(0.0..1.0));
        TestSet::new(LocationSet::new(pts).unwrap(), x, z, None).unwrap()
    }

    /// Conditioning through the explicit joint covariance of (Y, Y*).
    fn joint_oracle(inst: &Instance, test: &TestSet) -> (Vec<f64>, Vec<f64>) {
        let d = &inst.data;
        let (n, s) = (d.n(), d.s());
        let xs: Vec<Vec<f64>> = (0..n).map(|i| d.x_row(i)).collect();
        let zs: Vec<Vec<f64>> = (0..s).map(|r| d.z_row(r)).collect();
        let xt: Vec<Vec<f64>> = (0..test.n())
            .map(|a| (0..d.q()).map(|j| test.x()[(a, j)]).collect())
            .collect();
        let zt: Vec<Vec<f64>> = (0..test.s())
            .map(|t| (0..d.p()).map(|k| test.z()[(t, k)]).collect())
            .collect();
        let total = s * n + test.len();
        let site = |r: usize| {
            if r < s * n {
                Site {
                    realization: r / n,
                    z: &zs[r / n],
                    location: d.locations().get(r % n),
                    x: &xs[r % n],
                }
            } else {
                let r = r - s * n;
                Site {
                    realization: s + r / test.n(),
                    z: &zt[r / test.n()],
                    location: test.locations().get(r % test.n()),
                    x: &xt[r % test.n()],
                }
            }
        };
        let joint = Mat::from_fn(total, total, |a, b| {
            prior_cov_pair(&inst.basis, &site(a), &site(b), &inst.state).unwrap()
        });
        let sn = s * n;
        let syy = joint.as_ref().submatrix(0, 0, sn, sn).to_owned();
        let inv = syy.partial_piv_lu().inverse();
        let mut mean = Vec::new();
        let mut var = Vec::new();
        for a in sn..total {
            let k: Vec<f64> = (0..sn).map(|i| joint[(a, i)]).collect();
            let ki = mat_vec(&inv, &k);
            mean.push(crate::linalg::dot(&ki, d.y()));
            var.push(joint[(a, a)] - crate::linalg::dot(&ki, &k));
        }
        (mean, var)
    }

    #[test]
    fn moments_match_joint_conditioning() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..5 {
            let s = rng.random_range(1..=4);
            let n = rng.random_range(3..=12);
            let inst = random_instance(&mut rng, s, n, 2, 4);
            let nt = rng.random_range(1..=5);
            let test = random_test(&mut rng, &inst, 1, nt);
            let (m, v) =
                predictive_moments(&inst.state, &inst.data, &inst.basis, &test, true).unwrap();
            let (mo, vo) = joint_oracle(&inst, &test);
            for i in 0..m.len() {
                assert!((m[i] - mo[i]).abs() < 1e-8, "{} {}", m[i], mo[i]);
                assert!((v[i] - vo[i]).abs() < 1e-8, "{} {}", v[i], vo[i]);
            }
        }
    }

    #[test]
    fn noiseless_interpolation_at_training_point() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut inst = random_instance(&mut rng, 1, 6, 1, 4);
        inst.state.nugget = 1e-10;
        let sy = assemble_sigma_y(&inst.data, &inst.basis, &inst.state).unwrap();
        // Draw Y from the model so the interpolation target is consistent.
        let chol = Cholesky::with_escalation(sy.as_ref(), 1e-12).unwrap();
        let e: Vec<f64> = (0..6).map(|_| StandardNormal.sample(&mut rng)).collect();
        let l = chol.factor();
        let y: Vec<f64> = (0..6)
            .map(|i| (0..=i).map(|j| l[(i, j)] * e[j]).sum())
            .collect();
        let data = inst.data.with_response(y.clone()).unwrap();
        let test = TestSet::new(
            LocationSet::new(vec![data.locations().get(2)]).unwrap(),
            Mat::from_fn(1, 1, |_, _| data.x()[(2, 0)]),
            data.z().clone(),
            None,
        )
        .unwrap();
        let (m, v) = predictive_moments(&inst.state, &data, &inst.basis, &test, true).unwrap();
        assert!((m[0] - y[2]).abs() < 1e-4, "{} vs {}", m[0], y[2]);
        assert!(v[0].sqrt() < 1e-3);
    }

    #[test]
    fn reverts_to_prior_far_away() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let inst = random_instance(&mut rng, 2, 5, 1, 4);
        let test = TestSet::new(
            LocationSet::new(vec![[1e6, 1e6]]).unwrap(),
            Mat::from_fn(1, 1, |_, _| 1.0),
            Mat::from_fn(1, 2, |_, _| 0.5),
            None,
        )
        .unwrap();
        let (m, v) = predictive_moments(&inst.state, &inst.data, &inst.basis, &test, true).unwrap();
        let b = eval_basis_vector(&inst.basis, &[0.5, 0.5]).unwrap();
        let prior = inst.state.beta_kernels[0].variance
            + (0..b.len())
                .map(|k| b[k] * b[k] * inst.state.eta_kernels[k].variance)
                .sum::<f64>()
            + inst.state.nugget;
        assert!(m[0].abs() < 1e-12);
        assert!((v[0] - prior).abs() < 1e-12);
    }

    #[test]
    fn single_draw_intervals_are_gaussian() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let inst = random_instance(&mut rng, 2, 6, 2, 4);
        let test = random_test(&mut rng, &inst, 2, 3);
        let (m, v) = predictive_moments(&inst.state, &inst.data, &inst.basis, &test, true).unwrap();
        let opts = PredictOptions {
            seed: 3,
            deviates_per_draw: None,
        };
        let one = posterior_predictive(
            std::slice::from_ref(&inst.state),
            &inst.data,
            &inst.basis,
            &test,
            &opts,
        )
        .unwrap();
        for (i, vi) in v.iter().enumerate().take(m.len()) {
            let half = 1.96 * vi.sqrt();
            assert!(((one.upper95[i] - m[i]) - half).abs() < 0.02 * half);
            assert!(((m[i] - one.lower95[i]) - half).abs() < 0.02 * half);
            assert!((one.sd[i] - v[i].sqrt()).abs() < 1e-12);
            assert!(one.lower95[i] < one.mean[i] && one.mean[i] < one.upper95[i]);
        }
        let two = posterior_predictive(
            &[inst.state.clone(), inst.state.clone()],
            &inst.data,
            &inst.basis,
            &test,
            &opts,
        )
        .unwrap();
        assert_eq!(one.mean, two.mean);
        assert_eq!(one.sd, two.sd);
        for (i, vi) in v.iter().enumerate().take(m.len()) {
            let half = 1.96 * vi.sqrt();
            assert!((two.upper95[i] - one.upper95[i]).abs() < 0.02 * half);
        }
        assert!(posterior_predictive(&[], &inst.data, &inst.basis, &test, &opts).is_err());
    }

    #[test]
    fn intervals_widen_with_nugget() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let inst = random_instance(&mut rng, 2, 6, 2, 4);
        let test = random_test(&mut rng, &inst, 2, 4);
        let opts = PredictOptions::default();
        let base = posterior_predictive(
            std::slice::from_ref(&inst.state),
            &inst.data,
            &inst.basis,
            &test,
            &opts,
        )
        .unwrap();
        let mut inflated = inst.state.clone();
        inflated.nugget *= 10.0;
        let wide =
            posterior_predictive(&[inflated], &inst.data, &inst.basis, &test, &opts).unwrap();
        for i in 0..base.len() {
            assert!(wide.upper95[i] - wide.lower95[i] > base.upper95[i] - base.lower95[i]);
        }
    }

    #[test]
    fn latent_reconstruction_matches_noise_free_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let inst = random_instance(&mut rng, 3, 6, 2, 4);
        let d = &inst.data;
        let lat = latent_surfaces(&inst.state, d, &inst.basis, d.locations()).unwrap();
        let test = TestSet::new(d.locations().clone(), d.x().clone(), d.z().clone(), None).unwrap();
        let (m, _) = predictive_moments(&inst.state, d, &inst.basis, &test, false).unwrap();
        for s in 0..d.s() {
            let b = eval_basis_vector(&inst.basis, &d.z_row(s)).unwrap();
            for i in 0..d.n() {
                let recon: f64 = (0..d.q())
                    .map(|j| d.x()[(i, j)] * lat.beta_mean[j][i])
                    .sum::<f64>()
                    + (0..b.len()).map(|k| b[k] * lat.eta_mean[k][i]).sum::<f64>();
                assert!((recon - m[s * d.n() + i]).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn latent_kriging_reduction_and_prior_limit() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let pts: Vec<_> = (0..6)
            .map(|_| [rng.random_range(0.0..10.0), rng.random_range(0.0..10.0)])
            .collect();
        let locs = LocationSet::new(pts).unwrap();
        let y: Vec<f64> = (0..12).map(|_| rng.random_range(-1.0..1.0)).collect();
        let data = Dataset::new(
            locs.clone(),
            Mat::from_fn(6, 1, |_, _| 1.0),
            Mat::zeros(2, 0),
            y.clone(),
        )
        .unwrap();
        let lin = crate::basis::LinearBasis { dim: 0 };
        let state = ParamState {
            beta_kernels: vec![KernelParams::exponential(1.3, 0.4).unwrap()],
            eta_kernels: vec![],
            nugget: 0.2,
        };
        let grid = LocationSet::new(vec![[2.0, 3.0], [7.0, 1.0]]).unwrap();
        let lat = latent_surfaces(&state, &data, &lin, &grid).unwrap();
        // Pooled kriging: J_2 ⊗ C + τ² I.
        let c = crate::kernels::cov_matrix(&locs, &state.beta_kernels[0]);
        let sy = Mat::from_fn(12, 12, |a, b| {
            c[(a % 6, b % 6)] + if a == b { 0.2 } else { 0.0 }
        });
        let inv = sy.partial_piv_lu().inverse();
        let cg = cross_cov_matrix(&grid, &locs, &state.beta_kernels[0]);
        for a in 0..2 {
            let k: Vec<f64> = (0..12).map(|r| cg[(a, r % 6)]).collect();
            let m = crate::linalg::dot(&mat_vec(&inv, &k), &y);
            assert!((lat.beta_mean[0][a] - m).abs() < 1e-10);
        }
        let far = LocationSet::new(vec![[1e7, 1e7]]).unwrap();
        let lat = latent_surfaces(&state, &data, &lin, &far).unwrap();
        assert!(lat.beta_mean[0][0].abs() < 1e-12);
        assert!((lat.beta_sd[0][0] - 1.3f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn metrics_hand_case() {
        let pred = PredictionResult {
            mean: vec![1.0, 2.0, 3.0, 4.0],
            sd: vec![1.0; 4],
            lower95: vec![0.0, 1.0, 3.5, 3.0],
            upper95: vec![2.0, 3.0, 4.0, 6.0],
        };
        let truth = [1.5, 2.0, 3.0, 5.0];
        let m = evaluate_metrics(&pred, &truth).unwrap();
        assert!((m.rmse - (1.25f64 / 4.0).sqrt()).abs() < 1e-15);
        assert_eq!(m.coverage95, 0.75);
        assert!((m.avg_length95 - 1.875).abs() < 1e-15);
        let mean = 11.5 / 4.0;
        let var = truth.iter().map(|t| (t - mean).powi(2)).sum::<f64>() / 3.0;
        assert!((m.truth_sd - var.sqrt()).abs() < 1e-15);
        let exact = evaluate_metrics(&pred, &pred.mean).unwrap();
        assert_eq!(exact.rmse, 0.0);
        assert!(evaluate_metrics(&pred, &truth[..3]).is_err());
    }

    #[test]
    fn type7_quantiles() {
        let v = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(quantile_sorted(&v, 0.0), 1.0);
        assert_eq!(quantile_sorted(&v, 1.0), 4.0);
        assert!((quantile_sorted(&v, 0.5) - 2.5).abs() < 1e-15);
        assert!((quantile_sorted(&v, 0.1) - 1.3).abs() < 1e-12);
    }
}
