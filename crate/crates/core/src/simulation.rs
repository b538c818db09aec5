//! Synthetic data generators for the well-specified scenarios (1–4) and the
//! misspecified joint-space scenarios (5–8).

use faer::Mat;
use rand::seq::index::sample as sample_indices;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::basis::{eval_basis_vector, GlobalBasis, SplineSpec, TensorBasis};
use crate::error::{FgpError, Result};
use crate::kernels::{cov_matrix, distance, KernelParams, LocationSet, Point, DEFAULT_JITTER};
use crate::linalg::Cholesky;
use crate::model::Dataset;
use crate::prediction::TestSet;

/// Where held-out realizations are observed.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TestSites {
    /// A random subset of the training locations.
    Shared,
    /// Fresh uniform locations.
    Disjoint,
}

/// Prior means of the coefficient surfaces.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MeanFunctions {
    Zero,
    /// `u1 - u2`, `u1 + u2 - 100`, `2 u1 - u2 - 50`; needs `q = 3`.
    Linear,
}

impl MeanFunctions {
    pub fn eval(self, j: usize, u: Point) -> f64 {
        match self {
            MeanFunctions::Zero => 0.0,
            MeanFunctions::Linear => match j {
                0 => u[0] - u[1],
                1 => u[0] + u[1] - 100.0,
                2 => 2.0 * u[0] - u[1] - 50.0,
                _ => 0.0,
            },
        }
    }
}

/// Joint-space GP replacing the basis-expanded global effect.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct JointGp {
    pub zeta2: f64,
    pub upsilon: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub id: u8,
    pub seed: u64,
    /// Side length of the square domain `[0, L]^2`.
    pub domain: f64,
    pub n_train: usize,
    pub s_train: usize,
    pub n_test: usize,
    pub s_test: usize,
    /// Functional predictors including the intercept.
    pub q: usize,
    /// Basis functions per global dimension (two dimensions).
    pub m_per_dim: usize,
    pub sigma2_beta: (f64, f64),
    pub decay_beta: (f64, f64),
    pub sigma2_eta: (f64, f64),
    pub decay_eta: (f64, f64),
    pub nugget: f64,
    pub means: MeanFunctions,
    /// Present for the misspecified scenarios.
    pub joint: Option<JointGp>,
    /// Kernel of the non-intercept functional predictor fields.
    pub predictor_field: KernelParams,
    pub test_sites: TestSites,
}

impl ScenarioSpec {
    /// The published scenario `id` (1–8).
    pub fn published(id: u8, seed: u64) -> Result<Self> {
        if !(1..=8).contains(&id) {
            return Err(FgpError::invalid_spec(format!(
                "scenario id must be 1-8, got {id}"
            )));
        }
        let mut spec = ScenarioSpec {
            id,
            seed,
            domain: 100.0,
            n_train: 100,
            s_train: 10,
            n_test: 25,
            s_test: 10,
            q: 3,
            m_per_dim: 5,
            sigma2_beta: (0.5, 1.0),
            decay_beta: (0.1, 0.2),
            sigma2_eta: (5.0, 10.0),
            decay_eta: (0.1, 0.5),
            nugget: 0.2,
            means: MeanFunctions::Zero,
            joint: None,
            predictor_field: KernelParams::exponential(36.0, 0.05)?,
            test_sites: TestSites::Shared,
        };
        match id {
            2 => spec.nugget = 2.0,
            3 | 7 => spec.decay_beta = (0.5, 1.0),
            4 | 8 => spec.means = MeanFunctions::Linear,
            6 => spec.sigma2_beta = (3.0, 5.0),
            _ => {}
        }
        if id >= 5 {
            spec.joint = Some(JointGp {
                zeta2: 5.0,
                upsilon: 0.1,
            });
        }
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        let range_ok = |(a, b): (f64, f64)| a > 0.0 && a <= b && b.is_finite();
        if !(range_ok(self.sigma2_beta)
            && range_ok(self.decay_beta)
            && range_ok(self.sigma2_eta)
            && range_ok(self.decay_eta))
        {
            return Err(FgpError::invalid_spec(
                "parameter ranges need 0 < low <= high",
            ));
        }
        if !(self.nugget > 0.0 && self.domain > 0.0) {
            return Err(FgpError::invalid_spec("nugget and domain must be positive"));
        }
        if self.n_train < 2
            || self.s_train == 0
            || self.n_test == 0
            || self.s_test == 0
            || self.q == 0
        {
            return Err(FgpError::invalid_spec(
                "scenario sizes must be positive (n_train >= 2)",
            ));
        }
        if self.test_sites == TestSites::Shared && self.n_test > self.n_train {
            return Err(FgpError::invalid_spec(
                "shared test sites need n_test <= n_train",
            ));
        }
        if self.means == MeanFunctions::Linear && self.q != 3 {
            return Err(FgpError::invalid_spec(
                "linear mean functions are defined for q = 3",
            ));
        }
        if let Some(j) = self.joint {
            if !(j.zeta2 >= 0.0 && j.upsilon > 0.0) {
                return Err(FgpError::invalid_spec(
                    "joint GP needs zeta2 >= 0 and upsilon > 0",
                ));
            }
        }
        self.predictor_field.validate()?;
        self.basis_spec().validate()
    }

    pub fn basis_spec(&self) -> SplineSpec {
        SplineSpec::cubic_unit(self.m_per_dim, 2)
    }
}

/// Everything drawn while generating a scenario.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeneratorTruth {
    pub spec: ScenarioSpec,
    /// Every generated location; train and test indices refer to it.
    pub sites: Vec<Point>,
    pub train_sites: Vec<usize>,
    pub test_sites: Vec<usize>,
    /// `x[i][j]` at site `i`.
    pub x: Vec<Vec<f64>>,
    pub z_train: Vec<Vec<f64>>,
    pub z_test: Vec<Vec<f64>>,
    pub beta_params: Vec<KernelParams>,
    /// `beta_surfaces[j][i]` at site `i`.
    pub beta_surfaces: Vec<Vec<f64>>,
    pub eta_params: Vec<KernelParams>,
    pub eta_surfaces: Vec<Vec<f64>>,
    /// Joint-space effect, train realizations then test realizations,
    /// `g[r][i]` at site `i`.
    pub g: Vec<Vec<f64>>,
    pub noise_train: Vec<f64>,
    pub noise_test: Vec<f64>,
}

impl GeneratorTruth {
    /// Noise-free response of realization `z` at site `i`; `r` indexes the
    /// joint-space effect when present.
    fn signal(&self, basis: &TensorBasis, z: &[f64], r: usize, i: usize) -> Result<f64> {
        let mut v: f64 = (0..self.spec.q)
            .map(|j| self.x[i][j] * self.beta_surfaces[j][i])
            .sum();
        if self.spec.joint.is_some() {
            v += self.g[r][i];
        } else {
            let b = eval_basis_vector(basis, z)?;
            v += b
                .iter()
                .zip(&self.eta_surfaces)
                .map(|(bk, eta)| bk * eta[i])
                .sum::<f64>();
        }
        Ok(v)
    }

    /// Recomputes the training and test responses from the stored draws.
    pub fn replay(&self) -> Result<(Vec<f64>, Vec<f64>)> {
        let basis = TensorBasis::new(self.spec.basis_spec())?;
        let mut train = Vec::with_capacity(self.z_train.len() * self.train_sites.len());
        for (s, z) in self.z_train.iter().enumerate() {
            for (a, &i) in self.train_sites.iter().enumerate() {
                let e = self.noise_train[s * self.train_sites.len() + a];
                train.push(self.signal(&basis, z, s, i)? + e);
            }
        }
        let mut test = Vec::with_capacity(self.z_test.len() * self.test_sites.len());
        let offset = self.z_train.len();
        for (t, z) in self.z_test.iter().enumerate() {
            for (a, &i) in self.test_sites.iter().enumerate() {
                let e = self.noise_test[t * self.test_sites.len() + a];
                test.push(self.signal(&basis, z, offset + t, i)? + e);
            }
        }
        Ok((train, test))
    }
}

/// A generated training set, held-out set with truth, and the draws behind them.
#[derive(Clone, Debug)]
pub struct Scenario {
    pub train: Dataset,
    pub test: TestSet,
    pub basis: TensorBasis,
    pub truth: GeneratorTruth,
}

/// Draws one GP realization `μ(points) + L e` with `L` the Cholesky factor
/// of the jittered kernel matrix.
pub fn sample_gp_surface<R: Rng + ?Sized>(
    points: &LocationSet,
    mean_fn: &dyn Fn(Point) -> f64,
    params: &KernelParams,
    rng: &mut R,
) -> Result<Vec<f64>> {
    let c = cov_matrix(points, params);
    let chol = Cholesky::jittered(c.as_ref(), DEFAULT_JITTER)?;
    Ok(correlated_draw(
        &chol,
        points.points().iter().map(|&u| mean_fn(u)).collect(),
        rng,
    ))
}

fn correlated_draw<R: Rng + ?Sized>(chol: &Cholesky, mut mean: Vec<f64>, rng: &mut R) -> Vec<f64> {
    let n = chol.dim();
    let e: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
    let l = chol.factor();
    for j in 0..n {
        let ej = e[j];
        for i in j..n {
            mean[i] += l[(i, j)] * ej;
        }
    }
    mean
}

fn uniform_in<R: Rng + ?Sized>(rng: &mut R, (a, b): (f64, f64)) -> f64 {
    if a == b {
        a
    } else {
        rng.random_range(a..b)
    }
}

fn random_points<R: Rng + ?Sized>(rng: &mut R, count: usize, side: f64) -> Vec<Point> {
    (0..count)
        .map(|_| [rng.random_range(0.0..side), rng.random_range(0.0..side)])
        .collect()
}

/// Generates the published well-specified scenarios (ids 1–4).
pub fn generate_scenario(spec: &ScenarioSpec) -> Result<Scenario> {
    if spec.joint.is_some() {
        return Err(FgpError::invalid_spec(format!(
            "scenario {} has a joint-space effect; use generate_misspecified",
            spec.id
        )));
    }
    generate(spec)
}

/// Generates the misspecified scenarios (ids 5–8).
pub fn generate_misspecified(spec: &ScenarioSpec) -> Result<Scenario> {
    if spec.joint.is_none() {
        return Err(FgpError::invalid_spec(format!(
            "scenario {} has no joint-space effect; use generate_scenario",
            spec.id
        )));
    }
    generate(spec)
}

/// Generates any scenario.
pub fn generate(spec: &ScenarioSpec) -> Result<Scenario> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let basis = TensorBasis::new(spec.basis_spec())?;

    let mut sites = random_points(&mut rng, spec.n_train, spec.domain);
    let train_sites: Vec<usize> = (0..spec.n_train).collect();
    let test_sites: Vec<usize> = match spec.test_sites {
        TestSites::Shared => {
            let mut idx = sample_indices(&mut rng, spec.n_train, spec.n_test).into_vec();
            idx.sort_unstable();
            idx
        }
        TestSites::Disjoint => {
            sites.extend(random_points(&mut rng, spec.n_test, spec.domain));
            (spec.n_train..spec.n_train + spec.n_test).collect()
        }
    };
    let all = LocationSet::new(sites.clone())?;
    let n_sites = sites.len();

    let mut x = vec![vec![1.0; spec.q]; n_sites];
    for j in 1..spec.q {
        let field = sample_gp_surface(&all, &|_| 0.0, &spec.predictor_field, &mut rng)?;
        for (row, v) in x.iter_mut().zip(field) {
            row[j] = v;
        }
    }
    let mut draw_z = |count: usize| -> Vec<Vec<f64>> {
        (0..count)
            .map(|_| vec![rng.random_range(0.0..1.0), rng.random_range(0.0..1.0)])
            .collect()
    };
    let z_train = draw_z(spec.s_train);
    let z_test = draw_z(spec.s_test);

    let mut beta_params = Vec::with_capacity(spec.q);
    let mut beta_surfaces = Vec::with_capacity(spec.q);
    for j in 0..spec.q {
        let p = KernelParams::exponential(
            uniform_in(&mut rng, spec.sigma2_beta),
            uniform_in(&mut rng, spec.decay_beta),
        )?;
        let means = spec.means;
        beta_surfaces.push(sample_gp_surface(
            &all,
            &|u| means.eval(j, u),
            &p,
            &mut rng,
        )?);
        beta_params.push(p);
    }

    let mut eta_params = Vec::new();
    let mut eta_surfaces = Vec::new();
    let mut g = Vec::new();
    match spec.joint {
        None => {
            for _ in 0..basis.len() {
                let p = KernelParams::exponential(
                    uniform_in(&mut rng, spec.sigma2_eta),
                    uniform_in(&mut rng, spec.decay_eta),
                )?;
                eta_surfaces.push(sample_gp_surface(&all, &|_| 0.0, &p, &mut rng)?);
                eta_params.push(p);
            }
        }
        Some(joint) => {
            let zs: Vec<&Vec<f64>> = z_train.iter().chain(&z_test).collect();
            g = sample_joint_effect(&sites, &zs, joint, &mut rng)?;
        }
    }

    let noise = |count: usize, rng: &mut ChaCha8Rng| -> Vec<f64> {
        let sd = spec.nugget.sqrt();
        (0..count)
            .map(|_| sd * rng.sample::<f64, _>(StandardNormal))
            .collect()
    };
    let noise_train = noise(spec.s_train * spec.n_train, &mut rng);
    let noise_test = noise(spec.s_test * spec.n_test, &mut rng);

    let truth = GeneratorTruth {
        spec: spec.clone(),
        sites: sites.clone(),
        train_sites,
        test_sites,
        x,
        z_train,
        z_test,
        beta_params,
        beta_surfaces,
        eta_params,
        eta_surfaces,
        g,
        noise_train,
        noise_test,
    };
    let (y_train, y_test) = truth.replay()?;
    let (train, test) = assemble_sets(&truth, y_train, y_test)?;
    Ok(Scenario {
        train,
        test,
        basis,
        truth,
    })
}

fn assemble_sets(
    truth: &GeneratorTruth,
    y_train: Vec<f64>,
    y_test: Vec<f64>,
) -> Result<(Dataset, TestSet)> {
    let q = truth.spec.q;
    let rows = |idx: &[usize]| {
        (
            LocationSet::new(idx.iter().map(|&i| truth.sites[i]).collect()),
            Mat::from_fn(idx.len(), q, |a, j| truth.x[idx[a]][j]),
        )
    };
    let zmat = |z: &[Vec<f64>]| Mat::from_fn(z.len(), 2, |s, d| z[s][d]);
    let (train_locs, train_x) = rows(&truth.train_sites);
    let (test_locs, test_x) = rows(&truth.test_sites);
    let train = Dataset::new(train_locs?, train_x, zmat(&truth.z_train), y_train)?;
    let test = TestSet::new(test_locs?, test_x, zmat(&truth.z_test), Some(y_test))?;
    Ok((train, test))
}

/// Draws `g(u_i, z_r)` jointly over every site and realization.
fn sample_joint_effect<R: Rng + ?Sized>(
    sites: &[Point],
    zs: &[&Vec<f64>],
    joint: JointGp,
    rng: &mut R,
) -> Result<Vec<Vec<f64>>> {
    let n = sites.len();
    let total = n * zs.len();
    if joint.zeta2 == 0.0 {
        return Ok(vec![vec![0.0; n]; zs.len()]);
    }
    let cov = Mat::from_fn(total, total, |a, b| {
        joint_cov(sites[a % n], zs[a / n], sites[b % n], zs[b / n], joint)
    });
    let chol = Cholesky::jittered(cov.as_ref(), DEFAULT_JITTER)?;
    let flat = correlated_draw(&chol, vec![0.0; total], rng);
    Ok(flat.chunks(n).map(<[f64]>::to_vec).collect())
}

/// `ζ² exp(-υ sqrt(|u - u'|² + |z - z'|²))`.
pub fn joint_cov(u: Point, z: &[f64], v: Point, w: &[f64], joint: JointGp) -> f64 {
    let du = distance(u, v);
    let dz2: f64 = z.iter().zip(w).map(|(a, b)| (a - b).powi(2)).sum();
    joint.zeta2 * (-joint.upsilon * (du * du + dz2).sqrt()).exp()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::sample_variance;

    fn small(id: u8, seed: u64) -> ScenarioSpec {
        let mut s = ScenarioSpec::published(id, seed).unwrap();
        s.n_train = 30;
        s.s_train = 4;
        s.n_test = 6;
        s.s_test = 3;
        s
    }

    #[test]
    fn paper_parameters() {
        assert_eq!(ScenarioSpec::published(1, 0).unwrap().nugget, 0.2);
        assert_eq!(ScenarioSpec::published(2, 0).unwrap().nugget, 2.0);
        let s5 = ScenarioSpec::published(5, 0).unwrap();
        assert_eq!(
            s5.joint,
            Some(JointGp {
                zeta2: 5.0,
                upsilon: 0.1
            })
        );
        assert_eq!(s5.nugget, 0.2);
        assert_eq!(ScenarioSpec::published(6, 0).unwrap().sigma2_beta, (3.0, 5.0));
        assert_eq!(ScenarioSpec::published(7, 0).unwrap().decay_beta, (0.5, 1.0));
        assert!(ScenarioSpec::published(9, 0).is_err());
        assert!(ScenarioSpec::published(0, 0).is_err());
        for j in 0..3 {
            assert_eq!(MeanFunctions::Linear.eval(j, [50.0, 50.0]), 0.0);
        }
    }

    #[test]
    fn gp_surface_degenerate_and_deterministic() {
        let locs = LocationSet::new(vec![[0.0, 0.0], [1.0, 0.0], [5.0, 5.0]]).unwrap();
        let tiny = KernelParams::exponential(1e-12, 0.3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let v = sample_gp_surface(&locs, &|u| u[0] + 2.0, &tiny, &mut rng).unwrap();
        for (vi, u) in v.iter().zip(locs.points()) {
            assert!((vi - (u[0] + 2.0)).abs() < 1e-4);
        }
        let k = KernelParams::exponential(1.0, 0.3).unwrap();
        let a = sample_gp_surface(&locs, &|_| 0.0, &k, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        let b = sample_gp_surface(&locs, &|_| 0.0, &k, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn gp_surface_moments() {
        let locs = LocationSet::new(vec![[0.0, 0.0], [1.0, 1.0], [3.0, 0.0]]).unwrap();
        let k = KernelParams::exponential(2.0, 0.4).unwrap();
        let c = cov_matrix(&locs, &k);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let draws: Vec<Vec<f64>> = (0..5000)
            .map(|_| sample_gp_surface(&locs, &|_| 0.0, &k, &mut rng).unwrap())
            .collect();
        for a in 0..3 {
            for b in 0..3 {
                let emp = draws.iter().map(|d| d[a] * d[b]).sum::<f64>() / 5000.0;
                assert!(
                    (emp - c[(a, b)]).abs() < 0.05 * c[(a, b)] + 0.02,
                    "{a},{b}: {emp} vs {}",
                    c[(a, b)]
                );
            }
        }
    }

    #[test]
    fn joint_effect_moments_and_degenerate_limit() {
        let sites = [[0.0, 0.0], [2.0, 1.0], [4.0, 4.0]];
        let z = [vec![0.2, 0.3]];
        let zs: Vec<&Vec<f64>> = z.iter().collect();
        let joint = JointGp {
            zeta2: 5.0,
            upsilon: 0.1,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let draws: Vec<Vec<f64>> = (0..5000)
            .map(|_| {
                sample_joint_effect(&sites, &zs, joint, &mut rng)
                    .unwrap()
                    .remove(0)
            })
            .collect();
        for a in 0..3 {
            for b in 0..3 {
                let exact = joint_cov(sites[a], &z[0], sites[b], &z[0], joint);
                let emp = draws.iter().map(|d| d[a] * d[b]).sum::<f64>() / 5000.0;
                assert!(
                    (emp - exact).abs() < 0.05 * exact + 0.05,
                    "{emp} vs {exact}"
                );
            }
        }
        let zero = JointGp {
            zeta2: 0.0,
            upsilon: 0.1,
        };
        assert!(sample_joint_effect(&sites, &zs, zero, &mut rng).unwrap()[0]
            .iter()
            .all(|&v| v == 0.0));
    }

    #[test]
    fn generation_is_deterministic_and_replayable() {
        for id in [1, 5] {
            let spec = small(id, 42);
            let a = generate(&spec).unwrap();
            let b = generate(&spec).unwrap();
            assert_eq!(a.train.y(), b.train.y());
            assert_eq!(a.test.y(), b.test.y());
            assert_eq!(a.truth, b.truth);
            let (yt, ys) = a.truth.replay().unwrap();
            assert_eq!(yt, a.train.y());
            assert_eq!(ys, a.test.y().unwrap());
            let json = serde_json::to_string(&a.truth).unwrap();
            let back: GeneratorTruth = serde_json::from_str(&json).unwrap();
            assert_eq!(back.replay().unwrap(), (yt, ys));
        }
        let other = generate(&small(1, 43)).unwrap();
        assert_ne!(other.train.y(), generate(&small(1, 42)).unwrap().train.y());
    }

    #[test]
    fn test_site_modes() {
        let mut spec = small(1, 7);
        spec.test_sites = TestSites::Disjoint;
        let sc = generate(&spec).unwrap();
        for u in sc.test.locations().points() {
            assert!(!sc.train.locations().points().contains(u));
        }
        spec.test_sites = TestSites::Shared;
        let sc = generate(&spec).unwrap();
        for u in sc.test.locations().points() {
            assert!(sc.train.locations().points().contains(u));
        }
    }

    #[test]
    fn dispatch_by_scenario_kind() {
        assert!(generate_scenario(&small(5, 1)).is_err());
        assert!(generate_misspecified(&small(1, 1)).is_err());
        assert!(generate_misspecified(&small(6, 1)).is_ok());
    }

    #[test]
    fn response_variance_matches_prior_envelope() {
        for id in [1, 2, 3, 5] {
            let sc = generate(&small(id, 11)).unwrap();
            let t = &sc.truth;
            let n = t.sites.len() as f64;
            let beta: f64 = (0..t.spec.q)
                .map(|j| {
                    t.x.iter().map(|r| r[j] * r[j]).sum::<f64>() / n * t.beta_params[j].variance
                })
                .sum();
            let global = match t.spec.joint {
                Some(j) => j.zeta2,
                None => {
                    t.z_train
                        .iter()
                        .map(|z| {
                            let b = eval_basis_vector(&sc.basis, z).unwrap();
                            b.iter()
                                .zip(&t.eta_params)
                                .map(|(bk, p)| bk * bk * p.variance)
                                .sum::<f64>()
                        })
                        .sum::<f64>()
                        / t.z_train.len() as f64
                }
            };
            let analytic = beta + global + t.spec.nugget;
            let empirical = sample_variance(sc.train.y());
            assert!(
                empirical < 3.0 * analytic && empirical > analytic / 3.0,
                "{id}: {empirical} vs {analytic}"
            );
        }
    }
}
