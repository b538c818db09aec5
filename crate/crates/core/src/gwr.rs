//! Fixed-bandwidth geographically weighted regression with Gaussian weights,
//! used as a frequentist baseline.
//!
//! Each observation's regressors are its functional predictors followed by
//! its realization's global predictors. Every local fit uses all `S n`
//! training rows weighted by `exp(-d² / (2 b²))` from the fit location.

use faer::{Mat, Side};
use serde::{Deserialize, Serialize};

use crate::error::{FgpError, Result};
use crate::kernels::{distance, Point};
use crate::model::Dataset;
use crate::prediction::{PredictionResult, TestSet};

/// Fixed bandwidth in distance units, or `"cv"` for leave-one-location-out
/// selection.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Bandwidth {
    Fixed(f64),
    Selected(CvTag),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CvTag {
    Cv,
}

impl Bandwidth {
    pub const CV: Bandwidth = Bandwidth::Selected(CvTag::Cv);
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GwrConfig {
    pub bandwidth: Bandwidth,
    /// Number of log-spaced candidates for cross-validation.
    pub cv_candidates: usize,
    /// Times the bandwidth may double when a local design is singular.
    pub max_expansions: usize,
}

impl Default for GwrConfig {
    fn default() -> Self {
        GwrConfig {
            bandwidth: Bandwidth::CV,
            cv_candidates: 20,
            max_expansions: 5,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GwrFit {
    pub prediction: PredictionResult,
    /// Bandwidth requested by the configuration or chosen by cross-validation.
    pub bandwidth: f64,
    /// `(bandwidth, mean squared leave-one-location-out error)` per candidate.
    pub cv_scores: Vec<(f64, f64)>,
}

struct Design {
    /// One row per observation.
    rows: Vec<Vec<f64>>,
    y: Vec<f64>,
    /// Location index of each row.
    site: Vec<usize>,
    sites: Vec<Point>,
}

fn design(data: &Dataset) -> Design {
    let (n, s_count) = (data.n(), data.s());
    let mut rows = Vec::with_capacity(n * s_count);
    let mut site = Vec::with_capacity(n * s_count);
    for s in 0..s_count {
        let z = data.z_row(s);
        for i in 0..n {
            let mut r = data.x_row(i);
            r.extend_from_slice(&z);
            rows.push(r);
            site.push(i);
        }
    }
    Design {
        rows,
        y: data.y().to_vec(),
        site,
        sites: data.locations().points().to_vec(),
    }
}

/// Local weighted least-squares solution at one centre.
struct LocalFit {
    coef: Vec<f64>,
    /// `(XᵀWX)⁻¹`.
    xtwx_inv: Mat<f64>,
    /// Weighted mean squared residual.
    wmse: f64,
    /// `XᵀW²X`.
    xtw2x: Mat<f64>,
}

impl LocalFit {
    fn predict(&self, row: &[f64]) -> f64 {
        crate::linalg::dot(&self.coef, row)
    }

    /// `‖W X (XᵀWX)⁻¹ x*‖²`.
    fn leverage(&self, row: &[f64]) -> f64 {
        let p = row.len();
        let a: Vec<f64> = (0..p)
            .map(|i| (0..p).map(|j| self.xtwx_inv[(i, j)] * row[j]).sum())
            .collect();
        let mut lev = 0.0;
        for i in 0..p {
            for j in 0..p {
                lev += a[i] * self.xtw2x[(i, j)] * a[j];
            }
        }
        lev.max(0.0)
    }
}

/// Gaussian weights relative to the nearest contributing site so that they
/// cannot all underflow.
fn site_weights(sites: &[Point], centre: Point, bandwidth: f64, skip: Option<usize>) -> Vec<f64> {
    let d2: Vec<f64> = sites.iter().map(|&u| distance(u, centre).powi(2)).collect();
    let min = d2
        .iter()
        .enumerate()
        .filter(|&(i, _)| Some(i) != skip)
        .map(|(_, d)| *d)
        .fold(f64::INFINITY, f64::min);
    d2.iter()
        .enumerate()
        .map(|(i, d)| {
            if Some(i) == skip {
                0.0
            } else {
                (-(d - min) / (2.0 * bandwidth * bandwidth)).exp()
            }
        })
        .collect()
}

fn local_fit(des: &Design, weights: &[f64]) -> Option<LocalFit> {
    let p = des.rows.first()?.len();
    let mut xtwx = Mat::<f64>::zeros(p, p);
    let mut xtw2x = Mat::<f64>::zeros(p, p);
    let mut xtwy = vec![0.0; p];
    let mut wsum = 0.0;
    for (r, row) in des.rows.iter().enumerate() {
        let w = weights[des.site[r]];
        if w == 0.0 {
            continue;
        }
        wsum += w;
        for i in 0..p {
            xtwy[i] += w * row[i] * des.y[r];
            for j in 0..=i {
                xtwx[(i, j)] += w * row[i] * row[j];
                xtw2x[(i, j)] += w * w * row[i] * row[j];
            }
        }
    }
    for i in 0..p {
        for j in 0..i {
            xtwx[(j, i)] = xtwx[(i, j)];
            xtw2x[(j, i)] = xtw2x[(i, j)];
        }
    }
    // Reject designs whose pivots collapse relative to the diagonal scale.
    let scale = (0..p).map(|i| xtwx[(i, i)]).fold(0.0, f64::max);
    if scale.is_nan() || scale <= 0.0 {
        return None;
    }
    let llt = xtwx.llt(Side::Lower).ok()?;
    let l = llt.L();
    if (0..p).any(|i| l[(i, i)] * l[(i, i)] < 1e-10 * xtwx[(i, i)].max(1e-300)) {
        return None;
    }
    use faer::linalg::solvers::{DenseSolveCore, Solve};
    let mut coef = faer::Col::from_fn(p, |i| xtwy[i]);
    llt.solve_in_place(coef.as_mat_mut());
    let coef: Vec<f64> = (0..p).map(|i| coef[i]).collect();
    let xtwx_inv = llt.inverse();
    let mut rss = 0.0;
    for (r, row) in des.rows.iter().enumerate() {
        let w = weights[des.site[r]];
        if w != 0.0 {
            rss += w * (des.y[r] - crate::linalg::dot(&coef, row)).powi(2);
        }
    }
    Some(LocalFit {
        coef,
        xtwx_inv,
        wmse: rss / wsum,
        xtw2x,
    })
}

/// Local fit at `centre`, doubling the bandwidth while the design is singular.
fn robust_fit(
    des: &Design,
    centre: Point,
    bandwidth: f64,
    skip: Option<usize>,
    expansions: usize,
) -> Result<LocalFit> {
    let mut b = bandwidth;
    for _ in 0..=expansions {
        if let Some(fit) = local_fit(des, &site_weights(&des.sites, centre, b, skip)) {
            return Ok(fit);
        }
        b *= 2.0;
    }
    Err(FgpError::numerical(format!(
        "local design at ({:.3}, {:.3}) is rank deficient even at bandwidth {:.4}",
        centre[0],
        centre[1],
        b / 2.0
    )))
}

/// Log-spaced candidates between the 5% and 95% quantiles of pairwise
/// location distances.
pub fn bandwidth_candidates(sites: &[Point], count: usize) -> Result<Vec<f64>> {
    let mut d: Vec<f64> = Vec::new();
    for i in 0..sites.len() {
        for j in 0..i {
            let v = distance(sites[i], sites[j]);
            if v > 0.0 {
                d.push(v);
            }
        }
    }
    if d.is_empty() || count == 0 {
        return Err(FgpError::invalid_input(
            "bandwidth selection needs two distinct locations",
        ));
    }
    d.sort_by(f64::total_cmp);
    let lo = crate::prediction::quantile_sorted(&d, 0.05);
    let hi = crate::prediction::quantile_sorted(&d, 0.95);
    if count == 1 || hi <= lo {
        return Ok(vec![lo]);
    }
    let step = (hi / lo).ln() / (count - 1) as f64;
    Ok((0..count).map(|k| lo * (step * k as f64).exp()).collect())
}

/// Leave-one-location-out mean squared error of each candidate bandwidth.
pub fn cv_scores(data: &Dataset, candidates: &[f64]) -> Vec<(f64, f64)> {
    let des = design(data);
    candidates
        .iter()
        .map(|&b| {
            let mut sse = 0.0;
            for (i, &u) in des.sites.iter().enumerate() {
                let Some(fit) = local_fit(&des, &site_weights(&des.sites, u, b, Some(i))) else {
                    return (b, f64::INFINITY);
                };
                for (r, row) in des.rows.iter().enumerate() {
                    if des.site[r] == i {
                        sse += (des.y[r] - fit.predict(row)).powi(2);
                    }
                }
            }
            (b, sse / des.y.len() as f64)
        })
        .collect()
}

pub fn gwr_fit_predict(train: &Dataset, test: &TestSet, config: &GwrConfig) -> Result<GwrFit> {
    test.check_against(train)?;
    let (bandwidth, scores) = match config.bandwidth {
        Bandwidth::Fixed(b) => {
            if b.is_nan() || b <= 0.0 {
                return Err(FgpError::invalid_spec(format!(
                    "bandwidth must be positive, got {b}"
                )));
            }
            (b, Vec::new())
        }
        Bandwidth::Selected(CvTag::Cv) => {
            let cands = bandwidth_candidates(train.locations().points(), config.cv_candidates)?;
            let scores = cv_scores(train, &cands);
            let best = scores
                .iter()
                .filter(|(_, s)| s.is_finite())
                .min_by(|a, b| a.1.total_cmp(&b.1))
                .ok_or_else(|| {
                    FgpError::numerical("no candidate bandwidth gives a full-rank local design")
                })?;
            (best.0, scores)
        }
    };
    let des = design(train);
    let (nt, st) = (test.n(), test.s());
    let mut pred = PredictionResult {
        mean: vec![0.0; nt * st],
        sd: vec![0.0; nt * st],
        lower95: vec![0.0; nt * st],
        upper95: vec![0.0; nt * st],
    };
    for a in 0..nt {
        let fit = robust_fit(
            &des,
            test.locations().get(a),
            bandwidth,
            None,
            config.max_expansions,
        )?;
        for t in 0..st {
            let mut row: Vec<f64> = (0..train.q()).map(|j| test.x()[(a, j)]).collect();
            row.extend((0..train.p()).map(|d| test.z()[(t, d)]));
            let m = fit.predict(&row);
            let sd = (fit.wmse * (1.0 + fit.leverage(&row))).sqrt();
            let idx = t * nt + a;
            pred.mean[idx] = m;
            pred.sd[idx] = sd;
            pred.lower95[idx] = m - 1.96 * sd;
            pred.upper95[idx] = m + 1.96 * sd;
        }
    }
    Ok(GwrFit {
        prediction: pred,
        bandwidth,
        cv_scores: scores,
    })
}
