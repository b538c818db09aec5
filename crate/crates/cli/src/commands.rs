//! The four pipeline stages. Each returns a JSON summary for stdout.

use fgp_core::gwr::{gwr_fit_predict, Bandwidth};
use fgp_core::inference::run_chains;
use fgp_core::prediction::{
    evaluate_metrics, latent_surfaces, posterior_predictive, PredictOptions,
};
use fgp_core::simulation::generate;
use fgp_core::{GlobalBasis, LocationSet, ParamState, Point, TensorBasis};
use serde_json::{json, Value};

use crate::config::RunConfig;
use crate::error::{CliError, Result};
use crate::io;

pub fn simulate(cfg: &RunConfig) -> Result<Value> {
    let spec = cfg.scenario_spec()?;
    let sc = generate(&spec)?;
    let train_labels: Vec<u64> = (0..sc.train.s() as u64).collect();
    let test_labels: Vec<u64> = (0..sc.test.s() as u64)
        .map(|s| s + train_labels.len() as u64)
        .collect();
    io::write_train(&cfg.train_path(), &train_labels, &sc.train)?;
    io::write_globals(&cfg.globals_path(), &train_labels, sc.train.z())?;
    io::write_test(&cfg.test_path(), &test_labels, &sc.test)?;
    io::write_globals(&cfg.test_globals_path(), &test_labels, sc.test.z())?;
    io::write_json(&cfg.out_file("truth.json"), &sc.truth)?;
    Ok(json!({
        "command": "simulate",
        "scenario": spec.id,
        "seed": spec.seed,
        "n": sc.train.n(),
        "S": sc.train.s(),
        "n_test": sc.test.n(),
        "S_test": sc.test.s(),
        "response_sd": sc.train.response_variance().sqrt(),
    }))
}

pub fn fit(cfg: &RunConfig) -> Result<Value> {
    let (data, _) = io::read_train(&cfg.train_path(), &cfg.globals_path())?;
    let spec = cfg.model.resolve(&data)?;
    let basis = TensorBasis::new(spec.basis.clone())?;
    let mcmc = cfg.mcmc_config()?;
    let draws = run_chains(&data, &basis, &spec, &mcmc)?;
    let (q, k) = (data.q(), basis.len());
    io::write_draws(&cfg.draws_path(), &draws, q, k)?;
    io::write_trace(&cfg.out_file("trace.csv"), &draws)?;

    let all = draws.draws();
    let names = ParamState::column_names(q, k);
    let mut means = vec![0.0; names.len()];
    for d in &all {
        for (m, v) in means.iter_mut().zip(d.flatten()) {
            *m += v / all.len() as f64;
        }
    }
    let acceptance = draws.acceptance_rates();
    let report = json!({
        "schema": io::SCHEMA,
        "n_draws": all.len(),
        "model": spec,
        "mcmc": mcmc,
        "acceptance": draws.block_names.iter().zip(&acceptance)
            .map(|(b, r)| (b.clone(), json!(r))).collect::<serde_json::Map<_, _>>(),
        "failures": draws.chains.iter().map(|c| c.failures).collect::<Vec<_>>(),
        "posterior_mean": names.iter().zip(&means)
            .map(|(n, m)| (n.clone(), json!(m))).collect::<serde_json::Map<_, _>>(),
    });
    io::write_json(&cfg.out_file("fit_report.json"), &report)?;
    Ok(json!({
        "command": "fit",
        "n_draws": all.len(),
        "tau2_mean": draws.posterior_mean_nugget(),
        "min_acceptance": acceptance.iter().cloned().fold(f64::INFINITY, f64::min),
        "max_acceptance": acceptance.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
    }))
}

/// `w x h` grid over the bounding box of `points`.
pub fn regular_grid(points: &[Point], w: usize, h: usize) -> Result<LocationSet> {
    if w < 2 || h < 2 {
        return Err(CliError::Config(format!(
            "grid needs at least 2 x 2 points, got {w} x {h}"
        )));
    }
    let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
    for p in points {
        for d in 0..2 {
            lo[d] = lo[d].min(p[d]);
            hi[d] = hi[d].max(p[d]);
        }
    }
    let at =
        |d: usize, t: usize, count: usize| lo[d] + (hi[d] - lo[d]) * t as f64 / (count - 1) as f64;
    let mut grid = Vec::with_capacity(w * h);
    for b in 0..h {
        for a in 0..w {
            grid.push([at(0, a, w), at(1, b, h)]);
        }
    }
    Ok(LocationSet::new(grid)?)
}

pub fn predict(cfg: &RunConfig, grid: Option<(usize, usize)>) -> Result<Value> {
    let (data, _) = io::read_train(&cfg.train_path(), &cfg.globals_path())?;
    let spec = cfg.model.resolve(&data)?;
    let basis = TensorBasis::new(spec.basis.clone())?;
    let draws = io::read_draws(
        &cfg.draws_path(),
        data.q(),
        basis.len(),
        spec.nu_beta,
        spec.nu_eta,
    )?;
    let (test, labels) = io::read_test(&cfg.test_path(), &cfg.test_globals_path())?;
    if test.x().ncols() != data.q() || test.z().ncols() != data.p() {
        return Err(CliError::Config(format!(
            "test set has q = {}, p = {} but training data has q = {}, p = {}",
            test.x().ncols(),
            test.z().ncols(),
            data.q(),
            data.p()
        )));
    }
    let opts = PredictOptions {
        seed: cfg.seed,
        deviates_per_draw: cfg.prediction.deviates_per_draw,
    };
    let pred = posterior_predictive(&draws, &data, &basis, &test, &opts)?;
    io::write_predictions(&cfg.out_file("predictions.csv"), &labels, &test, &pred)?;

    let mut summary = json!({
        "command": "predict",
        "n_draws": draws.len(),
        "n_predictions": pred.len(),
    });
    if let Some(y) = test.y() {
        let m = evaluate_metrics(&pred, y)?;
        io::write_json(&cfg.out_file("metrics.json"), &m)?;
        summary["metrics"] = json!(m);
    }
    if let Some((w, h)) = grid {
        let grid = regular_grid(data.locations().points(), w, h)?;
        let used = cfg
            .prediction
            .grid_draws
            .unwrap_or(20)
            .clamp(1, draws.len());
        let picks: Vec<&ParamState> = (0..used).map(|t| &draws[t * draws.len() / used]).collect();
        let names: Vec<String> = (1..=data.q())
            .map(|j| format!("beta_{j}"))
            .chain((1..=basis.len()).map(|k| format!("eta_{k}")))
            .collect();
        // Mixture moments over the selected draws.
        let mut first = vec![vec![0.0; grid.len()]; names.len()];
        let mut second = vec![vec![0.0; grid.len()]; names.len()];
        for d in &picks {
            let s = latent_surfaces(d, &data, &basis, &grid)?;
            let means = s.beta_mean.iter().chain(&s.eta_mean);
            let sds = s.beta_sd.iter().chain(&s.eta_sd);
            for (r, (m, sd)) in means.zip(sds).enumerate() {
                for a in 0..grid.len() {
                    first[r][a] += m[a] / used as f64;
                    second[r][a] += (m[a] * m[a] + sd[a] * sd[a]) / used as f64;
                }
            }
        }
        let surfaces: Vec<(String, Vec<f64>, Vec<f64>)> = names
            .into_iter()
            .zip(first.into_iter().zip(second))
            .map(|(name, (m, s2))| {
                let sd = m
                    .iter()
                    .zip(&s2)
                    .map(|(a, b)| (b - a * a).max(0.0).sqrt())
                    .collect();
                (name, m, sd)
            })
            .collect();
        io::write_surfaces(&cfg.out_file("surfaces.csv"), &grid, &surfaces)?;
        summary["grid"] = json!({ "width": w, "height": h, "draws": used });
    }
    Ok(summary)
}

pub fn baseline(cfg: &RunConfig) -> Result<Value> {
    let (data, _) = io::read_train(&cfg.train_path(), &cfg.globals_path())?;
    let (test, labels) = io::read_test(&cfg.test_path(), &cfg.test_globals_path())?;
    let fit = gwr_fit_predict(&data, &test, &cfg.gwr)?;
    let selected = matches!(cfg.gwr.bandwidth, Bandwidth::Selected(_));
    eprintln!(
        "gwr bandwidth {} ({})",
        fit.bandwidth,
        if selected { "cross-validated" } else { "fixed" }
    );
    io::write_predictions(
        &cfg.out_file("gwr_predictions.csv"),
        &labels,
        &test,
        &fit.prediction,
    )?;
    io::write_json(
        &cfg.out_file("gwr_report.json"),
        &json!({ "bandwidth": fit.bandwidth, "cross_validated": selected, "cv_scores": fit.cv_scores }),
    )?;
    let mut summary = json!({
        "command": "baseline",
        "bandwidth": fit.bandwidth,
        "cross_validated": selected,
    });
    if let Some(y) = test.y() {
        let m = evaluate_metrics(&fit.prediction, y)?;
        io::write_json(&cfg.out_file("gwr_metrics.json"), &m)?;
        summary["metrics"] = json!(m);
    }
    Ok(summary)
}
