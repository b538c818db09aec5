use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::{json, Value};

fn fgp(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fgp"))
        .args(args)
        .output()
        .unwrap()
}

fn small_config(dir: &Path) -> PathBuf {
    let mut scenario =
        serde_json::to_value(fgp_core::simulation::ScenarioSpec::published(1, 0).unwrap()).unwrap();
    scenario["n_train"] = json!(12);
    scenario["s_train"] = json!(4);
    scenario["n_test"] = json!(5);
    scenario["s_test"] = json!(2);
    scenario["m_per_dim"] = json!(4);
    let cfg = json!({
        "seed": 3,
        "out_dir": dir.join("out"),
        "scenario": { "id": 1, "custom": scenario },
        "model": {
            "basis": { "degree": 3, "marginal_counts": [4, 4], "bounds": [[0.0, 1.0], [0.0, 1.0]] }
        },
        "mcmc": { "n_iter": 40, "burn_in": 20, "thin": 2 },
        "gwr": { "bandwidth": "cv" }
    });
    let path = dir.join("config.json");
    std::fs::write(&path, serde_json::to_string_pretty(&cfg).unwrap()).unwrap();
    path
}

fn ok_json(out: Output) -> Value {
    assert!(
        out.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    serde_json::from_slice(&out.stdout).unwrap()
}

fn read(path: PathBuf) -> String {
    std::fs::read_to_string(path).unwrap()
}

#[test]
fn simulate_fit_predict_baseline_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let c = cfg.to_str().unwrap();
    let out = dir.path().join("out");

    let sim = ok_json(fgp(&["simulate", "--config", c]));
    assert_eq!(sim["n"], 12);
    assert_eq!(sim["S"], 4);
    assert!(sim["response_sd"].as_f64().unwrap() > 0.0);
    for f in [
        "train.csv",
        "globals.csv",
        "test.csv",
        "test_globals.csv",
        "truth.json",
    ] {
        assert!(out.join(f).exists(), "{f}");
    }
    assert!(read(out.join("train.csv")).starts_with("#schema=fgp-v1\ns,u1,u2,y,x_1,x_2,x_3\n"));

    let fit = ok_json(fgp(&["fit", "--config", c]));
    assert_eq!(fit["n_draws"], 10);
    let draws = read(out.join("draws.csv"));
    assert_eq!(draws.lines().count(), 2 + 10);
    assert!(draws
        .lines()
        .nth(1)
        .unwrap()
        .starts_with("chain,draw,sigma2_beta_1,decay_beta_1"));
    assert!(draws.lines().nth(1).unwrap().ends_with("decay_eta_16,tau2"));
    assert_eq!(read(out.join("trace.csv")).lines().count(), 2 + 40);
    let report: Value = serde_json::from_str(&read(out.join("fit_report.json"))).unwrap();
    assert!(report["acceptance"]["tau2"].is_number());

    let pred = ok_json(fgp(&["predict", "--config", c, "--grid", "4", "3"]));
    assert_eq!(pred["n_predictions"], 10);
    assert!(pred["metrics"]["rmse"].as_f64().unwrap() > 0.0);
    assert!(out.join("metrics.json").exists());
    let preds = read(out.join("predictions.csv"));
    assert!(preds.lines().nth(1).unwrap() == "s,u1,u2,mean,sd,lower95,upper95,truth");
    assert_eq!(preds.lines().count(), 2 + 10);
    // 3 beta and 16 eta surfaces on 12 grid points.
    assert_eq!(read(out.join("surfaces.csv")).lines().count(), 2 + 19 * 12);

    let base = ok_json(fgp(&["baseline", "--config", c]));
    assert_eq!(base["cross_validated"], true);
    assert!(base["bandwidth"].as_f64().unwrap() > 0.0);
    assert!(out.join("gwr_predictions.csv").exists());
}

#[test]
fn reruns_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let c = cfg.to_str().unwrap();
    let files = [
        "train.csv",
        "test.csv",
        "truth.json",
        "draws.csv",
        "trace.csv",
        "fit_report.json",
        "predictions.csv",
    ];
    let mut runs = Vec::new();
    for name in ["a", "b"] {
        let o = dir.path().join(name);
        let o = o.to_str().unwrap();
        for cmd in ["simulate", "fit", "predict"] {
            ok_json(fgp(&[cmd, "--config", c, "--out", o]));
        }
        runs.push(files.map(|f| read(Path::new(o).join(f))));
    }
    assert_eq!(runs[0], runs[1]);

    // A different seed changes the data.
    let o = dir.path().join("c");
    ok_json(fgp(&[
        "simulate",
        "--config",
        c,
        "--out",
        o.to_str().unwrap(),
        "--seed",
        "4",
    ]));
    assert_ne!(read(o.join("train.csv")), runs[0][0]);
}

#[test]
fn invalid_scenario_reports_json_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.json");
    std::fs::write(&cfg, r#"{"scenario": {"id": 9}}"#).unwrap();
    let out = fgp(&["simulate", "--config", cfg.to_str().unwrap()]);
    assert!(!out.status.success());
    let err: Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(err["error"], "invalid_spec");
    assert!(err["message"].as_str().unwrap().contains("1-8"));
}

#[test]
fn missing_config_file_is_an_io_error() {
    let out = fgp(&["fit", "--config", "/nonexistent/config.json"]);
    assert!(!out.status.success());
    let err: Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(err["error"], "io");
}

#[test]
fn single_retained_draw_gives_one_row() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let mut v: Value = serde_json::from_str(&read(cfg.clone())).unwrap();
    v["mcmc"] = json!({ "n_iter": 3, "burn_in": 2, "thin": 1 });
    std::fs::write(&cfg, v.to_string()).unwrap();
    let c = cfg.to_str().unwrap();
    ok_json(fgp(&["simulate", "--config", c]));
    let fit = ok_json(fgp(&["fit", "--config", c]));
    assert_eq!(fit["n_draws"], 1);
    assert_eq!(read(dir.path().join("out/draws.csv")).lines().count(), 3);
}

#[test]
fn malformed_train_names_the_missing_column() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let c = cfg.to_str().unwrap();
    ok_json(fgp(&["simulate", "--config", c]));
    let train = dir.path().join("out/train.csv");
    let text = read(train.clone()).replace("s,u1,u2,y,", "s,u1,u2,response,");
    std::fs::write(&train, text).unwrap();
    let out = fgp(&["fit", "--config", c]);
    assert!(!out.status.success());
    let err: Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(err["error"], "parse");
    assert!(err["message"].as_str().unwrap().contains("`y`"));
}

#[test]
fn draws_for_a_different_basis_are_a_configuration_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let c = cfg.to_str().unwrap();
    ok_json(fgp(&["simulate", "--config", c]));
    ok_json(fgp(&["fit", "--config", c]));
    let mut v: Value = serde_json::from_str(&read(cfg.clone())).unwrap();
    v["model"]["basis"]["marginal_counts"] = json!([5, 5]);
    std::fs::write(&cfg, v.to_string()).unwrap();
    let out = fgp(&["predict", "--config", c]);
    assert!(!out.status.success());
    let err: Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(err["error"], "config");
    assert!(err["message"].as_str().unwrap().contains("K = 16"));
}

#[test]
fn truth_absent_omits_metrics_and_truth_equal_mean_gives_zero_rmse() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let c = cfg.to_str().unwrap();
    ok_json(fgp(&["simulate", "--config", c]));
    ok_json(fgp(&["fit", "--config", c]));
    let out = dir.path().join("out");
    let with_truth = ok_json(fgp(&["predict", "--config", c]));
    assert!(with_truth.get("metrics").is_some());

    // Replace the truth column by the predicted mean.
    let preds = read(out.join("predictions.csv"));
    let means: Vec<String> = preds
        .lines()
        .skip(2)
        .map(|l| l.split(',').nth(3).unwrap().to_string())
        .collect();
    let test = read(out.join("test.csv"));
    let mut lines: Vec<String> = test.lines().map(String::from).collect();
    for (line, m) in lines.iter_mut().skip(2).zip(&means) {
        let mut f: Vec<&str> = line.split(',').collect();
        f[3] = m;
        *line = f.join(",");
    }
    std::fs::write(out.join("test.csv"), lines.join("\n") + "\n").unwrap();
    let exact = ok_json(fgp(&["predict", "--config", c]));
    assert_eq!(exact["metrics"]["rmse"].as_f64().unwrap(), 0.0);

    // Drop the truth column.
    let stripped: Vec<String> = lines
        .iter()
        .enumerate()
        .map(|(r, l)| {
            if r == 0 {
                return l.clone();
            }
            let mut f: Vec<&str> = l.split(',').collect();
            f.remove(3);
            f.join(",")
        })
        .collect();
    std::fs::write(out.join("test.csv"), stripped.join("\n") + "\n").unwrap();
    std::fs::remove_file(out.join("metrics.json")).unwrap();
    let bare = ok_json(fgp(&["predict", "--config", c]));
    assert!(bare.get("metrics").is_none());
    assert!(!out.join("metrics.json").exists());
    assert!(read(out.join("predictions.csv"))
        .lines()
        .nth(1)
        .unwrap()
        .ends_with("upper95"));
}

#[test]
fn fixed_bandwidth_baseline_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let mut v: Value = serde_json::from_str(&read(cfg.clone())).unwrap();
    v["gwr"]["bandwidth"] = json!(40.0);
    std::fs::write(&cfg, v.to_string()).unwrap();
    let c = cfg.to_str().unwrap();
    ok_json(fgp(&["simulate", "--config", c]));
    let a = ok_json(fgp(&["baseline", "--config", c]));
    let first = read(dir.path().join("out/gwr_predictions.csv"));
    let b = ok_json(fgp(&["baseline", "--config", c]));
    assert_eq!(a, b);
    assert_eq!(a["bandwidth"], 40.0);
    assert_eq!(first, read(dir.path().join("out/gwr_predictions.csv")));
}

#[test]
fn shipped_config_parses() {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/scenario1.json");
    let cfg = fgp_cli::RunConfig::load(&path).unwrap();
    assert_eq!(cfg.scenario_spec().unwrap().id, 1);
    assert_eq!(cfg.mcmc, fgp_core::inference::McmcConfig::default());
}
