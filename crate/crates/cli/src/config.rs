//! The run configuration document.

use std::path::{Path, PathBuf};

use fgp_core::gwr::GwrConfig;
use fgp_core::inference::McmcConfig;
use fgp_core::simulation::ScenarioSpec;
use fgp_core::{Dataset, ModelSpec, Priors, Smoothness, SplineSpec};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

/// One JSON document drives every subcommand. Missing fields take the
/// defaults shown by `RunConfig::default()`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Seeds the simulator, the sampler and the predictive Monte Carlo.
    pub seed: u64,
    pub out_dir: PathBuf,
    pub scenario: ScenarioConfig,
    pub data: DataPaths,
    pub model: ModelConfig,
    pub mcmc: McmcConfig,
    pub prediction: PredictionConfig,
    pub gwr: GwrConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            out_dir: PathBuf::from("out"),
            scenario: ScenarioConfig::default(),
            data: DataPaths::default(),
            model: ModelConfig::default(),
            mcmc: McmcConfig::default(),
            prediction: PredictionConfig::default(),
            gwr: GwrConfig::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    /// Published scenario 1-8.
    pub id: u8,
    /// Replaces the published settings entirely; its seed is overwritten by
    /// the run seed.
    pub custom: Option<ScenarioSpec>,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            id: 1,
            custom: None,
        }
    }
}

/// Input files. Unset paths default to the file of the same name in
/// `out_dir`, which is where `simulate` and `fit` write them.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataPaths {
    pub train: Option<PathBuf>,
    pub globals: Option<PathBuf>,
    pub test: Option<PathBuf>,
    pub test_globals: Option<PathBuf>,
    pub draws: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    /// Used when `basis` is unset: cubic splines with this many functions
    /// per global dimension over the observed range of the training globals.
    pub m_per_dim: usize,
    pub basis: Option<SplineSpec>,
    pub nu_beta: Smoothness,
    pub nu_eta: Smoothness,
    /// Unset means IG(2, 1) variances and a decay prior from the training
    /// site distances.
    pub priors: Option<Priors>,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            m_per_dim: 5,
            basis: None,
            nu_beta: Smoothness::Half,
            nu_eta: Smoothness::Half,
            priors: None,
        }
    }
}

impl ModelConfig {
    pub fn resolve(&self, data: &Dataset) -> Result<ModelSpec> {
        let mut spec = ModelSpec::default_for(data, self.m_per_dim)?;
        if let Some(b) = &self.basis {
            spec.basis = b.clone();
        }
        if let Some(p) = self.priors {
            spec.priors = p;
        }
        spec.nu_beta = self.nu_beta;
        spec.nu_eta = self.nu_eta;
        if spec.basis.marginal_counts.len() != data.p() {
            return Err(CliError::Config(format!(
                "basis has {} dimensions but the data have p = {} global predictors",
                spec.basis.marginal_counts.len(),
                data.p()
            )));
        }
        spec.validate()?;
        Ok(spec)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PredictionConfig {
    /// Stratified deviates per draw; unset targets about 4000 per test point.
    pub deviates_per_draw: Option<usize>,
    /// Evenly spaced posterior draws used for surface-grid export.
    pub grid_draws: Option<usize>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        serde_json::from_str(&text)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    pub fn apply_overrides(&mut self, seed: Option<u64>, out: Option<PathBuf>) {
        if let Some(s) = seed {
            self.seed = s;
        }
        if let Some(o) = out {
            self.out_dir = o;
        }
    }

    pub fn scenario_spec(&self) -> Result<ScenarioSpec> {
        let mut spec = match &self.scenario.custom {
            Some(s) => s.clone(),
            None => ScenarioSpec::published(self.scenario.id, self.seed)?,
        };
        spec.seed = self.seed;
        spec.validate()?;
        Ok(spec)
    }

    pub fn mcmc_config(&self) -> Result<McmcConfig> {
        let cfg = McmcConfig {
            seed: self.seed,
            ..self.mcmc.clone()
        };
        cfg.validate()?;
        Ok(cfg)
    }

    fn path_or(&self, p: &Option<PathBuf>, name: &str) -> PathBuf {
        p.clone().unwrap_or_else(|| self.out_dir.join(name))
    }

    pub fn train_path(&self) -> PathBuf {
        self.path_or(&self.data.train, "train.csv")
    }

    pub fn globals_path(&self) -> PathBuf {
        self.path_or(&self.data.globals, "globals.csv")
    }

    pub fn test_path(&self) -> PathBuf {
        self.path_or(&self.data.test, "test.csv")
    }

    pub fn test_globals_path(&self) -> PathBuf {
        self.path_or(&self.data.test_globals, "test_globals.csv")
    }

    pub fn draws_path(&self) -> PathBuf {
        self.path_or(&self.data.draws, "draws.csv")
    }

    pub fn out_file(&self, name: &str) -> PathBuf {
        self.out_dir.join(name)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_document_is_the_default() {
        let c: RunConfig = serde_json::from_str("{}").unwrap();
        assert_eq!(c, RunConfig::default());
    }

    #[test]
    fn default_round_trips_through_json() {
        let c = RunConfig::default();
        let text = serde_json::to_string_pretty(&c).unwrap();
        let back: RunConfig = serde_json::from_str(&text).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn unknown_field_is_rejected() {
        assert!(serde_json::from_str::<RunConfig>(r#"{"sede": 3}"#).is_err());
    }

    #[test]
    fn bandwidth_accepts_cv_or_number() {
        let c: RunConfig = serde_json::from_str(r#"{"gwr": {"bandwidth": 12.5}}"#).unwrap();
        assert_eq!(c.gwr.bandwidth, fgp_core::gwr::Bandwidth::Fixed(12.5));
        let c: RunConfig = serde_json::from_str(r#"{"gwr": {"bandwidth": "cv"}}"#).unwrap();
        assert_eq!(c.gwr.bandwidth, fgp_core::gwr::Bandwidth::CV);
    }

    #[test]
    fn overrides_replace_seed_and_out() {
        let mut c = RunConfig::default();
        c.apply_overrides(Some(9), Some(PathBuf::from("/tmp/x")));
        assert_eq!(c.seed, 9);
        assert_eq!(c.train_path(), PathBuf::from("/tmp/x/train.csv"));
        assert_eq!(c.scenario_spec().unwrap().seed, 9);
    }

    #[test]
    fn scenario_nine_is_rejected() {
        let c: RunConfig = serde_json::from_str(r#"{"scenario": {"id": 9}}"#).unwrap();
        assert!(c.scenario_spec().is_err());
    }
}
