//! Shared fixtures for the benchmarks.

use fgp_core::simulation::{generate, Scenario, ScenarioSpec};
use fgp_core::ModelSpec;

/// Scenario 1 with `n` training sites and `s` training realizations.
pub fn scenario(n: usize, s: usize, seed: u64) -> (Scenario, ModelSpec) {
    let mut spec = ScenarioSpec::published(1, seed).expect("valid scenario");
    spec.n_train = n;
    spec.s_train = s;
    spec.n_test = n.min(25);
    let sc = generate(&spec).expect("generation succeeds");
    let mut model = ModelSpec::default_for(&sc.train, spec.m_per_dim).expect("valid model");
    model.basis = sc.basis.spec().clone();
    (sc, model)
}
