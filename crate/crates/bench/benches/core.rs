use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use fgp_bench::scenario;
use fgp_core::inference::{initialize_state, propose, Block, IncrementalTarget, PosteriorTarget};
use fgp_core::kernels::cov_matrix;
use fgp_core::model::{assemble_sigma_y, log_marginal_likelihood};
use fgp_core::prediction::{posterior_predictive, PredictOptions};
use fgp_core::{eval_basis_vector, KernelParams, SplineSpec, TensorBasis};
use rand::SeedableRng;

fn kernels_and_basis(c: &mut Criterion) {
    let (sc, _) = scenario(100, 10, 1);
    let k = KernelParams::exponential(1.0, 0.2).unwrap();
    c.bench_function("cov_matrix n=100", |b| {
        b.iter(|| cov_matrix(black_box(sc.train.locations()), &k))
    });
    let basis = TensorBasis::new(SplineSpec::cubic_unit(5, 2)).unwrap();
    c.bench_function("tensor basis K=25", |b| {
        b.iter(|| eval_basis_vector(&basis, black_box(&[0.3, 0.7])))
    });
}

fn likelihood(c: &mut Criterion) {
    let mut g = c.benchmark_group("likelihood");
    g.sample_size(10);
    for (n, s) in [(50, 5), (100, 10)] {
        let (sc, spec) = scenario(n, s, 1);
        let state = initialize_state(&sc.train, &sc.basis, &spec).unwrap();
        g.bench_function(format!("assemble S={s} n={n}"), |b| {
            b.iter(|| assemble_sigma_y(&sc.train, &sc.basis, black_box(&state)))
        });
        g.bench_function(format!("dense log likelihood S={s} n={n}"), |b| {
            b.iter(|| log_marginal_likelihood(&sc.train, &sc.basis, black_box(&state)))
        });
        let mut target =
            IncrementalTarget::new(&sc.train, &sc.basis, &spec, state.clone()).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
        let (cand, _) = propose(&state, Block::Eta(3), 0.3, &mut rng);
        g.bench_function(format!("woodbury kernel proposal S={s} n={n}"), |b| {
            b.iter(|| target.evaluate(Block::Eta(3), black_box(&cand)))
        });
    }
    g.finish();
}

fn prediction(c: &mut Criterion) {
    let mut g = c.benchmark_group("prediction");
    g.sample_size(10);
    let (sc, spec) = scenario(100, 10, 1);
    let state = initialize_state(&sc.train, &sc.basis, &spec).unwrap();
    let draws = vec![state; 10];
    g.bench_function("posterior predictive 10 draws", |b| {
        b.iter(|| {
            posterior_predictive(
                &draws,
                &sc.train,
                &sc.basis,
                &sc.test,
                &PredictOptions::default(),
            )
        })
    });
    g.finish();
}

criterion_group!(benches, kernels_and_basis, likelihood, prediction);
criterion_main!(benches);
