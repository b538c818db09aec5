use faer::Mat;
use rand::Rng;

use crate::basis::{GlobalBasis, SplineSpec, TensorBasis};
use crate::kernels::{KernelParams, LocationSet};
use crate::model::{prior_cov_pair, Dataset, ModelSpec, ParamState, Site};

pub struct Instance {
    pub data: Dataset,
    pub state: ParamState,
    pub basis: TensorBasis,
    pub spec: ModelSpec,
}

/// Random small instance with two global predictors on `[0, 1]^2` and `m`
/// cubic basis functions per dimension.
pub fn random_instance<R: Rng>(rng: &mut R, s: usize, n: usize, q: usize, m: usize) -> Instance {
    let pts = (0..n)
        .map(|_| [rng.random_range(0.0..10.0), rng.random_range(0.0..10.0)])
        .collect();
    let locations = LocationSet::new(pts).unwrap();
    let x = Mat::from_fn(n, q, |_, j| {
        if j == 0 {
            1.0
        } else {
            rng.random_range(-2.0..2.0)
        }
    });
    let z = Mat::from_fn(s, 2, |_, _| rng.random_range(0.0..1.0));
    let y = (0..s * n).map(|_| rng.random_range(-2.0..2.0)).collect();
    let data = Dataset::new(locations, x, z, y).unwrap();
    let basis = TensorBasis::new(SplineSpec::cubic_unit(m, 2)).unwrap();
    let mut spec = ModelSpec::default_for(&data, m).unwrap();
    spec.basis = basis.spec().clone();
    // Decays inside the default prior support.
    let (lo, hi) = (
        spec.priors.decay.lower.max(0.1),
        spec.priors.decay.upper.min(1.5),
    );
    let kernel = |rng: &mut R| {
        KernelParams::exponential(rng.random_range(0.2..2.0), rng.random_range(lo..hi)).unwrap()
    };
    let state = ParamState {
        beta_kernels: (0..q).map(|_| kernel(rng)).collect(),
        eta_kernels: (0..basis.len()).map(|_| kernel(rng)).collect(),
        nugget: rng.random_range(0.05..0.5),
    };
    Instance {
        data,
        state,
        basis,
        spec,
    }
}

/// `Σ_Y` built entry by entry from pairwise covariances.
pub fn pairwise_oracle(inst: &Instance) -> Mat<f64> {
    let d = &inst.data;
    let n = d.n();
    let xs: Vec<Vec<f64>> = (0..n).map(|i| d.x_row(i)).collect();
    let zs: Vec<Vec<f64>> = (0..d.s()).map(|s| d.z_row(s)).collect();
    let site = |r: usize| Site {
        realization: r / n,
        z: &zs[r / n],
        location: d.locations().get(r % n),
        x: &xs[r % n],
    };
    Mat::from_fn(d.s() * n, d.s() * n, |r, c| {
        prior_cov_pair(&inst.basis, &site(r), &site(c), &inst.state).unwrap()
    })
}
