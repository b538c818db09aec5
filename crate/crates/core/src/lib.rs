//! Functional Gaussian process regression for spatial fields driven by
//! spatially varying (functional) and realization-level (global) predictors.

pub mod basis;
pub mod error;
pub mod gwr;
pub mod inference;
pub mod kernels;
pub mod linalg;
pub mod model;
pub mod prediction;
pub mod simulation;

#[cfg(test)]
pub(crate) mod testutil;

pub use basis::{
    basis_matrix, build_basis, eval_basis_vector, GlobalBasis, LinearBasis, SplineSpec, TensorBasis,
};
pub use error::{FgpError, Result};
pub use kernels::{matern_cov, KernelParams, LocationSet, Point, Smoothness};
pub use model::{Dataset, ModelSpec, ParamState, Priors};
