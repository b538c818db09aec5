//! Tensor-product B-spline bases over the global-predictor space.
//!
//! Each input dimension gets a clamped B-spline basis with uniformly spaced
//! interior knots. The tensor-product index is row-major over dimensions:
//! the last dimension varies fastest.

use faer::Mat;
use serde::{Deserialize, Serialize};

use crate::error::{FgpError, Result};

/// A fixed set of basis functions `B_1..B_K` over `R^p`.
pub trait GlobalBasis {
    /// Number of inputs `p`.
    fn input_dim(&self) -> usize;

    /// Number of basis functions `K`.
    fn len(&self) -> usize;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Writes `(B_1(z), ..., B_K(z))` into `out`.
    fn eval_into(&self, z: &[f64], out: &mut [f64]) -> Result<()>;
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplineSpec {
    pub degree: usize,
    /// Number of marginal basis functions per input dimension.
    pub marginal_counts: Vec<usize>,
    /// `(min, max)` of each input dimension.
    pub bounds: Vec<(f64, f64)>,
}

impl SplineSpec {
    /// Cubic basis with `m` functions per dimension on the unit cube.
    pub fn cubic_unit(m: usize, dims: usize) -> Self {
        SplineSpec {
            degree: 3,
            marginal_counts: vec![m; dims],
            bounds: vec![(0.0, 1.0); dims],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.marginal_counts.len() != self.bounds.len() {
            return Err(FgpError::invalid_spec(format!(
                "{} marginal counts but {} bounds",
                self.marginal_counts.len(),
                self.bounds.len()
            )));
        }
        for (d, (&m, &(lo, hi))) in self.marginal_counts.iter().zip(&self.bounds).enumerate() {
            if m < self.degree + 1 {
                return Err(FgpError::invalid_spec(format!(
                    "dimension {d}: {m} basis functions is fewer than degree + 1 = {}",
                    self.degree + 1
                )));
            }
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(FgpError::invalid_spec(format!(
                    "dimension {d}: bounds ({lo}, {hi}) are not an interval"
                )));
            }
        }
        Ok(())
    }
}

/// Clamped B-spline basis on one interval.
#[derive(Clone, Debug, PartialEq)]
struct MarginalBasis {
    degree: usize,
    count: usize,
    knots: Vec<f64>,
}

impl MarginalBasis {
    fn new(degree: usize, count: usize, (lo, hi): (f64, f64)) -> Self {
        let pieces = count - degree;
        let mut knots = Vec::with_capacity(count + degree + 1);
        knots.extend(std::iter::repeat_n(lo, degree + 1));
        for i in 1..pieces {
            knots.push(lo + (hi - lo) * i as f64 / pieces as f64);
        }
        knots.extend(std::iter::repeat_n(hi, degree + 1));
        MarginalBasis {
            degree,
            count,
            knots,
        }
    }

    fn lower(&self) -> f64 {
        self.knots[0]
    }

    fn upper(&self) -> f64 {
        self.knots[self.knots.len() - 1]
    }

    /// Index `i` of the knot span `[t_i, t_{i+1})` containing `x`, with the
    /// right endpoint assigned to the last non-empty span.
    fn span(&self, x: f64) -> usize {
        let p = self.degree;
        let last = self.count - 1;
        if x >= self.knots[last + 1] {
            return last;
        }
        // knots[p] <= x < knots[last + 1]
        let (mut lo, mut hi) = (p, last + 1);
        while hi - lo > 1 {
            let mid = (lo + hi) / 2;
            if x < self.knots[mid] {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        lo
    }

    /// Evaluates all `count` basis functions at `x` (clamped into bounds).
    fn eval_into(&self, x: f64, out: &mut [f64]) {
        let x = x.clamp(self.lower(), self.upper());
        let p = self.degree;
        let span = self.span(x);
        let t = &self.knots;

        // Cox-de Boor triangle for the p + 1 functions supported on `span`.
        let mut local = vec![0.0; p + 1];
        let mut left = vec![0.0; p + 1];
        let mut right = vec![0.0; p + 1];
        local[0] = 1.0;
        for j in 1..=p {
            left[j] = x - t[span + 1 - j];
            right[j] = t[span + j] - x;
            let mut saved = 0.0;
            for r in 0..j {
                let temp = local[r] / (right[r + 1] + left[j - r]);
                local[r] = saved + right[r + 1] * temp;
                saved = left[j - r] * temp;
            }
            local[j] = saved;
        }

        out.fill(0.0);
        out[span - p..=span].copy_from_slice(&local);
    }
}

/// Tensor product of clamped, uniformly knotted B-spline bases.
#[derive(Clone, Debug, PartialEq)]
pub struct TensorBasis {
    spec: SplineSpec,
    marginals: Vec<MarginalBasis>,
    total: usize,
}

impl TensorBasis {
    pub fn new(spec: SplineSpec) -> Result<Self> {
        spec.validate()?;
        let marginals: Vec<_> = spec
            .marginal_counts
            .iter()
            .zip(&spec.bounds)
            .map(|(&m, &b)| MarginalBasis::new(spec.degree, m, b))
            .collect();
        let total = spec.marginal_counts.iter().product();
        Ok(TensorBasis {
            spec,
            marginals,
            total,
        })
    }

    pub fn spec(&self) -> &SplineSpec {
        &self.spec
    }

    /// Knot vector of input dimension `d`.
    pub fn knots(&self, d: usize) -> &[f64] {
        &self.marginals[d].knots
    }

    /// Values of the marginal basis of dimension `d` at `x`.
    pub fn marginal_values(&self, d: usize, x: f64) -> Vec<f64> {
        let m = &self.marginals[d];
        let mut out = vec![0.0; m.count];
        m.eval_into(x, &mut out);
        out
    }
}

impl GlobalBasis for TensorBasis {
    fn input_dim(&self) -> usize {
        self.marginals.len()
    }

    fn len(&self) -> usize {
        self.total
    }

    fn eval_into(&self, z: &[f64], out: &mut [f64]) -> Result<()> {
        check_dims(self, z, out)?;
        if z.iter().any(|v| !v.is_finite()) {
            return Err(FgpError::invalid_input("non-finite global predictor"));
        }
        out[0] = 1.0;
        let mut filled = 1;
        for (m, &x) in self.marginals.iter().zip(z) {
            let mut vals = vec![0.0; m.count];
            m.eval_into(x, &mut vals);
            // Expand in place from the back so earlier entries are not clobbered.
            for i in (0..filled).rev() {
                let head = out[i];
                for (j, v) in vals.iter().enumerate() {
                    out[i * m.count + j] = head * v;
                }
            }
            filled *= m.count;
        }
        Ok(())
    }
}

/// The identity basis `B_k(z) = z_k`, under which the model reduces to a
/// spatially varying coefficient model.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LinearBasis {
    pub dim: usize,
}

impl GlobalBasis for LinearBasis {
    fn input_dim(&self) -> usize {
        self.dim
    }

    fn len(&self) -> usize {
        self.dim
    }

    fn eval_into(&self, z: &[f64], out: &mut [f64]) -> Result<()> {
        check_dims(self, z, out)?;
        out.copy_from_slice(z);
        Ok(())
    }
}

fn check_dims<B: GlobalBasis + ?Sized>(basis: &B, z: &[f64], out: &[f64]) -> Result<()> {
    if z.len() != basis.input_dim() {
        return Err(FgpError::invalid_input(format!(
            "global predictor has {} entries, basis expects {}",
            z.len(),
            basis.input_dim()
        )));
    }
    if out.len() != basis.len() {
        return Err(FgpError::invalid_input(format!(
            "output buffer has {} entries, basis has {} functions",
            out.len(),
            basis.len()
        )));
    }
    Ok(())
}

pub fn build_basis(spec: SplineSpec) -> Result<TensorBasis> {
    TensorBasis::new(spec)
}

pub fn eval_basis_vector<B: GlobalBasis + ?Sized>(basis: &B, z: &[f64]) -> Result<Vec<f64>> {
    let mut out = vec![0.0; basis.len()];
    basis.eval_into(z, &mut out)?;
    Ok(out)
}

/// `S x K` matrix whose row `s` is the basis evaluated at row `s` of `z`.
pub fn basis_matrix<B: GlobalBasis + ?Sized>(basis: &B, z: &Mat<f64>) -> Result<Mat<f64>> {
    if z.ncols() != basis.input_dim() {
        return Err(FgpError::invalid_input(format!(
            "global predictor matrix has {} columns, basis expects {}",
            z.ncols(),
            basis.input_dim()
        )));
    }
    let mut out = Mat::zeros(z.nrows(), basis.len());
    let mut row = vec![0.0; basis.len()];
    let mut zs = vec![0.0; z.ncols()];
    for s in 0..z.nrows() {
        for (d, v) in zs.iter_mut().enumerate() {
            *v = z[(s, d)];
        }
        basis.eval_into(&zs, &mut row)?;
        for (k, v) in row.iter().enumerate() {
            out[(s, k)] = *v;
        }
    }
    Ok(out)
}
