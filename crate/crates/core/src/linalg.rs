//! Thin helpers over faer's dense factorizations.

use faer::linalg::solvers::{DenseSolveCore, Solve};
use faer::{Col, Mat, MatRef, Side};

use crate::error::{FgpError, Result};

/// Number of jittered retries after a failed plain factorization.
pub const JITTER_RETRIES: usize = 3;

/// Lower Cholesky factor of a symmetric positive-definite matrix.
pub struct Cholesky {
    llt: faer::linalg::solvers::Llt<f64>,
    /// Diagonal jitter that was needed for the factorization to succeed.
    pub jitter: f64,
}

impl Cholesky {
    /// Factorizes `a` without modification.
    pub fn new(a: MatRef<'_, f64>) -> Result<Self> {
        let llt = a
            .llt(Side::Lower)
            .map_err(|e| FgpError::numerical(format!("Cholesky factorization failed: {e:?}")))?;
        Ok(Cholesky { llt, jitter: 0.0 })
    }

    /// Tries `a` as given, then with diagonal jitter `base * scale`, growing
    /// tenfold on each of `JITTER_RETRIES` retries. `scale` is the mean of
    /// the diagonal.
    pub fn with_escalation(a: MatRef<'_, f64>, base: f64) -> Result<Self> {
        if let Ok(c) = Self::new(a) {
            return Ok(c);
        }
        let n = a.nrows();
        let scale = if n == 0 {
            1.0
        } else {
            (0..n).map(|i| a[(i, i)]).sum::<f64>() / n as f64
        };
        let mut jitter = base * scale.abs().max(f64::MIN_POSITIVE);
        let mut work = a.to_owned();
        for _ in 0..JITTER_RETRIES {
            for i in 0..n {
                work[(i, i)] = a[(i, i)] + jitter;
            }
            if let Ok(llt) = work.llt(Side::Lower) {
                return Ok(Cholesky { llt, jitter });
            }
            jitter *= 10.0;
        }
        Err(FgpError::numerical(format!(
            "matrix of size {n} is not positive definite after {JITTER_RETRIES} jitter retries"
        )))
    }

    /// Like [`Cholesky::with_escalation`] but always adds `base * scale` first.
    pub fn jittered(a: MatRef<'_, f64>, base: f64) -> Result<Self> {
        let n = a.nrows();
        let scale = if n == 0 {
            1.0
        } else {
            (0..n).map(|i| a[(i, i)]).sum::<f64>() / n as f64
        };
        let mut work = a.to_owned();
        for i in 0..n {
            work[(i, i)] += base * scale.abs();
        }
        let mut c = Self::with_escalation(work.as_ref(), base)?;
        c.jitter += base * scale.abs();
        Ok(c)
    }

    pub fn dim(&self) -> usize {
        self.llt.L().nrows()
    }

    pub fn factor(&self) -> MatRef<'_, f64> {
        self.llt.L()
    }

    /// `log |A|`.
    pub fn log_det(&self) -> f64 {
        let l = self.llt.L();
        2.0 * (0..l.nrows()).map(|i| l[(i, i)].ln()).sum::<f64>()
    }

    /// Solves `A x = b`.
    pub fn solve_vec(&self, b: &[f64]) -> Vec<f64> {
        let mut x = Col::from_fn(b.len(), |i| b[i]);
        self.llt.solve_in_place(x.as_mat_mut());
        (0..b.len()).map(|i| x[i]).collect()
    }

    /// Solves `A X = B` in place.
    pub fn solve_in_place(&self, b: &mut Mat<f64>) {
        self.llt.solve_in_place(b.as_mut());
    }

    /// Solves `L X = B` in place.
    pub fn solve_lower_in_place(&self, b: &mut Mat<f64>) {
        self.llt.L().solve_lower_triangular_in_place(b.as_mut());
    }

    pub fn inverse(&self) -> Mat<f64> {
        self.llt.inverse()
    }
}

/// `(sign, log |det A|)` of a general square matrix via partial-pivoting LU.
pub fn signed_log_det(a: MatRef<'_, f64>) -> (f64, f64) {
    let lu = a.partial_piv_lu();
    let u = lu.U();
    let mut sign = permutation_sign(lu.P().arrays().0);
    let mut log_abs = 0.0;
    for i in 0..u.nrows() {
        let d = u[(i, i)];
        if d == 0.0 {
            return (0.0, f64::NEG_INFINITY);
        }
        if d < 0.0 {
            sign = -sign;
        }
        log_abs += d.abs().ln();
    }
    (sign, log_abs)
}

fn permutation_sign(forward: &[usize]) -> f64 {
    let mut seen = vec![false; forward.len()];
    let mut sign = 1.0;
    for start in 0..forward.len() {
        if seen[start] {
            continue;
        }
        let mut len = 0;
        let mut i = start;
        while !seen[i] {
            seen[i] = true;
            i = forward[i];
            len += 1;
        }
        if len % 2 == 0 {
            sign = -sign;
        }
    }
    sign
}

/// Solves the general square system `A X = B` by partial-pivoting LU.
pub fn lu_solve(a: MatRef<'_, f64>, b: MatRef<'_, f64>) -> Mat<f64> {
    let lu = a.partial_piv_lu();
    lu.solve(b)
}

/// `x^T y`.
#[inline]
pub fn dot(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}

/// `y += a x`.
#[inline]
pub fn axpy(y: &mut [f64], a: f64, x: &[f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

/// `dst += a * src` for equally shaped column-major views.
pub fn add_scaled(mut dst: faer::MatMut<'_, f64>, a: f64, src: MatRef<'_, f64>) {
    for j in 0..dst.ncols() {
        let d = dst
            .as_mut()
            .col_mut(j)
            .try_as_col_major_mut()
            .unwrap()
            .as_slice_mut();
        let s = src.col(j).try_as_col_major().unwrap().as_slice();
        axpy(d, a, s);
    }
}

pub fn mat_vec(a: &Mat<f64>, x: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; a.nrows()];
    for (j, &xj) in x.iter().enumerate() {
        if xj == 0.0 {
            continue;
        }
        let col = a.col_as_slice(j);
        for (o, c) in out.iter_mut().zip(col) {
            *o += c * xj;
        }
    }
    out
}
