//! Half-integer Matérn covariance functions on the plane.
//!
//! Kernels are parameterized by a decay rate `φ` rather than a length-scale:
//! the correlation at distance `d` is `m_ν(φ d)`, so `ν = 1/2` gives the
//! exponential kernel `σ² exp(-φ d)`. The length-scale is `1/φ`.

use faer::Mat;
use serde::{Deserialize, Serialize};

use crate::error::{FgpError, Result};

/// A point in the two-dimensional spatial domain.
pub type Point = [f64; 2];

/// Relative diagonal jitter added to kernel matrices before Cholesky.
pub const DEFAULT_JITTER: f64 = 1e-8;

/// Matérn smoothness. Only the closed-form half-integer cases are supported.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub enum Smoothness {
    /// ν = 1/2, the exponential kernel.
    Half,
    /// ν = 3/2.
    ThreeHalves,
    /// ν = 5/2.
    FiveHalves,
}

impl Smoothness {
    pub fn value(self) -> f64 {
        match self {
            Smoothness::Half => 0.5,
            Smoothness::ThreeHalves => 1.5,
            Smoothness::FiveHalves => 2.5,
        }
    }

    /// Unit-variance correlation at scaled distance `t = φ d`.
    #[inline]
    pub fn correlation(self, t: f64) -> f64 {
        match self {
            Smoothness::Half => (-t).exp(),
            Smoothness::ThreeHalves => {
                let a = 3f64.sqrt() * t;
                (1.0 + a) * (-a).exp()
            }
            Smoothness::FiveHalves => {
                let a = 5f64.sqrt() * t;
                (1.0 + a + 5.0 * t * t / 3.0) * (-a).exp()
            }
        }
    }
}

impl TryFrom<f64> for Smoothness {
    type Error = FgpError;

    fn try_from(nu: f64) -> Result<Self> {
        if nu == 0.5 {
            Ok(Smoothness::Half)
        } else if nu == 1.5 {
            Ok(Smoothness::ThreeHalves)
        } else if nu == 2.5 {
            Ok(Smoothness::FiveHalves)
        } else {
            Err(FgpError::invalid_spec(format!(
                "smoothness must be one of 0.5, 1.5, 2.5 (got {nu})"
            )))
        }
    }
}

impl From<Smoothness> for f64 {
    fn from(nu: Smoothness) -> f64 {
        nu.value()
    }
}

/// Variance, decay rate and smoothness of one Matérn kernel.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelParams {
    pub variance: f64,
    pub decay: f64,
    pub smoothness: Smoothness,
}

impl KernelParams {
    pub fn new(variance: f64, decay: f64, smoothness: Smoothness) -> Result<Self> {
        let params = KernelParams {
            variance,
            decay,
            smoothness,
        };
        params.validate()?;
        Ok(params)
    }

    /// Exponential kernel `variance * exp(-decay * d)`.
    pub fn exponential(variance: f64, decay: f64) -> Result<Self> {
        Self::new(variance, decay, Smoothness::Half)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.variance.is_finite() && self.variance > 0.0) {
            return Err(FgpError::invalid_spec(format!(
                "kernel variance must be positive and finite (got {})",
                self.variance
            )));
        }
        if !(self.decay.is_finite() && self.decay > 0.0) {
            return Err(FgpError::invalid_spec(format!(
                "kernel decay must be positive and finite (got {})",
                self.decay
            )));
        }
        Ok(())
    }

    pub fn length_scale(&self) -> f64 {
        1.0 / self.decay
    }

    /// Covariance at Euclidean distance `d`.
    #[inline]
    pub fn cov_at(&self, d: f64) -> f64 {
        self.variance * self.smoothness.correlation(self.decay * d)
    }
}

#[inline]
pub fn distance(u: Point, v: Point) -> f64 {
    (u[0] - v[0]).hypot(u[1] - v[1])
}

/// Ordered, non-empty set of finite 2-D locations.
#[derive(Clone, Debug, PartialEq)]
pub struct LocationSet {
    points: Vec<Point>,
}

impl LocationSet {
    pub fn new(points: Vec<Point>) -> Result<Self> {
        if points.is_empty() {
            return Err(FgpError::invalid_input("location set is empty"));
        }
        if let Some(i) = points
            .iter()
            .position(|p| !(p[0].is_finite() && p[1].is_finite()))
        {
            return Err(FgpError::invalid_input(format!(
                "location {i} has non-finite coordinates"
            )));
        }
        Ok(LocationSet { points })
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn get(&self, i: usize) -> Point {
        self.points[i]
    }

    /// Smallest and largest nonzero pairwise distance, if any pair is distinct.
    pub fn distance_range(&self) -> Option<(f64, f64)> {
        let mut min = f64::INFINITY;
        let mut max = 0.0f64;
        for (i, &u) in self.points.iter().enumerate() {
            for &v in &self.points[i + 1..] {
                let d = distance(u, v);
                if d > 0.0 {
                    min = min.min(d);
                    max = max.max(d);
                }
            }
        }
        (max > 0.0).then_some((min, max))
    }

    /// Full `n x n` matrix of pairwise distances.
    pub fn distance_matrix(&self) -> Mat<f64> {
        let p = &self.points;
        Mat::from_fn(p.len(), p.len(), |i, j| distance(p[i], p[j]))
    }

    /// `|self| x |other|` matrix of cross distances.
    pub fn cross_distance_matrix(&self, other: &LocationSet) -> Mat<f64> {
        let (a, b) = (&self.points, &other.points);
        Mat::from_fn(a.len(), b.len(), |i, j| distance(a[i], b[j]))
    }
}

/// Matérn covariance between two points.
pub fn matern_cov(u: Point, v: Point, params: &KernelParams) -> Result<f64> {
    if !(u.iter().chain(v.iter()).all(|c| c.is_finite())) {
        return Err(FgpError::invalid_input("non-finite coordinate"));
    }
    Ok(params.cov_at(distance(u, v)))
}

/// Kernel matrix over one location set.
pub fn cov_matrix(a: &LocationSet, params: &KernelParams) -> Mat<f64> {
    let p = a.points();
    let n = p.len();
    let mut out = Mat::zeros(n, n);
    for j in 0..n {
        out[(j, j)] = params.variance;
        for i in j + 1..n {
            let c = params.cov_at(distance(p[i], p[j]));
            out[(i, j)] = c;
            out[(j, i)] = c;
        }
    }
    out
}

/// Cross-covariance matrix with rows indexed by `a` and columns by `b`.
pub fn cross_cov_matrix(a: &LocationSet, b: &LocationSet, params: &KernelParams) -> Mat<f64> {
    let (pa, pb) = (a.points(), b.points());
    Mat::from_fn(pa.len(), pb.len(), |i, j| {
        params.cov_at(distance(pa[i], pb[j]))
    })
}

/// Applies the kernel elementwise to a precomputed distance matrix.
pub fn cov_from_distances(distances: &Mat<f64>, params: &KernelParams) -> Mat<f64> {
    Mat::from_fn(distances.nrows(), distances.ncols(), |i, j| {
        params.cov_at(distances[(i, j)])
    })
}
