//! RBF kernel evaluation and the kernel-induced distance.

use ndarray::{Array2, ArrayView1, ArrayView2, Zip};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Exponent above which the kernel distance saturates.
pub const DISTANCE_EXP_CAP: f64 = 700.0;

/// RBF kernel `k(x, x') = exp(-gamma * |x - x'|^2)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    gamma: f64,
}

impl KernelSpec {
    pub fn rbf(gamma: f64) -> Result<Self> {
        if !(gamma.is_finite() && gamma > 0.0) {
            return Err(Error::validation(format!("RBF gamma must be positive, got {gamma}")));
        }
        Ok(Self { gamma })
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    /// Kernel value from a squared Euclidean distance. Clamped away from 0
    /// so the kernel distance stays finite.
    #[inline]
    pub fn value_from_sq(&self, sq: f64) -> f64 {
        (-self.gamma * sq).exp().max(f64::MIN_POSITIVE)
    }

    /// `1/k - 1 = expm1(gamma * sq)`, capped at `exp(700)`.
    #[inline]
    pub fn distance_from_sq(&self, sq: f64) -> f64 {
        let e = self.gamma * sq;
        if e > DISTANCE_EXP_CAP {
            DISTANCE_EXP_CAP.exp()
        } else {
            e.exp_m1()
        }
    }

    /// `ln t` for the kernel distance `t = exp(gamma * sq) - 1`, exact for
    /// every `sq` (no saturation); `-inf` at `sq = 0`.
    pub fn log_distance_from_sq(&self, sq: f64) -> f64 {
        let e = self.gamma * sq;
        if e > 1.0 {
            e + (-(-e).exp()).ln_1p()
        } else {
            e.exp_m1().ln()
        }
    }

    /// Unchecked kernel value for equal-length rows.
    #[inline]
    pub fn eval(&self, x: ArrayView1<f64>, y: ArrayView1<f64>) -> f64 {
        self.value_from_sq(sq_dist(x, y))
    }
}

#[inline]
pub fn sq_dist(x: ArrayView1<f64>, y: ArrayView1<f64>) -> f64 {
    Zip::from(&x).and(&y).fold(0.0, |acc, a, b| {
        let d = a - b;
        acc + d * d
    })
}

fn check_dims(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(Error::DimensionMismatch { expected: a, found: b });
    }
    Ok(())
}

pub fn kernel_value(spec: &KernelSpec, x: ArrayView1<f64>, y: ArrayView1<f64>) -> Result<f64> {
    check_dims(x.len(), y.len())?;
    Ok(spec.eval(x, y))
}

pub fn kernel_distance(spec: &KernelSpec, x: ArrayView1<f64>, y: ArrayView1<f64>) -> Result<f64> {
    check_dims(x.len(), y.len())?;
    Ok(spec.distance_from_sq(sq_dist(x, y)))
}

/// `G[i, j] = k(a_i, b_j)`, rows computed in parallel.
pub fn gram_matrix(spec: &KernelSpec, a: ArrayView2<f64>, b: ArrayView2<f64>) -> Result<Array2<f64>> {
    check_dims(a.ncols(), b.ncols())?;
    let (n, m) = (a.nrows(), b.nrows());
    let mut out = Array2::zeros((n, m));
    out.outer_iter_mut()
        .into_par_iter()
        .enumerate()
        .for_each(|(i, mut row)| {
            let ai = a.row(i);
            for j in 0..m {
                row[j] = spec.eval(ai, b.row(j));
            }
        });
    Ok(out)
}

/// Symmetric Gram matrix of `a` with itself; the diagonal is exactly 1.
pub fn self_gram(spec: &KernelSpec, a: ArrayView2<f64>) -> Array2<f64> {
    let n = a.nrows();
    let mut out = Array2::zeros((n, n));
    out.outer_iter_mut()
        .into_par_iter()
        .enumerate()
        .for_each(|(i, mut row)| {
            let ai = a.row(i);
            for j in 0..n {
                row[j] = if i == j { 1.0 } else { spec.eval(ai, a.row(j)) };
            }
        });
    out
}

/// Pairwise squared Euclidean distances between rows of `a` and `b`.
pub fn sq_dist_matrix(a: ArrayView2<f64>, b: ArrayView2<f64>) -> Result<Array2<f64>> {
    check_dims(a.ncols(), b.ncols())?;
    let m = b.nrows();
    let mut out = Array2::zeros((a.nrows(), m));
    out.outer_iter_mut()
        .into_par_iter()
        .enumerate()
        .for_each(|(i, mut row)| {
            for j in 0..m {
                row[j] = sq_dist(a.row(i), b.row(j));
            }
        });
    Ok(out)
}
