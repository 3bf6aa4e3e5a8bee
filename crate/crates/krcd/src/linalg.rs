//! Dense symmetric positive definite solves via Cholesky with jitter escalation.
//!
//! The regularized Gram matrices are SPD by construction, but rank-deficient
//! kernels plus a tiny ridge can leave the trailing pivots at the level of
//! accumulated rounding. When factorization hits a non-positive pivot the
//! ridge is escalated by a factor of 10, at most three times, before giving
//! up with a numeric error.

use crate::error::{Error, Result};
use ndarray::{Array1, Array2, ArrayView1, ArrayView2};

/// Lower-triangular Cholesky factor of an SPD matrix, or the failing pivot index.
fn cholesky(a: &Array2<f64>) -> std::result::Result<Array2<f64>, usize> {
    let n = a.nrows();
    let mut l = Array2::<f64>::zeros((n, n));
    for j in 0..n {
        let mut d = a[(j, j)];
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if d <= 0.0 || d.is_nan() || d.is_infinite() {
            return Err(j);
        }
        let dj = d.sqrt();
        l[(j, j)] = dj;
        for i in (j + 1)..n {
            let mut s = a[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / dj;
        }
    }
    Ok(l)
}

/// A factored SPD system `A + jitter*I = L L^T`.
///
/// `jitter` records any extra ridge added on top of the caller's matrix so
/// the escalation is observable.
pub struct SpdFactor {
    l: Array2<f64>,
    pub jitter: f64,
}

impl SpdFactor {
    /// Factors `a`, escalating an additional diagonal shift by 10x (starting
    /// from `base_shift`) for up to three retries if a pivot fails.
    pub fn new(a: &Array2<f64>, base_shift: f64) -> Result<Self> {
        if a.nrows() != a.ncols() {
            return Err(Error::argument(format!(
                "SPD factorization needs a square matrix, got {}x{}",
                a.nrows(),
                a.ncols()
            )));
        }
        if let Ok(l) = cholesky(a) {
            return Ok(SpdFactor { l, jitter: 0.0 });
        }
        let scale = a.diag().iter().map(|d| d.abs()).sum::<f64>() / a.nrows().max(1) as f64;
        let mut shift = if base_shift > 0.0 {
            base_shift
        } else {
            1e-12 * scale.max(1.0)
        };
        for _ in 0..3 {
            let mut shifted = a.clone();
            for i in 0..a.nrows() {
                shifted[(i, i)] += shift;
            }
            if let Ok(l) = cholesky(&shifted) {
                return Ok(SpdFactor { l, jitter: shift });
            }
            shift *= 10.0;
        }
        Err(Error::Numeric {
            message: "Cholesky factorization failed after jitter escalation".into(),
            condition_estimate: scale / shift,
        })
    }

    /// Solves `(A + jitter*I) x = b` for a single right-hand side.
    pub fn solve_vec(&self, b: ArrayView1<f64>) -> Array1<f64> {
        let n = self.l.nrows();
        debug_assert_eq!(b.len(), n);
        let mut x = b.to_owned();
        // forward: L y = b
        for i in 0..n {
            let mut s = x[i];
            for k in 0..i {
                s -= self.l[(i, k)] * x[k];
            }
            x[i] = s / self.l[(i, i)];
        }
        // backward: L^T x = y
        for i in (0..n).rev() {
            let mut s = x[i];
            for k in (i + 1)..n {
                s -= self.l[(k, i)] * x[k];
            }
            x[i] = s / self.l[(i, i)];
        }
        x
    }

    /// Solves `(A + jitter*I) X = B` column-by-column for a matrix right-hand side.
    pub fn solve_mat(&self, b: ArrayView2<f64>) -> Array2<f64> {
        let n = self.l.nrows();
        debug_assert_eq!(b.nrows(), n);
        let m = b.ncols();
        let mut x = b.to_owned();
        for j in 0..m {
            for i in 0..n {
                let mut s = x[(i, j)];
                for k in 0..i {
                    s -= self.l[(i, k)] * x[(k, j)];
                }
                x[(i, j)] = s / self.l[(i, i)];
            }
            for i in (0..n).rev() {
                let mut s = x[(i, j)];
                for k in (i + 1)..n {
                    s -= self.l[(k, i)] * x[(k, j)];
                }
                x[(i, j)] = s / self.l[(i, i)];
            }
        }
        x
    }

    /// Forward substitution only: solves `L y = b` for each column of `b`.
    pub fn solve_lower_mat(&self, b: ArrayView2<f64>) -> Array2<f64> {
        let n = self.l.nrows();
        debug_assert_eq!(b.nrows(), n);
        let m = b.ncols();
        let mut x = b.to_owned();
        for j in 0..m {
            for i in 0..n {
                let mut s = x[(i, j)];
                for k in 0..i {
                    s -= self.l[(i, k)] * x[(k, j)];
                }
                x[(i, j)] = s / self.l[(i, i)];
            }
        }
        x
    }
}

/// Symmetrizes a numerically almost-symmetric matrix as (M + M^T)/2.
pub fn symmetrize(m: &Array2<f64>) -> Array2<f64> {
    let mt = m.t();
    let mut out = m.clone();
    out.zip_mut_with(&mt, |a, &b| *a = 0.5 * (*a + b));
    out
}
