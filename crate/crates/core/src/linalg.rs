//! Small dense linear-algebra helpers on top of `nalgebra`.

use alloc::format;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

pub type Matrix = DMatrix<f64>;
pub type Vector = DVector<f64>;

/// Largest absolute entry, or 0 for an empty matrix.
pub fn max_abs(m: &Matrix) -> f64 {
    m.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()))
}

pub fn all_finite(m: &Matrix) -> bool {
    m.iter().all(|v| v.is_finite())
}

/// Relative asymmetry `max|A - Aᵀ| / max|A|` (0 for the zero matrix).
pub fn asymmetry(m: &Matrix) -> f64 {
    let scale = max_abs(m);
    if scale == 0.0 {
        return 0.0;
    }
    let n = m.nrows();
    let mut worst = 0.0_f64;
    for i in 0..n {
        for j in (i + 1)..n {
            worst = worst.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    worst / scale
}

/// Returns `(A + Aᵀ)/2`, rejecting matrices whose relative asymmetry exceeds `tol`.
pub fn symmetrize(m: &Matrix, tol: f64) -> Result<Matrix> {
    if !m.is_square() {
        return Err(Error::DimensionMismatch {
            context: "square matrix",
            expected: m.nrows(),
            found: m.ncols(),
        });
    }
    let a = asymmetry(m);
    if a > tol {
        return Err(Error::NotSymmetric { asymmetry: a });
    }
    Ok((m + m.transpose()) * 0.5)
}

/// Eigenvalues of a symmetric matrix in ascending order.
pub fn sym_eigenvalues(m: &Matrix) -> Vec<f64> {
    if m.nrows() == 0 {
        return Vec::new();
    }
    let mut ev: Vec<f64> = m.clone().symmetric_eigenvalues().iter().copied().collect();
    ev.sort_by(|a, b| a.total_cmp(b));
    ev
}

/// Spectral norm of a symmetric matrix.
pub fn sym_spectral_norm(m: &Matrix) -> f64 {
    sym_eigenvalues(m)
        .iter()
        .fold(0.0_f64, |acc, v| acc.max(v.abs()))
}

/// Inverse of a symmetric positive definite matrix via Cholesky.
pub fn spd_inverse(m: &Matrix, what: &'static str) -> Result<Matrix> {
    let chol = m.clone().cholesky().ok_or_else(|| Error::NotPd {
        what,
        min_eigenvalue: sym_eigenvalues(m).first().copied().unwrap_or(0.0),
    })?;
    Ok(chol.inverse())
}

/// Condition number of a general square matrix from its singular values.
pub fn condition_number(m: &Matrix) -> f64 {
    let sv = m.clone().singular_values();
    let max = sv.iter().fold(0.0_f64, |a, v| a.max(*v));
    let min = sv.iter().fold(f64::INFINITY, |a, v| a.min(*v));
    if min == 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Inverse of a general square matrix, refusing condition numbers above `max_cond`.
pub fn checked_inverse(m: &Matrix, what: &'static str, max_cond: f64) -> Result<Matrix> {
    let cond = condition_number(m);
    if !cond.is_finite() || cond > max_cond {
        return Err(Error::IllConditioned {
            what,
            condition: cond,
        });
    }
    m.clone().try_inverse().ok_or_else(|| Error::Singular {
        what,
        detail: format!("condition number {cond:.3e}"),
    })
}

/// Minimum-norm least-squares solution of `A x = b` using an SVD with
/// singular values below `rel_tol·σ_max` treated as zero.
pub fn min_norm_solve(a: &Matrix, b: &Vector, rel_tol: f64) -> Vector {
    let svd = a.clone().svd(true, true);
    let smax = svd.singular_values.iter().fold(0.0_f64, |m, v| m.max(*v));
    let cutoff = rel_tol * smax;
    let u = svd.u.as_ref().expect("u requested");
    let vt = svd.v_t.as_ref().expect("v_t requested");
    let mut x = Vector::zeros(a.ncols());
    for (k, &s) in svd.singular_values.iter().enumerate() {
        if s > cutoff && s > 0.0 {
            let coef = u.column(k).dot(b) / s;
            x += vt.row(k).transpose() * coef;
        }
    }
    x
}

/// Numerical rank with the same relative threshold convention as [`min_norm_solve`].
pub fn numerical_rank(a: &Matrix, rel_tol: f64) -> usize {
    let sv = a.clone().singular_values();
    let smax = sv.iter().fold(0.0_f64, |m, v| m.max(*v));
    sv.iter().filter(|&&s| s > rel_tol * smax && s > 0.0).count()
}

/// Solves a symmetric positive definite banded system in place.
///
/// `bands[i][k]` holds entry `(i, i + k)` for `k <= bw`; only the upper band
/// is stored.
pub(crate) struct BandedSpd {
    n: usize,
    bw: usize,
    data: Vec<f64>,
}

impl BandedSpd {
    pub(crate) fn zeros(n: usize, bw: usize) -> Self {
        Self {
            n,
            bw,
            data: alloc::vec![0.0; n * (bw + 1)],
        }
    }

    #[inline]
    fn idx(&self, i: usize, k: usize) -> usize {
        i * (self.bw + 1) + k
    }

    /// Adds `v` to entry (i, j); entries below the diagonal are mirrored.
    pub(crate) fn add(&mut self, i: usize, j: usize, v: f64) {
        let (r, c) = if i <= j { (i, j) } else { (j, i) };
        debug_assert!(c - r <= self.bw);
        let k = self.idx(r, c - r);
        self.data[k] += v;
    }

    pub(crate) fn diag(&self, i: usize) -> f64 {
        self.data[self.idx(i, 0)]
    }

    /// Symmetric scaling `D A D` with `D = diag(d)`.
    pub(crate) fn scale(&mut self, d: &[f64]) {
        for i in 0..self.n {
            for k in 0..=self.bw.min(self.n - 1 - i) {
                let idx = self.idx(i, k);
                self.data[idx] *= d[i] * d[i + k];
            }
        }
    }

    /// Cholesky factorization `A = Uᵀ U` followed by two triangular solves.
    pub(crate) fn solve(mut self, rhs: &mut [f64]) -> Result<()> {
        let n = self.n;
        let bw = self.bw;
        for i in 0..n {
            let mut d = self.data[self.idx(i, 0)];
            let lo = i.saturating_sub(bw);
            for p in lo..i {
                let u = self.data[self.idx(p, i - p)];
                d -= u * u;
            }
            if !(d > 0.0) {
                return Err(Error::Singular {
                    what: "normal equations",
                    detail: format!("pivot {d:.3e} at unknown {i}"),
                });
            }
            let d = libm::sqrt(d);
            let di = self.idx(i, 0);
            self.data[di] = d;
            let hi = (i + bw).min(n - 1);
            for j in (i + 1)..=hi {
                let mut s = self.data[self.idx(i, j - i)];
                let lo_j = j.saturating_sub(bw).max(lo);
                for p in lo_j..i {
                    s -= self.data[self.idx(p, i - p)] * self.data[self.idx(p, j - p)];
                }
                let ij = self.idx(i, j - i);
                self.data[ij] = s / d;
            }
        }
        // Uᵀ y = rhs
        for i in 0..n {
            let mut s = rhs[i];
            let lo = i.saturating_sub(bw);
            for p in lo..i {
                s -= self.data[self.idx(p, i - p)] * rhs[p];
            }
            rhs[i] = s / self.data[self.idx(i, 0)];
        }
        // U x = y
        for i in (0..n).rev() {
            let mut s = rhs[i];
            let hi = (i + bw).min(n - 1);
            for j in (i + 1)..=hi {
                s -= self.data[self.idx(i, j - i)] * rhs[j];
            }
            rhs[i] = s / self.data[self.idx(i, 0)];
        }
        Ok(())
    }
}
