//! Small dense complex helpers for the `N × N` interferometric matrices.

use ndarray::Array2;
use num_complex::Complex64;

use crate::error::{Result, TomoError};

pub type CMatrix = Array2<Complex64>;

pub fn trace_re(m: &CMatrix) -> f64 {
    m.diag().iter().map(|v| v.re).sum()
}

pub fn frobenius_sq(m: &CMatrix) -> f64 {
    m.iter().map(|v| v.norm_sqr()).sum()
}

pub fn frobenius(m: &CMatrix) -> f64 {
    frobenius_sq(m).sqrt()
}

/// Largest `|M - M^H|` entry.
pub fn hermitian_defect(m: &CMatrix) -> f64 {
    let n = m.nrows();
    let mut worst = 0.0f64;
    for r in 0..n {
        for c in r..n {
            worst = worst.max((m[[r, c]] - m[[c, r]].conj()).norm());
        }
    }
    worst
}

pub(crate) fn ensure_square(m: &CMatrix, n: usize, what: &str) -> Result<()> {
    if m.nrows() != n || m.ncols() != n {
        return Err(TomoError::dim(format!(
            "{what} is {}x{}, expected {n}x{n}",
            m.nrows(),
            m.ncols()
        )));
    }
    Ok(())
}

pub(crate) fn ensure_hermitian(m: &CMatrix, what: &str) -> Result<()> {
    let scale = m.iter().fold(0.0f64, |acc, v| acc.max(v.norm())).max(f64::MIN_POSITIVE);
    if hermitian_defect(m) > 1e-10 * scale {
        return Err(TomoError::invalid(format!("{what} is not Hermitian")));
    }
    Ok(())
}

/// Upper triangle of a Hermitian matrix packed row by row, diagonal first in
/// each row. Evaluating `a^H M a` from this layout touches each pair once.
#[derive(Debug, Clone)]
pub(crate) struct PackedHermitian {
    n: usize,
    diag: Vec<f64>,
    upper: Vec<Complex64>,
}

impl PackedHermitian {
    pub fn new(m: &CMatrix) -> Self {
        let n = m.nrows();
        let diag = (0..n).map(|i| m[[i, i]].re).collect();
        let mut upper = Vec::with_capacity(n * (n - 1) / 2);
        for r in 0..n {
            for c in (r + 1)..n {
                upper.push(m[[r, c]]);
            }
        }
        PackedHermitian { n, diag, upper }
    }

    /// `Re(a^H M a)` for the Hermitian matrix this was packed from.
    #[inline]
    pub fn quadratic(&self, a: &[Complex64]) -> f64 {
        let mut acc = 0.0;
        let mut idx = 0;
        for m in 0..self.n {
            acc += self.diag[m] * a[m].norm_sqr();
            let mut t = Complex64::new(0.0, 0.0);
            for k in (m + 1)..self.n {
                t += self.upper[idx] * a[k];
                idx += 1;
            }
            let am = a[m];
            acc += 2.0 * (am.re * t.re + am.im * t.im);
        }
        acc
    }
}

/// Inverse of a Hermitian positive-definite matrix through its Cholesky
/// factor. Returns `None` when a pivot falls below `1e-14` of the largest
/// diagonal entry.
pub fn hermitian_pd_inverse(m: &CMatrix) -> Option<CMatrix> {
    let n = m.nrows();
    let max_diag = (0..n).map(|i| m[[i, i]].re).fold(0.0f64, f64::max);
    if max_diag <= 0.0 {
        return None;
    }
    // m = L L^H
    let mut l = CMatrix::zeros((n, n));
    for j in 0..n {
        let mut d = m[[j, j]].re;
        for k in 0..j {
            d -= l[[j, k]].norm_sqr();
        }
        if d <= 1e-14 * max_diag {
            return None;
        }
        let d = d.sqrt();
        l[[j, j]] = Complex64::new(d, 0.0);
        for i in (j + 1)..n {
            let mut s = m[[i, j]];
            for k in 0..j {
                s -= l[[i, k]] * l[[j, k]].conj();
            }
            l[[i, j]] = s / d;
        }
    }
    // L^{-1} by forward substitution, then M^{-1} = L^{-H} L^{-1}.
    let mut linv = CMatrix::zeros((n, n));
    for c in 0..n {
        for r in c..n {
            let mut s = if r == c {
                Complex64::new(1.0, 0.0)
            } else {
                Complex64::new(0.0, 0.0)
            };
            for k in c..r {
                s -= l[[r, k]] * linv[[k, c]];
            }
            linv[[r, c]] = s / l[[r, r]];
        }
    }
    let mut inv = CMatrix::zeros((n, n));
    for r in 0..n {
        for c in r..n {
            let mut s = Complex64::new(0.0, 0.0);
            for k in c.max(r)..n {
                s += linv[[k, r]].conj() * linv[[k, c]];
            }
            inv[[r, c]] = s;
            inv[[c, r]] = s.conj();
        }
        inv[[r, r]] = Complex64::new(inv[[r, r]].re, 0.0);
    }
    Some(inv)
}
