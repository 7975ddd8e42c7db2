//! Banded symmetric LDLᵀ factorization without pivoting.
//!
//! Used for shifted pencils `A - σM` whose shift sits between eigenvalues.
//! The count of negative pivots equals the number of eigenvalues below σ
//! (Sylvester's law of inertia).

use nalgebra::{DMatrix, DVector};

use super::sparse::CsrMatrix;
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct BandedLdlt {
    n: usize,
    bw: usize,
    /// Row `i` holds `L[i, i-bw..i]` in slots `0..bw`; slot `bw` is unused.
    lower: Vec<f64>,
    diag: Vec<f64>,
}

impl BandedLdlt {
    /// Factors `a - shift * b`, where both matrices share a sparsity pattern.
    pub fn factor_shifted(a: &CsrMatrix, shift: f64, b: &CsrMatrix) -> Result<Self> {
        let n = a.nrows();
        let bw = a.pattern().bandwidth();
        let w = bw + 1;
        let mut band = vec![0.0; n * w];
        let same = std::sync::Arc::ptr_eq(a.pattern(), b.pattern());
        if same {
            let (av, bv) = (a.values(), b.values());
            let mut k = 0;
            for (i, j, _) in a.triplets() {
                if j <= i {
                    band[i * w + (j + bw - i)] = av[k] - shift * bv[k];
                }
                k += 1;
            }
        } else {
            for (i, j, v) in a.triplets() {
                if j <= i {
                    band[i * w + (j + bw - i)] += v;
                }
            }
            for (i, j, v) in b.triplets() {
                if j <= i {
                    if i - j > bw {
                        return Err(Error::Dimension("shift matrix exceeds bandwidth".into()));
                    }
                    band[i * w + (j + bw - i)] -= shift * v;
                }
            }
        }
        Self::factor_band(n, bw, band)
    }

    pub fn factor(a: &CsrMatrix) -> Result<Self> {
        let n = a.nrows();
        let bw = a.pattern().bandwidth();
        let w = bw + 1;
        let mut band = vec![0.0; n * w];
        for (i, j, v) in a.triplets() {
            if j <= i {
                band[i * w + (j + bw - i)] = v;
            }
        }
        Self::factor_band(n, bw, band)
    }

    /// Right-looking elimination: each pivot column is scaled and its rank-one
    /// update applied row by row to the trailing band.
    fn factor_band(n: usize, bw: usize, mut band: Vec<f64>) -> Result<Self> {
        let w = bw + 1;
        let mut diag = vec![0.0; n];
        let scale = (0..n).map(|i| band[i * w + bw].abs()).fold(0.0, f64::max);
        let tiny = scale * 1e-20;
        let mut t = vec![0.0; bw];
        for k in 0..n {
            let dk = band[k * w + bw];
            if !dk.is_finite() || dk.abs() <= tiny {
                return Err(Error::Singular(format!("zero pivot at row {k}")));
            }
            diag[k] = dk;
            let hi = (k + bw + 1).min(n);
            for i in k + 1..hi {
                let pos = i * w + (k + bw - i);
                t[i - k - 1] = band[pos];
                band[pos] /= dk;
            }
            for i in k + 1..hi {
                let li = band[i * w + (k + bw - i)];
                if li == 0.0 {
                    continue;
                }
                let row = &mut band[i * w + (k + 1 + bw - i)..i * w + w];
                for (r, tv) in row.iter_mut().zip(&t[..i - k]) {
                    *r -= li * tv;
                }
            }
        }
        Ok(Self {
            n,
            bw,
            lower: band,
            diag,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Number of negative pivots.
    pub fn negative_count(&self) -> usize {
        self.diag.iter().filter(|&&d| d < 0.0).count()
    }

    pub fn min_abs_pivot(&self) -> f64 {
        self.diag.iter().fold(f64::INFINITY, |m, d| m.min(d.abs()))
    }

    pub fn solve_in_place(&self, x: &mut [f64]) {
        let (n, bw, w) = (self.n, self.bw, self.bw + 1);
        for i in 0..n {
            let lo = i.saturating_sub(bw);
            let row = &self.lower[i * w + (lo + bw - i)..i * w + bw];
            let dot = dot(row, &x[lo..i]);
            x[i] -= dot;
        }
        for (xi, d) in x.iter_mut().zip(&self.diag) {
            *xi /= d;
        }
        for i in (0..n).rev() {
            let xi = x[i];
            let lo = i.saturating_sub(bw);
            let row = &self.lower[i * w + (lo + bw - i)..i * w + bw];
            for (xj, l) in x[lo..i].iter_mut().zip(row) {
                *xj -= l * xi;
            }
        }
    }

    pub fn solve(&self, b: &DVector<f64>) -> DVector<f64> {
        let mut x = b.clone();
        self.solve_in_place(x.as_mut_slice());
        x
    }

    pub fn solve_block(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        let mut x = b.clone();
        for c in 0..x.ncols() {
            let mut col = x.column_mut(c);
            self.solve_in_place(col.as_mut_slice());
        }
        x
    }
}

/// Dot product with four independent accumulators.
#[inline(always)]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut s = [0.0; 4];
    let (ca, cb) = (a.chunks_exact(4), b.chunks_exact(4));
    let tail: f64 = ca.remainder().iter().zip(cb.remainder()).map(|(x, y)| x * y).sum();
    for (x, y) in ca.zip(cb) {
        for k in 0..4 {
            s[k] += x[k] * y[k];
        }
    }
    (s[0] + s[1]) + (s[2] + s[3]) + tail
}
