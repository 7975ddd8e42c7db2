//! Compressed sparse row storage with a shareable sparsity pattern.
//!
//! Every matrix assembled on a given mesh and DOF map uses the same pattern,
//! so linear combinations reduce to axpy on the value arrays.

use std::io::Write;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SparsityPattern {
    n: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
}

impl SparsityPattern {
    /// Builds a square pattern from per-row column lists. Columns are sorted
    /// and deduplicated.
    pub fn from_rows(rows: Vec<Vec<usize>>) -> Self {
        let n = rows.len();
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut col_idx = Vec::new();
        row_ptr.push(0);
        for mut cols in rows {
            cols.sort_unstable();
            cols.dedup();
            col_idx.extend(cols);
            row_ptr.push(col_idx.len());
        }
        Self {
            n,
            row_ptr,
            col_idx,
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.col_idx.len()
    }

    pub fn row(&self, i: usize) -> &[usize] {
        &self.col_idx[self.row_ptr[i]..self.row_ptr[i + 1]]
    }

    /// Position of `(i, j)` in the value array, if structurally present.
    pub fn position(&self, i: usize, j: usize) -> Option<usize> {
        let start = self.row_ptr[i];
        self.row(i).binary_search(&j).ok().map(|k| start + k)
    }

    /// Half bandwidth: max |i - j| over stored entries.
    pub fn bandwidth(&self) -> usize {
        (0..self.n)
            .flat_map(|i| self.row(i).iter().map(move |&j| i.abs_diff(j)))
            .max()
            .unwrap_or(0)
    }
}

/// Square sparse matrix in CSR form.
#[derive(Debug, Clone)]
pub struct CsrMatrix {
    pattern: Arc<SparsityPattern>,
    values: Vec<f64>,
}

impl CsrMatrix {
    pub fn zeros(pattern: Arc<SparsityPattern>) -> Self {
        let values = vec![0.0; pattern.nnz()];
        Self { pattern, values }
    }

    /// Identity matrix with a diagonal pattern.
    pub fn identity(n: usize) -> Self {
        let pattern = Arc::new(SparsityPattern::from_rows((0..n).map(|i| vec![i]).collect()));
        Self {
            pattern,
            values: vec![1.0; n],
        }
    }

    /// Converts a dense matrix, storing every entry whose magnitude exceeds `drop_tol`
    /// plus the diagonal.
    pub fn from_dense(a: &DMatrix<f64>, drop_tol: f64) -> Self {
        let n = a.nrows();
        let rows = (0..n)
            .map(|i| {
                (0..n)
                    .filter(|&j| i == j || a[(i, j)].abs() > drop_tol)
                    .collect()
            })
            .collect();
        let pattern = Arc::new(SparsityPattern::from_rows(rows));
        let mut m = Self::zeros(pattern);
        for i in 0..n {
            for k in m.pattern.row_ptr[i]..m.pattern.row_ptr[i + 1] {
                let j = m.pattern.col_idx[k];
                m.values[k] = a[(i, j)];
            }
        }
        m
    }

    pub fn pattern(&self) -> &Arc<SparsityPattern> {
        &self.pattern
    }

    pub fn nrows(&self) -> usize {
        self.pattern.n
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.pattern.position(i, j).map_or(0.0, |k| self.values[k])
    }

    /// Adds `v` to entry `(i, j)`. Panics if the entry is not in the pattern.
    pub fn add_to(&mut self, i: usize, j: usize, v: f64) {
        let k = self
            .pattern
            .position(i, j)
            .unwrap_or_else(|| panic!("entry ({i}, {j}) not in sparsity pattern"));
        self.values[k] += v;
    }

    /// Iterates `(row, col, value)` over stored entries.
    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.nrows()).flat_map(move |i| {
            let range = self.pattern.row_ptr[i]..self.pattern.row_ptr[i + 1];
            range.map(move |k| (i, self.pattern.col_idx[k], self.values[k]))
        })
    }

    fn check_same_pattern(&self, other: &CsrMatrix) -> Result<()> {
        if Arc::ptr_eq(&self.pattern, &other.pattern) || *self.pattern == *other.pattern {
            Ok(())
        } else {
            Err(Error::Dimension("sparsity patterns differ".into()))
        }
    }

    /// `self += alpha * other`; both must share a pattern.
    pub fn axpy(&mut self, alpha: f64, other: &CsrMatrix) -> Result<()> {
        self.check_same_pattern(other)?;
        for (v, w) in self.values.iter_mut().zip(&other.values) {
            *v += alpha * w;
        }
        Ok(())
    }

    pub fn scaled(&self, alpha: f64) -> CsrMatrix {
        CsrMatrix {
            pattern: self.pattern.clone(),
            values: self.values.iter().map(|v| alpha * v).collect(),
        }
    }

    /// `self - shift * other` on a shared pattern.
    pub fn shifted(&self, shift: f64, other: &CsrMatrix) -> Result<CsrMatrix> {
        let mut out = self.clone();
        out.axpy(-shift, other)?;
        Ok(out)
    }

    pub fn mul_slice_into(&self, x: &[f64], y: &mut [f64]) {
        let p = &self.pattern;
        for i in 0..p.n {
            let mut s = 0.0;
            for k in p.row_ptr[i]..p.row_ptr[i + 1] {
                s += self.values[k] * x[p.col_idx[k]];
            }
            y[i] = s;
        }
    }

    pub fn mul_vec(&self, x: &DVector<f64>) -> DVector<f64> {
        let mut y = DVector::zeros(self.nrows());
        self.mul_slice_into(x.as_slice(), y.as_mut_slice());
        y
    }

    /// Sparse times dense block.
    pub fn mul_dense(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let mut y = DMatrix::zeros(self.nrows(), x.ncols());
        for c in 0..x.ncols() {
            let xs = x.column(c);
            let mut yc = y.column_mut(c);
            let p = &self.pattern;
            for i in 0..p.n {
                let mut s = 0.0;
                for k in p.row_ptr[i]..p.row_ptr[i + 1] {
                    s += self.values[k] * xs[p.col_idx[k]];
                }
                yc[i] = s;
            }
        }
        y
    }

    /// `xᵀ A y` for dense blocks (result `x.ncols() × y.ncols()`).
    pub fn bilinear(&self, x: &DMatrix<f64>, y: &DMatrix<f64>) -> DMatrix<f64> {
        x.transpose() * self.mul_dense(y)
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let n = self.nrows();
        let mut d = DMatrix::zeros(n, n);
        for (i, j, v) in self.triplets() {
            d[(i, j)] += v;
        }
        d
    }

    /// Max |a_ij - a_ji| over stored entries.
    pub fn max_asymmetry(&self) -> f64 {
        self.triplets()
            .map(|(i, j, v)| (v - self.get(j, i)).abs())
            .fold(0.0, f64::max)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn row_sums(&self) -> Vec<f64> {
        let p = &self.pattern;
        (0..p.n)
            .map(|i| self.values[p.row_ptr[i]..p.row_ptr[i + 1]].iter().sum())
            .collect()
    }

    /// Writes one `row col value` triple per line with 0-based indices.
    pub fn write_coordinate<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        for (i, j, v) in self.triplets() {
            writeln!(w, "{i} {j} {v:.17e}")?;
        }
        Ok(())
    }

    /// Parses the coordinate format written by [`CsrMatrix::write_coordinate`].
    pub fn read_coordinate(text: &str, n: usize) -> Result<Self> {
        let mut entries = Vec::new();
        let mut rows = vec![Vec::new(); n];
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let parts: Vec<&str> = line.split_whitespace().collect();
            let bad = || Error::Config(format!("malformed coordinate line {}", lineno + 1));
            if parts.len() != 3 {
                return Err(bad());
            }
            let i: usize = parts[0].parse().map_err(|_| bad())?;
            let j: usize = parts[1].parse().map_err(|_| bad())?;
            let v: f64 = parts[2].parse().map_err(|_| bad())?;
            if i >= n || j >= n {
                return Err(bad());
            }
            rows[i].push(j);
            entries.push((i, j, v));
        }
        let mut m = Self::zeros(Arc::new(SparsityPattern::from_rows(rows)));
        for (i, j, v) in entries {
            m.add_to(i, j, v);
        }
        Ok(m)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> CsrMatrix {
        let a = DMatrix::from_row_slice(3, 3, &[4.0, -1.0, 0.0, -1.0, 4.0, -1.0, 0.0, -1.0, 4.0]);
        CsrMatrix::from_dense(&a, 0.0)
    }

    #[test]
    fn matvec_matches_dense() {
        let a = sample();
        let x = DVector::from_vec(vec![1.0, 2.0, 3.0]);
        let y = a.mul_vec(&x);
        assert_eq!(y.as_slice(), &[2.0, 4.0, 10.0]);
        assert_eq!(a.bandwidth_of_pattern(), 1);
    }

    #[test]
    fn coordinate_round_trip() {
        let a = sample();
        let mut buf = Vec::new();
        a.write_coordinate(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 7);
        let b = CsrMatrix::read_coordinate(&text, 3).unwrap();
        assert_eq!(a.to_dense(), b.to_dense());
    }

    #[test]
    fn axpy_rejects_foreign_pattern() {
        let mut a = sample();
        let b = CsrMatrix::identity(3);
        assert!(a.axpy(1.0, &b).is_err());
    }

    impl CsrMatrix {
        fn bandwidth_of_pattern(&self) -> usize {
            self.pattern.bandwidth()
        }
    }
}
