//! Generalized symmetric eigenproblems `A u = λ M u`, eigenvalue clusters and
//! sign normalization.
//!
//! Small pencils are reduced to a dense standard problem through the
//! Cholesky factor of `M`. Larger ones use shift-invert block subspace
//! iteration on a banded LDLᵀ factorization of `A - σM`; the inertia of that
//! factorization gives the global index of every converged eigenvalue.

use std::ops::Range;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{generalized_eigen, BandedLdlt, CsrMatrix};

/// Pencils up to this size are solved densely by [`solve_gevp`].
pub const DENSE_LIMIT: usize = 600;

/// Relative residual tolerance of the iterative solver.
pub const ITERATIVE_TOL: f64 = 1e-11;

/// Default relative tolerance for grouping eigenvalues into a cluster.
pub const CLUSTER_TOL: f64 = 1e-6;

#[derive(Debug, Clone)]
pub struct Eigenpairs {
    /// Ascending.
    pub values: Vec<f64>,
    /// M-orthonormal columns.
    pub vectors: DMatrix<f64>,
}

impl Eigenpairs {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Max over pairs of `‖A u − λ M u‖₂ / (λ ‖u‖_M)`.
    pub fn max_relative_residual(&self, a: &CsrMatrix, m: &CsrMatrix) -> f64 {
        let au = a.mul_dense(&self.vectors);
        let mu = m.mul_dense(&self.vectors);
        (0..self.len())
            .map(|k| {
                let r = au.column(k) - mu.column(k) * self.values[k];
                let unorm = self.vectors.column(k).dot(&mu.column(k)).sqrt();
                r.norm() / (self.values[k].abs() * unorm)
            })
            .fold(0.0, f64::max)
    }
}

/// Smallest `count` eigenpairs of a dense pencil.
pub fn solve_gevp_dense(a: &DMatrix<f64>, m: &DMatrix<f64>, count: usize) -> Result<Eigenpairs> {
    if count > a.nrows() {
        return Err(Error::Dimension(format!(
            "requested {count} eigenpairs of a {}-dimensional pencil",
            a.nrows()
        )));
    }
    let (vals, vecs) = generalized_eigen(a, m)?;
    if vals.len() > 0 && vals[0] <= 0.0 {
        return Err(Error::NotPositiveDefinite(format!(
            "stiffness matrix has eigenvalue {:e}",
            vals[0]
        )));
    }
    Ok(Eigenpairs {
        values: vals.iter().take(count).copied().collect(),
        vectors: vecs.columns(0, count).into_owned(),
    })
}

/// Smallest `count` eigenpairs, dense for small pencils and iterative otherwise.
pub fn solve_gevp(a: &CsrMatrix, m: &CsrMatrix, count: usize) -> Result<Eigenpairs> {
    if a.nrows() <= DENSE_LIMIT {
        solve_gevp_dense(&a.to_dense(), &m.to_dense(), count)
    } else {
        solve_gevp_sparse(a, m, count)
    }
}

/// Smallest `count` eigenpairs by inverse block subspace iteration.
pub fn solve_gevp_sparse(a: &CsrMatrix, m: &CsrMatrix, count: usize) -> Result<Eigenpairs> {
    let n = a.nrows();
    if count > n {
        return Err(Error::Dimension(format!(
            "requested {count} eigenpairs of a {n}-dimensional pencil"
        )));
    }
    let p = (2 * count).max(count + 8).min(n);
    let x0 = scrambled_block(n, p, 0);
    let solver = ShiftInvert::new(a, m, 0.0)?;
    if solver.below_shift() > 0 {
        return Err(Error::NotPositiveDefinite(
            "stiffness matrix has non-positive eigenvalues".into(),
        ));
    }
    let (pairs, _) = solver.subspace_iteration(x0, 0..count, ITERATIVE_TOL, 500)?;
    Ok(pairs)
}

/// Deterministic, well-mixed start block.
fn scrambled_block(n: usize, p: usize, salt: usize) -> DMatrix<f64> {
    DMatrix::from_fn(n, p, |i, j| {
        let x = ((i * 7919 + (j + salt) * 104_729) as f64 * 0.618_033_988_749_895).fract();
        (x * 12.9898).sin() + 0.5 * ((i + 1) as f64 * (j + 1 + salt) as f64).cos()
    })
}

/// Factorization of `A − σM` together with the pencil.
pub struct ShiftInvert<'a> {
    a: &'a CsrMatrix,
    m: &'a CsrMatrix,
    shift: f64,
    ldlt: BandedLdlt,
}

impl<'a> ShiftInvert<'a> {
    pub fn new(a: &'a CsrMatrix, m: &'a CsrMatrix, shift: f64) -> Result<Self> {
        let ldlt = BandedLdlt::factor_shifted(a, shift, m)?;
        Ok(Self { a, m, shift, ldlt })
    }

    /// Number of eigenvalues strictly below the shift.
    pub fn below_shift(&self) -> usize {
        self.ldlt.negative_count()
    }

    /// Block subspace iteration for the eigenvalues closest to the shift.
    ///
    /// `wanted` lists global (ascending) indices; the iteration stops once
    /// every wanted pair meets the residual tolerance. Returns the wanted
    /// pairs and the number of iterations.
    pub fn subspace_iteration(
        &self,
        mut x: DMatrix<f64>,
        wanted: Range<usize>,
        tol: f64,
        max_iter: usize,
    ) -> Result<(Eigenpairs, usize)> {
        let nu = self.below_shift();
        let p = x.ncols();
        let mut last_res = f64::INFINITY;
        let mut mx = self.m.mul_dense(&x);
        for it in 1..=max_iter {
            x = self.ldlt.solve_block(&mx);
            let ax = self.a.mul_dense(&x);
            mx = self.m.mul_dense(&x);
            // Rayleigh–Ritz on span(x); the small pencil is SPD in its mass part.
            let ga = x.transpose() * &ax;
            let gm = x.transpose() * &mx;
            let (theta, y) = generalized_eigen(&((&ga + ga.transpose()) * 0.5), &((&gm + gm.transpose()) * 0.5))
                .map_err(|_| Error::Singular("subspace block lost rank".into()))?;
            x = &x * &y;
            mx = &mx * &y;
            let below = theta.iter().filter(|&&t| t < self.shift).count();
            if below > nu {
                continue;
            }
            let first = nu - below;
            if wanted.start < first || wanted.end > first + p {
                if it == max_iter {
                    return Err(Error::ClusterLost(format!(
                        "block covers eigenvalues {first}..{} but {wanted:?} requested",
                        first + p
                    )));
                }
                continue;
            }
            let local = (wanted.start - first)..(wanted.end - first);
            let mut worst: f64 = 0.0;
            for k in local.clone() {
                let axk = &ax * y.column(k);
                let r = axk - mx.column(k) * theta[k];
                worst = worst.max(r.norm() / (theta[k].abs() * mx.column(k).norm()));
            }
            last_res = worst;
            if worst <= tol {
                let values = local.clone().map(|k| theta[k]).collect();
                let vectors = x.columns(local.start, local.len()).into_owned();
                return Ok((Eigenpairs { values, vectors }, it));
            }
        }
        Err(Error::NoConvergence {
            iterations: max_iter,
            residual: last_res,
        })
    }
}

/// Indices of the maximal contiguous run around `target` whose members lie
/// within `rel_gap_tol` of each other, relative to the smaller magnitude.
pub fn detect_cluster(eigenvalues: &[f64], target: usize, rel_gap_tol: f64) -> Range<usize> {
    assert!(target < eigenvalues.len(), "target index out of range");
    let fits = |lo: usize, hi: usize| {
        let (a, b) = (eigenvalues[lo], eigenvalues[hi - 1]);
        (b - a).abs() <= rel_gap_tol * a.abs().min(b.abs())
    };
    let (mut lo, mut hi) = (target, target + 1);
    loop {
        if lo > 0 && fits(lo - 1, hi) {
            lo -= 1;
        } else if hi < eigenvalues.len() && fits(lo, hi + 1) {
            hi += 1;
        } else {
            return lo..hi;
        }
    }
}

/// Flips column signs so that each column's largest-magnitude entry (first
/// one on ties) is positive.
pub fn fix_signs(basis: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = basis.clone();
    for mut col in out.column_iter_mut() {
        let mut best = 0;
        for i in 1..col.len() {
            if col[i].abs() > col[best].abs() {
                best = i;
            }
        }
        if col.len() > 0 && col[best] < 0.0 {
            col.neg_mut();
        }
    }
    out
}

/// A group of (numerically) equal eigenvalues and an M-orthonormal basis of
/// their eigenspace.
#[derive(Debug, Clone)]
pub struct EigenCluster {
    pub lambda0: f64,
    pub indices: Range<usize>,
    /// `n × m`, sign-fixed.
    pub basis: DMatrix<f64>,
    /// Individual discrete eigenvalues of the members.
    pub members: Vec<f64>,
}

impl EigenCluster {
    /// Groups the pairs around `target` and collects the cluster basis.
    pub fn from_pairs(pairs: &Eigenpairs, target: usize, rel_gap_tol: f64) -> Result<Self> {
        if target >= pairs.len() {
            return Err(Error::Dimension(format!(
                "target index {target} beyond {} computed eigenpairs",
                pairs.len()
            )));
        }
        let indices = detect_cluster(&pairs.values, target, rel_gap_tol);
        if indices.end == pairs.len() {
            return Err(Error::Config(format!(
                "cluster at index {target} reaches the last computed eigenvalue; request more pairs"
            )));
        }
        let members: Vec<f64> = pairs.values[indices.clone()].to_vec();
        let lambda0 = members.iter().sum::<f64>() / members.len() as f64;
        let basis = fix_signs(&pairs.vectors.columns(indices.start, indices.len()).into_owned());
        Ok(Self {
            lambda0,
            indices,
            basis,
            members,
        })
    }

    pub fn m(&self) -> usize {
        self.indices.len()
    }

    pub fn n(&self) -> usize {
        self.basis.nrows()
    }

    /// `(‖UᵀMU − I‖_max, ‖UᵀAU − λ0 I‖_max / λ0)`.
    pub fn orthonormality_defects(&self, a: &CsrMatrix, m: &CsrMatrix) -> (f64, f64) {
        let k = self.m();
        let gm = m.bilinear(&self.basis, &self.basis) - DMatrix::<f64>::identity(k, k);
        let ga = a.bilinear(&self.basis, &self.basis) - DMatrix::<f64>::identity(k, k) * self.lambda0;
        (gm.amax(), ga.amax() / self.lambda0)
    }
}

/// Reproducible per-sample solver for the eigenpairs that continue a fixed
/// reference cluster.
#[derive(Debug, Clone)]
pub struct ClusterTracker {
    /// Reference eigenvectors of a window of indices around the cluster.
    window: DMatrix<f64>,
    window_start: usize,
    cluster: Range<usize>,
    /// Smallest distance from the cluster to a neighbouring reference eigenvalue.
    gap: f64,
    tol: f64,
    max_iter: usize,
}

/// Eigenpairs of one perturbed pencil with the indices of the reference cluster.
#[derive(Debug, Clone)]
pub struct TrackedCluster {
    pub values: Vec<f64>,
    pub basis: DMatrix<f64>,
    pub iterations: usize,
    pub shift: f64,
}

impl TrackedCluster {
    pub fn lambda_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_diagonal(&DVector::from_column_slice(&self.values))
    }
}

impl ClusterTracker {
    /// `reference` must hold at least two eigenpairs beyond the cluster.
    /// Neighbouring clusters are never split by the window boundary.
    pub fn new(reference: &Eigenpairs, cluster: &EigenCluster) -> Result<Self> {
        let vals = &reference.values;
        let c = cluster.indices.clone();
        if c.end + 1 >= vals.len() {
            return Err(Error::Config(
                "reference solve must include eigenpairs beyond the cluster".into(),
            ));
        }
        let close = |i: usize, j: usize| (vals[i] - vals[j]).abs() <= CLUSTER_TOL * vals[i].abs().max(vals[j].abs());
        let mut start = c.start.saturating_sub(1);
        while start > 0 && close(start - 1, start) {
            start -= 1;
        }
        let mut end = c.end + 1;
        while end < vals.len() && close(end, end - 1) {
            end += 1;
        }
        let below = if c.start > 0 { cluster.lambda0 - vals[c.start - 1] } else { f64::INFINITY };
        let above = vals[c.end] - cluster.lambda0;
        let window = reference.vectors.columns(start, end - start).into_owned();
        Ok(Self {
            window,
            window_start: start,
            cluster: c,
            gap: below.min(above),
            tol: ITERATIVE_TOL,
            max_iter: 300,
        })
    }

    pub fn with_tolerance(mut self, tol: f64) -> Self {
        self.tol = tol;
        self
    }

    /// Start block of the iteration: reference eigenvectors of the cluster
    /// and its nearest neighbours.
    pub fn window(&self) -> &DMatrix<f64> {
        &self.window
    }

    pub fn cluster_indices(&self) -> Range<usize> {
        self.cluster.clone()
    }

    /// Solves the perturbed pencil for the eigenpairs with the cluster's
    /// global indices.
    pub fn solve(&self, a: &CsrMatrix, m: &CsrMatrix) -> Result<TrackedCluster> {
        let k = self.cluster.len();
        let u0 = self
            .window
            .columns(self.cluster.start - self.window_start, k)
            .into_owned();
        let estimate = a.bilinear(&u0, &u0).trace() / m.bilinear(&u0, &u0).trace();
        let mut shift = estimate - 0.02 * self.gap;
        for attempt in 0..3 {
            let si = match ShiftInvert::new(a, m, shift) {
                Ok(si) => si,
                Err(Error::Singular(_)) => {
                    shift -= 0.01 * self.gap;
                    continue;
                }
                Err(e) => return Err(e),
            };
            match si.subspace_iteration(self.window.clone(), self.cluster.clone(), self.tol, self.max_iter) {
                Ok((pairs, iterations)) => {
                    return Ok(TrackedCluster {
                        values: pairs.values,
                        basis: pairs.vectors,
                        iterations,
                        shift,
                    })
                }
                Err(e) if attempt == 2 => return Err(e),
                Err(_) => shift -= 0.05 * self.gap,
            }
        }
        Err(Error::ClusterLost("no admissible shift found".into()))
    }
}

/// JSON dump of computed eigenpairs.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EigenDump {
    pub lambdas: Vec<f64>,
    /// Column-major `n × count`.
    pub vectors: Vec<f64>,
    pub n: usize,
    pub m: usize,
    pub cluster: Vec<usize>,
    pub lambda0: f64,
}

impl EigenDump {
    pub fn new(pairs: &Eigenpairs, cluster: &EigenCluster) -> Self {
        Self {
            lambdas: pairs.values.clone(),
            vectors: pairs.vectors.as_slice().to_vec(),
            n: pairs.vectors.nrows(),
            m: cluster.m(),
            cluster: cluster.indices.clone().collect(),
            lambda0: cluster.lambda0,
        }
    }
}

/// Dense eigenvalues as a plain vector, ascending.
pub fn dense_spectrum(a: &DMatrix<f64>, m: &DMatrix<f64>) -> Result<DVector<f64>> {
    Ok(generalized_eigen(a, m)?.0)
}
