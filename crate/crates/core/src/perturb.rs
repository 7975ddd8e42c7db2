//! First-order perturbation estimates of the mean and covariance of the
//! cluster eigenvalue matrix and eigenbasis.
//!
//! For a field `μ1 = Σ_i z_i L_i` the derivatives are linear in `z`, so with
//! `Var z_i = 1/12` the covariance of the stacked derivative
//! `x = vec([dU; dΛ])` is `(1/12) Σ_i x_i x_iᵀ`, where `x_i` solves the
//! bordered system for the single mode `L_i`. The factor `F = [x_1 … x_k]` is
//! kept instead of the dense covariance.
//!
//! Joint vectors use the column-major layout of the `(n + m) × m` stacked
//! solution: entry `(r, c)` of `dU` sits at `c (n + m) + r` and entry `(r, c)`
//! of `dΛ` at `c (n + m) + n + r`.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::derivative::{eigenvalue_derivative, ConstraintGauge, Direction, SaddleSystem};
use crate::error::{Error, Result};
use crate::field::UNIFORM_VARIANCE;
use crate::linalg::{sym_eigen_sorted, CsrMatrix};
use crate::problem::DiffusionProblem;

/// `scale · F Fᵀ`.
#[derive(Debug, Clone, PartialEq)]
pub struct LowRankCovariance {
    pub factor: DMatrix<f64>,
    pub scale: f64,
}

impl LowRankCovariance {
    pub fn new(factor: DMatrix<f64>, scale: f64) -> Self {
        Self { factor, scale }
    }

    pub fn dim(&self) -> usize {
        self.factor.nrows()
    }

    pub fn rank(&self) -> usize {
        self.factor.ncols()
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        &self.factor * self.factor.transpose() * self.scale
    }

    /// Keeps the listed rows of the factor.
    pub fn restrict(&self, rows: &[usize]) -> Self {
        let f = DMatrix::from_fn(rows.len(), self.rank(), |i, j| self.factor[(rows[i], j)]);
        Self::new(f, self.scale)
    }

    /// Factorizes a symmetric PSD matrix, dropping eigenvalues below
    /// `rel_tol` times the largest.
    pub fn from_dense_psd(c: &DMatrix<f64>, rel_tol: f64) -> Self {
        let (vals, vecs) = sym_eigen_sorted(&((c + c.transpose()) * 0.5));
        let top = vals.iter().copied().fold(0.0, f64::max);
        let keep: Vec<usize> = (0..vals.len()).rev().filter(|&i| vals[i] > rel_tol * top && top > 0.0).collect();
        let f = DMatrix::from_fn(c.nrows(), keep.len(), |r, j| vecs[(r, keep[j])] * vals[keep[j]].sqrt());
        Self::new(f, 1.0)
    }
}

/// Per-mode derivative factors of both fields.
#[derive(Debug, Clone)]
pub struct ModeFactors {
    pub n: usize,
    pub m: usize,
    pub lambda0: f64,
    /// `m (n + m) × k_μ`
    pub mu: DMatrix<f64>,
    /// `m (n + m) × k_ε`
    pub eps: DMatrix<f64>,
}

impl ModeFactors {
    pub fn dim(&self) -> usize {
        self.m * (self.n + self.m)
    }

    /// Joint indices of `vec(dU)` in column-major order.
    pub fn basis_rows(&self) -> Vec<usize> {
        let (n, m) = (self.n, self.m);
        (0..m).flat_map(|c| (0..n).map(move |r| c * (n + m) + r)).collect()
    }

    /// Joint indices of `vec(dΛ)` in column-major order.
    pub fn lambda_rows(&self) -> Vec<usize> {
        let (n, m) = (self.n, self.m);
        (0..m).flat_map(|c| (0..m).map(move |r| c * (n + m) + n + r)).collect()
    }
}

fn stacked_column(du: &DMatrix<f64>, dl: &DMatrix<f64>) -> DVector<f64> {
    let (n, m) = du.shape();
    let mut x = DMatrix::zeros(n + m, m);
    x.rows_mut(0, n).copy_from(du);
    x.rows_mut(n, m).copy_from(dl);
    DVector::from_column_slice(x.as_slice())
}

/// Derivative factor columns for a list of direction matrices.
pub fn factor_from_directions(
    saddle: &SaddleSystem,
    directions: &[CsrMatrix],
    direction: Direction,
    gauge: ConstraintGauge,
) -> Result<DMatrix<f64>> {
    let cols: Vec<DVector<f64>> = directions
        .par_iter()
        .map(|d| {
            let b = match direction {
                Direction::Mu => saddle.derivative_mu(d)?,
                Direction::Eps => saddle.derivative_eps(d, gauge)?,
            };
            Ok(stacked_column(&b.du, &b.dlambda))
        })
        .collect::<Result<_>>()?;
    let dim = saddle.m() * (saddle.n() + saddle.m());
    if cols.is_empty() {
        return Ok(DMatrix::zeros(dim, 0));
    }
    Ok(DMatrix::from_columns(&cols))
}

pub fn mode_factors(problem: &DiffusionProblem, saddle: &SaddleSystem) -> Result<ModeFactors> {
    let gauge = problem.config.gauge;
    Ok(ModeFactors {
        n: problem.n(),
        m: problem.m(),
        lambda0: problem.lambda0(),
        mu: factor_from_directions(saddle, &problem.mode_stiffness(), Direction::Mu, gauge)?,
        eps: factor_from_directions(saddle, &problem.mode_mass(), Direction::Eps, gauge)?,
    })
}

/// First-order mean: the reference basis and `λ0 I`.
pub fn perturb_mean(problem: &DiffusionProblem) -> (DMatrix<f64>, DMatrix<f64>) {
    let m = problem.m();
    (problem.u0().clone(), DMatrix::identity(m, m) * problem.lambda0())
}

/// Predicted moments at `(α, β)`.
#[derive(Debug, Clone)]
pub struct PerturbMoments {
    pub n: usize,
    pub m: usize,
    pub mean_lambda: DMatrix<f64>,
    pub joint: LowRankCovariance,
    basis_rows: Vec<usize>,
    lambda_rows: Vec<usize>,
}

impl PerturbMoments {
    /// `m² × m²` covariance of `vec(Λ)`.
    pub fn cov_lambda(&self) -> DMatrix<f64> {
        self.joint.restrict(&self.lambda_rows).to_dense()
    }

    /// Covariance of `vec(U)`, `nm × nm`, in factored form.
    pub fn cov_basis(&self) -> LowRankCovariance {
        self.joint.restrict(&self.basis_rows)
    }
}

/// `α² Cov_μ + β² Cov_ε`, from the concatenated factor `[α F_μ, β F_ε]`.
pub fn perturb_cov(factors: &ModeFactors, alpha: f64, beta: f64) -> PerturbMoments {
    let (kmu, keps) = (factors.mu.ncols(), factors.eps.ncols());
    let mut f = DMatrix::zeros(factors.dim(), kmu + keps);
    f.columns_mut(0, kmu).copy_from(&(&factors.mu * alpha));
    f.columns_mut(kmu, keps).copy_from(&(&factors.eps * beta));
    let m = factors.m;
    PerturbMoments {
        n: factors.n,
        m,
        mean_lambda: DMatrix::identity(m, m) * factors.lambda0,
        joint: LowRankCovariance::new(f, UNIFORM_VARIANCE),
        basis_rows: factors.basis_rows(),
        lambda_rows: factors.lambda_rows(),
    }
}

/// Covariance of `vec(dΛ)` for one field computed from the closed form
/// `dΛ = sym(u0ᵀ A1 u0)` or `−λ0 sym(u0ᵀ M1 u0)`, without the bordered solve.
pub fn eig_cov_direct(problem: &DiffusionProblem, direction: Direction) -> Result<DMatrix<f64>> {
    let mats = match direction {
        Direction::Mu => problem.mode_stiffness(),
        Direction::Eps => problem.mode_mass(),
    };
    let u0 = problem.u0();
    let m = problem.m();
    let zero = CsrMatrix::zeros(problem.a0.pattern().clone());
    let mut f = DMatrix::zeros(m * m, mats.len());
    for (i, d) in mats.iter().enumerate() {
        let (dmu, deps) = match direction {
            Direction::Mu => eigenvalue_derivative(u0, d, &zero, problem.lambda0())?,
            Direction::Eps => eigenvalue_derivative(u0, &zero, d, problem.lambda0())?,
        };
        let dl = dmu + deps;
        f.column_mut(i).copy_from_slice(dl.as_slice());
    }
    Ok(&f * f.transpose() * UNIFORM_VARIANCE)
}

/// Largest lifted dimension accepted by [`solve_covariance_equations`].
pub const KRONECKER_LIMIT: usize = 80;

/// Solves the lifted covariance equations `(𝒦 ⊗ 𝒦) vec(X) = vec(C_b)`
/// densely, with `𝒦 = I_m ⊗ K` and `K` the bordered matrix. `rhs_cov` is the
/// covariance of the stacked right-hand side in the joint layout.
pub fn solve_covariance_equations(saddle: &SaddleSystem, rhs_cov: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let k = saddle.matrix();
    let (b, m) = (k.nrows(), saddle.m());
    let d = b * m;
    if rhs_cov.shape() != (d, d) {
        return Err(Error::Dimension(format!("covariance of shape {:?}, expected {d}", rhs_cov.shape())));
    }
    if d > KRONECKER_LIMIT {
        return Err(Error::Config(format!("lifted dimension {d} exceeds {KRONECKER_LIMIT}")));
    }
    let mut lifted = DMatrix::zeros(d, d);
    for c in 0..m {
        lifted.view_mut((c * b, c * b), (b, b)).copy_from(k);
    }
    let kron = lifted.kronecker(&lifted);
    let rhs = DVector::from_column_slice(rhs_cov.as_slice());
    let x = solve_by_components(&kron, &rhs)?;
    Ok(DMatrix::from_column_slice(d, d, x.as_slice()))
}

/// Dense LU solve of `a x = b`, split into the independent diagonal blocks
/// given by the connected components of the nonzero pattern of `a`.
fn solve_by_components(a: &DMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>> {
    let n = a.nrows();
    let mut parent: Vec<usize> = (0..n).collect();
    fn root(parent: &mut [usize], mut i: usize) -> usize {
        while parent[i] != i {
            parent[i] = parent[parent[i]];
            i = parent[i];
        }
        i
    }
    for j in 0..n {
        for (i, v) in a.column(j).iter().enumerate() {
            if *v != 0.0 {
                let (ri, rj) = (root(&mut parent, i), root(&mut parent, j));
                if ri != rj {
                    parent[ri] = rj;
                }
            }
        }
    }
    let mut groups: std::collections::BTreeMap<usize, Vec<usize>> = std::collections::BTreeMap::new();
    for i in 0..n {
        let r = root(&mut parent, i);
        groups.entry(r).or_default().push(i);
    }
    let mut x = DVector::zeros(n);
    for idx in groups.values() {
        let sub = DMatrix::from_fn(idx.len(), idx.len(), |r, c| a[(idx[r], idx[c])]);
        let rhs = DVector::from_fn(idx.len(), |r, _| b[idx[r]]);
        let y = sub
            .lu()
            .solve(&rhs)
            .ok_or_else(|| Error::SaddleSingular("lifted covariance system".into()))?;
        for (k, &i) in idx.iter().enumerate() {
            x[i] = y[k];
        }
    }
    Ok(x)
}

/// Covariance of the stacked right-hand sides of a list of directions.
pub fn rhs_covariance(
    saddle: &SaddleSystem,
    directions: &[CsrMatrix],
    direction: Direction,
    gauge: ConstraintGauge,
) -> DMatrix<f64> {
    let d = saddle.m() * (saddle.n() + saddle.m());
    let mut c = DMatrix::zeros(d, d);
    for dir in directions {
        let (top, bottom) = match direction {
            Direction::Mu => saddle.rhs_mu(dir),
            Direction::Eps => saddle.rhs_eps(dir, gauge),
        };
        let v = stacked_column(&top, &bottom);
        c.ger(UNIFORM_VARIANCE, &v, &v, 1.0);
    }
    c
}
