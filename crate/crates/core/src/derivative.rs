//! First-order derivatives of an eigenvalue cluster with respect to linear
//! perturbations of the stiffness (`μ`) and mass (`ε`) coefficients.
//!
//! Every derivative solves the bordered system
//!
//! ```text
//! [ A0 − λ0 M0   −M0 u0 ] [ dU_i    ]   [ top_i      ]
//! [ u0ᵀ M0          0   ] [ dλ_{:i} ] = [ bottom_{:i}]
//! ```
//!
//! column by column. The matrix is factorized once and shared.

use nalgebra::{DMatrix, LU, Dyn};
use serde::{Deserialize, Serialize};

use crate::eig::{fix_signs, EigenCluster};
use crate::error::{Error, Result};
use crate::linalg::{sym_eigen_sorted, CsrMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Mu,
    Eps,
}

/// Prescribed values of `u0ᵀ M0 dU` for the mass direction.
///
/// Differentiating `uᵀ M(ε) u = I` fixes only the symmetric part of
/// `u0ᵀ M0 dU` to `−½ u0ᵀ M1 u0`. `Symmetric` prescribes exactly that matrix;
/// it is the gauge followed by bases aligned through the cross-mass SVD.
/// `DiagonalOnly` keeps the diagonal and sets off-diagonal entries to zero.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ConstraintGauge {
    #[default]
    Symmetric,
    DiagonalOnly,
}

impl std::str::FromStr for ConstraintGauge {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "symmetric" => Ok(Self::Symmetric),
            "diagonal-only" | "diagonal" => Ok(Self::DiagonalOnly),
            other => Err(Error::Config(format!("unknown gauge '{other}'"))),
        }
    }
}

/// Directional derivative of a cluster.
#[derive(Debug, Clone)]
pub struct DerivativeBundle {
    /// `n × m`
    pub du: DMatrix<f64>,
    /// `m × m`, symmetric.
    pub dlambda: DMatrix<f64>,
    pub direction: Direction,
    /// Prescribed `u0ᵀ M0 dU` used in the solve.
    pub constraint: DMatrix<f64>,
}

impl DerivativeBundle {
    pub fn zeros(n: usize, m: usize, direction: Direction) -> Self {
        Self {
            du: DMatrix::zeros(n, m),
            dlambda: DMatrix::zeros(m, m),
            direction,
            constraint: DMatrix::zeros(m, m),
        }
    }

    /// Max deviation of `u0ᵀ M0 dU` from the prescribed constraint values.
    pub fn constraint_residual(&self, u0: &DMatrix<f64>, m0: &CsrMatrix) -> f64 {
        (m0.bilinear(u0, &self.du) - &self.constraint).amax()
    }
}

/// `(u0ᵀ A1 u0, −λ0 u0ᵀ M1 u0)`, both symmetrized.
pub fn eigenvalue_derivative(
    u0: &DMatrix<f64>,
    a1: &CsrMatrix,
    m1: &CsrMatrix,
    lambda0: f64,
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    if a1.nrows() != u0.nrows() || m1.nrows() != u0.nrows() {
        return Err(Error::Dimension(format!(
            "basis has {} rows, perturbations have {} and {}",
            u0.nrows(),
            a1.nrows(),
            m1.nrows()
        )));
    }
    let sym = |x: DMatrix<f64>| (&x + x.transpose()) * 0.5;
    Ok((sym(a1.bilinear(u0, u0)), sym(m1.bilinear(u0, u0)) * (-lambda0)))
}

/// Factorized bordered matrix of one cluster.
#[derive(Debug, Clone)]
pub struct SaddleSystem {
    n: usize,
    m: usize,
    lambda0: f64,
    u0: DMatrix<f64>,
    /// `M0 u0`
    m0u0: DMatrix<f64>,
    matrix: DMatrix<f64>,
    lu: LU<f64, Dyn, Dyn>,
    /// Ratio of smallest to largest pivot magnitude of the LU factor.
    pivot_ratio: f64,
}

impl SaddleSystem {
    pub fn new(a0: &CsrMatrix, m0: &CsrMatrix, cluster: &EigenCluster) -> Result<Self> {
        let (n, m) = (cluster.n(), cluster.m());
        if a0.nrows() != n || m0.nrows() != n {
            return Err(Error::Dimension("saddle blocks do not match the cluster basis".into()));
        }
        let u0 = cluster.basis.clone();
        let m0u0 = m0.mul_dense(&u0);
        let mut k = DMatrix::zeros(n + m, n + m);
        for (i, j, v) in a0.triplets() {
            k[(i, j)] += v;
        }
        for (i, j, v) in m0.triplets() {
            k[(i, j)] -= cluster.lambda0 * v;
        }
        for c in 0..m {
            for r in 0..n {
                k[(r, n + c)] = -m0u0[(r, c)];
                k[(n + c, r)] = m0u0[(r, c)];
            }
        }
        let lu = k.clone().lu();
        let diag = lu.u().diagonal();
        let max = diag.amax();
        let min = diag.iter().fold(f64::INFINITY, |a, v| a.min(v.abs()));
        let pivot_ratio = if max > 0.0 { min / max } else { 0.0 };
        if !(pivot_ratio > 1e-13) {
            return Err(Error::SaddleSingular(format!(
                "pivot ratio {pivot_ratio:e}; check that λ0 and the basis belong to one cluster"
            )));
        }
        Ok(Self {
            n,
            m,
            lambda0: cluster.lambda0,
            u0,
            m0u0,
            matrix: k,
            lu,
            pivot_ratio,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn lambda0(&self) -> f64 {
        self.lambda0
    }

    pub fn basis(&self) -> &DMatrix<f64> {
        &self.u0
    }

    pub fn pivot_ratio(&self) -> f64 {
        self.pivot_ratio
    }

    /// The assembled bordered matrix.
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    /// Solves for a block of stacked right-hand sides `(n + m) × r`.
    pub fn solve_stacked(&self, rhs: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        self.lu
            .solve(rhs)
            .ok_or_else(|| Error::SaddleSingular("LU solve failed".into()))
    }

    /// Relative residual `‖K x − b‖_F / ‖b‖_F`.
    pub fn relative_residual(&self, x: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
        let nb = b.norm();
        if nb == 0.0 {
            return (&self.matrix * x).norm();
        }
        (&self.matrix * x - b).norm() / nb
    }

    /// Solves `m` columns with tops `rhs_top` (`n × m`) and bottoms `rhs_bottom` (`m × m`).
    pub fn solve(
        &self,
        rhs_top: &DMatrix<f64>,
        rhs_bottom: &DMatrix<f64>,
    ) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
        let (n, m) = (self.n, self.m);
        if rhs_top.shape() != (n, m) || rhs_bottom.shape() != (m, m) {
            return Err(Error::Dimension("saddle right-hand side shape".into()));
        }
        let mut b = DMatrix::zeros(n + m, m);
        b.rows_mut(0, n).copy_from(rhs_top);
        b.rows_mut(n, m).copy_from(rhs_bottom);
        let x = self.solve_stacked(&b)?;
        let res = self.relative_residual(&x, &b);
        if res > 1e-9 {
            return Err(Error::SaddleSingular(format!("block residual {res:e}")));
        }
        Ok((x.rows(0, n).into_owned(), x.rows(n, m).into_owned()))
    }

    /// Right-hand side blocks for the stiffness direction `A1`.
    pub fn rhs_mu(&self, a1: &CsrMatrix) -> (DMatrix<f64>, DMatrix<f64>) {
        (-a1.mul_dense(&self.u0), DMatrix::zeros(self.m, self.m))
    }

    /// Right-hand side blocks for the mass direction `M1`.
    pub fn rhs_eps(&self, m1: &CsrMatrix, gauge: ConstraintGauge) -> (DMatrix<f64>, DMatrix<f64>) {
        let m1u0 = m1.mul_dense(&self.u0);
        let c = self.u0.transpose() * &m1u0;
        let c = (&c + c.transpose()) * 0.5;
        let bottom = match gauge {
            ConstraintGauge::Symmetric => c * -0.5,
            ConstraintGauge::DiagonalOnly => DMatrix::from_diagonal(&c.diagonal()) * -0.5,
        };
        (m1u0 * self.lambda0, bottom)
    }

    pub fn derivative_mu(&self, a1: &CsrMatrix) -> Result<DerivativeBundle> {
        let (top, bottom) = self.rhs_mu(a1);
        let (du, dl) = self.solve(&top, &bottom)?;
        Ok(DerivativeBundle {
            du,
            dlambda: dl,
            direction: Direction::Mu,
            constraint: bottom,
        })
    }

    pub fn derivative_eps(&self, m1: &CsrMatrix, gauge: ConstraintGauge) -> Result<DerivativeBundle> {
        let (top, bottom) = self.rhs_eps(m1, gauge);
        let (du, dl) = self.solve(&top, &bottom)?;
        Ok(DerivativeBundle {
            du,
            dlambda: dl,
            direction: Direction::Eps,
            constraint: bottom,
        })
    }

    /// `M0 u0`, the border column block.
    pub fn m0u0(&self) -> &DMatrix<f64> {
        &self.m0u0
    }
}

/// Eigendecomposition of a directional eigenvalue-derivative matrix.
#[derive(Debug, Clone)]
pub struct Polarization {
    pub q0: DMatrix<f64>,
    /// Ascending.
    pub lambda_diag: Vec<f64>,
    /// Set when two eigenvalues are closer than `1e-10` (relative to the
    /// matrix scale), so that `q0` is not unique.
    pub degenerate: bool,
}

pub fn polarize(dlambda: &DMatrix<f64>) -> Polarization {
    let (vals, vecs) = sym_eigen_sorted(dlambda);
    let m = vals.len();
    let scale = dlambda.amax().max(1.0);
    let gap_tol = 1e-10 * scale;
    let degenerate = vals.as_slice().windows(2).any(|w| w[1] - w[0] < gap_tol);
    let isotropic = m > 0 && vals[m - 1] - vals[0] < gap_tol;
    let q0 = if isotropic {
        DMatrix::identity(m, m)
    } else {
        fix_signs(&vecs)
    };
    Polarization {
        q0,
        lambda_diag: vals.iter().copied().collect(),
        degenerate,
    }
}

/// First-order prediction of the cluster basis and eigenvalue matrix at `(α, β)`.
pub fn taylor_predict(
    u0: &DMatrix<f64>,
    lambda0: f64,
    mu: &DerivativeBundle,
    eps: &DerivativeBundle,
    alpha: f64,
    beta: f64,
) -> (DMatrix<f64>, DMatrix<f64>) {
    let m = u0.ncols();
    let basis = u0 + &mu.du * alpha + &eps.du * beta;
    let lambda = DMatrix::identity(m, m) * lambda0 + &mu.dlambda * alpha + &eps.dlambda * beta;
    (basis, lambda)
}

/// Prediction along the trajectories selected by the polarization of
/// `α dΛ_μ + β dΛ_ε`: basis `(u0 + α dU_μ + β dU_ε) Q0` and eigenvalues
/// `λ0 + Λ` in ascending order.
#[derive(Debug, Clone)]
pub struct PolarizedPrediction {
    pub basis: DMatrix<f64>,
    pub eigenvalues: Vec<f64>,
    pub polarization: Polarization,
}

pub fn polarized_predict(
    u0: &DMatrix<f64>,
    lambda0: f64,
    mu: &DerivativeBundle,
    eps: &DerivativeBundle,
    alpha: f64,
    beta: f64,
) -> PolarizedPrediction {
    let directional = &mu.dlambda * alpha + &eps.dlambda * beta;
    let pol = polarize(&directional);
    let basis = (u0 + &mu.du * alpha + &eps.du * beta) * &pol.q0;
    let eigenvalues = pol.lambda_diag.iter().map(|l| lambda0 + l).collect();
    PolarizedPrediction {
        basis,
        eigenvalues,
        polarization: pol,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eig::{solve_gevp, CLUSTER_TOL};
    use crate::mesh::{Mesh, NodalField};
    use proptest::prelude::*;

    struct Setup {
        a0: CsrMatrix,
        m0: CsrMatrix,
        cluster: EigenCluster,
        mesh: Mesh,
    }

    fn setup(n: usize, target: usize) -> Setup {
        let mesh = Mesh::unit_square(n).unwrap();
        let one = NodalField::constant(&mesh, 1.0);
        let (a0, m0) = (mesh.assemble_stiffness(&one), mesh.assemble_mass(&one));
        let pairs = solve_gevp(&a0, &m0, 6).unwrap();
        let cluster = EigenCluster::from_pairs(&pairs, target, CLUSTER_TOL).unwrap();
        Setup { a0, m0, cluster, mesh }
    }

    fn bump(mesh: &Mesh) -> NodalField {
        NodalField::from_fn(mesh, |x, y| (3.0 * x).sin() * (1.0 + y * y) - 0.4 * x * y)
    }

    #[test]
    fn scaling_directions() {
        let s = setup(9, 1);
        let c = 0.7;
        let (dm, _) =
            eigenvalue_derivative(&s.cluster.basis, &s.a0.scaled(c), &s.m0, s.cluster.lambda0).unwrap();
        let (_, de) =
            eigenvalue_derivative(&s.cluster.basis, &s.a0, &s.m0.scaled(c), s.cluster.lambda0).unwrap();
        let id = DMatrix::<f64>::identity(2, 2) * (c * s.cluster.lambda0);
        assert!((dm - &id).amax() < 1e-10);
        assert!((de + &id).amax() < 1e-10);
    }

    #[test]
    fn zero_rhs_gives_zero_bundle() {
        let s = setup(7, 1);
        let sys = SaddleSystem::new(&s.a0, &s.m0, &s.cluster).unwrap();
        let (du, dl) = sys.solve(&DMatrix::zeros(sys.n(), 2), &DMatrix::zeros(2, 2)).unwrap();
        assert_eq!(du.amax(), 0.0);
        assert_eq!(dl.amax(), 0.0);
    }

    #[test]
    fn saddle_matches_direct_formula_and_constraints() {
        let s = setup(9, 1);
        let sys = SaddleSystem::new(&s.a0, &s.m0, &s.cluster).unwrap();
        let f = bump(&s.mesh);
        let a1 = s.mesh.assemble_stiffness(&f);
        let m1 = s.mesh.assemble_mass(&f);
        let (dmu, deps) = eigenvalue_derivative(&s.cluster.basis, &a1, &m1, s.cluster.lambda0).unwrap();
        for gauge in [ConstraintGauge::Symmetric, ConstraintGauge::DiagonalOnly] {
            let bm = sys.derivative_mu(&a1).unwrap();
            let be = sys.derivative_eps(&m1, gauge).unwrap();
            assert!((&bm.dlambda - &dmu).amax() <= 1e-9 * dmu.amax());
            assert!((&be.dlambda - &deps).amax() <= 1e-9 * deps.amax());
            assert!((&be.dlambda - be.dlambda.transpose()).amax() < 1e-10 * deps.amax());
            assert!(bm.constraint_residual(&s.cluster.basis, &s.m0) < 1e-9);
            assert!(be.constraint_residual(&s.cluster.basis, &s.m0) < 1e-9);
            assert_eq!(bm.constraint.amax(), 0.0);
        }
    }

    #[test]
    fn simple_eigenvalue_gauges_coincide() {
        let s = setup(8, 0);
        assert_eq!(s.cluster.m(), 1);
        let sys = SaddleSystem::new(&s.a0, &s.m0, &s.cluster).unwrap();
        let m1 = s.mesh.assemble_mass(&bump(&s.mesh));
        let a = sys.derivative_eps(&m1, ConstraintGauge::Symmetric).unwrap();
        let b = sys.derivative_eps(&m1, ConstraintGauge::DiagonalOnly).unwrap();
        assert_eq!(a.du, b.du);
        assert_eq!(a.dlambda, b.dlambda);
    }

    #[test]
    fn mismatched_lambda_is_singular() {
        let s = setup(7, 1);
        let mut wrong = s.cluster.clone();
        // a basis that is not an eigenbasis of the shifted operator still
        // gives a regular matrix; a zero basis does not
        wrong.basis.fill(0.0);
        assert!(matches!(
            SaddleSystem::new(&s.a0, &s.m0, &wrong),
            Err(Error::SaddleSingular(_))
        ));
    }

    #[test]
    fn doubling_the_direction_doubles_the_bundle() {
        let s = setup(7, 1);
        let sys = SaddleSystem::new(&s.a0, &s.m0, &s.cluster).unwrap();
        let f = bump(&s.mesh);
        let a1 = s.mesh.assemble_stiffness(&f);
        let b1 = sys.derivative_mu(&a1).unwrap();
        let b2 = sys.derivative_mu(&a1.scaled(2.0)).unwrap();
        assert!((&b2.du - &b1.du * 2.0).amax() < 1e-11 * b1.du.amax());
    }

    #[test]
    fn polarize_swap_matrix() {
        let p = polarize(&DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]));
        assert!((p.lambda_diag[0] + 1.0).abs() < 1e-14 && (p.lambda_diag[1] - 1.0).abs() < 1e-14);
        let r = std::f64::consts::FRAC_1_SQRT_2;
        let expect = DMatrix::from_column_slice(2, 2, &[r, -r, r, r]);
        assert!((&p.q0 - expect).amax() < 1e-14);
        assert!(!p.degenerate);
        let iso = polarize(&(DMatrix::<f64>::identity(3, 3) * 2.5));
        assert!(iso.degenerate);
        assert_eq!(iso.q0, DMatrix::<f64>::identity(3, 3));
    }

    proptest! {
        #[test]
        fn polarization_diagonalizes(a in -3.0f64..3.0, b in -3.0f64..3.0, c in -3.0f64..3.0) {
            let d = DMatrix::from_row_slice(2, 2, &[a, b, b, c]);
            let p = polarize(&d);
            let qtq = p.q0.transpose() * &p.q0;
            prop_assert!((qtq - DMatrix::<f64>::identity(2, 2)).amax() < 1e-12);
            let diag = p.q0.transpose() * &d * &p.q0;
            prop_assert!(diag[(0, 1)].abs() < 1e-10 && diag[(1, 0)].abs() < 1e-10);
        }
    }

    #[test]
    fn zeroth_order_prediction() {
        let s = setup(6, 1);
        let mu = DerivativeBundle::zeros(s.cluster.n(), 2, Direction::Mu);
        let mut eps = mu.clone();
        eps.direction = Direction::Eps;
        eps.du.fill(3.0);
        let (basis, lam) = taylor_predict(&s.cluster.basis, s.cluster.lambda0, &mu, &eps, 0.0, 0.0);
        assert_eq!(basis, s.cluster.basis);
        assert_eq!(lam, DMatrix::<f64>::identity(2, 2) * s.cluster.lambda0);
    }
}
