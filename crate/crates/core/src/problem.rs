//! The stochastic diffusion eigenproblem on the unit square.
//!
//! `−∇·(μ ∇u) = λ ε u` with homogeneous Dirichlet conditions, where
//! `μ = μ0 + α μ1`, `ε = ε0 + β ε1` and `μ1`, `ε1` are independent
//! Karhunen–Loève fields built from the same kernel.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::align::align;
use crate::derivative::{ConstraintGauge, DerivativeBundle, SaddleSystem};
use crate::eig::{
    solve_gevp, solve_gevp_dense, ClusterTracker, EigenCluster, Eigenpairs, TrackedCluster,
    CLUSTER_TOL, DENSE_LIMIT,
};
use crate::error::{Error, Result};
use crate::field::{build_kl, draw_uniform, sample_stream, FieldId, KernelSpec, KlExpansion};
use crate::linalg::CsrMatrix;
use crate::mesh::{Layout, Mesh, NodalField};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProblemConfig {
    /// Vertices per side.
    pub n: usize,
    pub layout: Layout,
    pub kl_tol: f64,
    pub kernel_scale: f64,
    pub max_rank: usize,
    /// Global index of (one member of) the eigenvalue cluster of interest.
    pub target_index: usize,
    pub mu0: f64,
    pub eps0: f64,
    pub cluster_tol: f64,
    pub gauge: ConstraintGauge,
}

impl Default for ProblemConfig {
    fn default() -> Self {
        Self {
            n: 24,
            layout: Layout::CrissCross,
            kl_tol: 1e-5,
            kernel_scale: 20.0,
            max_rank: 2000,
            target_index: 1,
            mu0: 1.0,
            eps0: 1.0,
            cluster_tol: CLUSTER_TOL,
            gauge: ConstraintGauge::Symmetric,
        }
    }
}

/// Coefficient vectors of one realization of `(μ1, ε1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Realization {
    pub z_mu: Vec<f64>,
    pub z_eps: Vec<f64>,
}

impl Realization {
    pub fn antithetic(&self) -> Self {
        Self {
            z_mu: self.z_mu.iter().map(|v| -v).collect(),
            z_eps: self.z_eps.iter().map(|v| -v).collect(),
        }
    }

    pub fn zeros(k_mu: usize, k_eps: usize) -> Self {
        Self {
            z_mu: vec![0.0; k_mu],
            z_eps: vec![0.0; k_eps],
        }
    }
}

/// Everything about the reference problem that per-sample work shares.
#[derive(Debug, Clone)]
pub struct DiffusionProblem {
    pub config: ProblemConfig,
    pub mesh: Mesh,
    pub a0: CsrMatrix,
    pub m0: CsrMatrix,
    pub mass_full: CsrMatrix,
    pub kl_mu: KlExpansion,
    pub kl_eps: KlExpansion,
    pub reference: Eigenpairs,
    pub cluster: EigenCluster,
    pub tracker: ClusterTracker,
}

impl DiffusionProblem {
    pub fn new(config: ProblemConfig) -> Result<Self> {
        if config.kl_tol <= 0.0 || config.kernel_scale <= 0.0 {
            return Err(Error::Config("kl_tol and kernel_scale must be positive".into()));
        }
        let mesh = Mesh::build(config.n, config.layout)?;
        let mu0 = NodalField::constant(&mesh, config.mu0);
        let eps0 = NodalField::constant(&mesh, config.eps0);
        let a0 = mesh.assemble_stiffness(&mu0);
        let m0 = mesh.assemble_mass(&eps0);
        let mass_full = mesh.assemble_mass_full(&NodalField::constant(&mesh, 1.0));
        let kernel = KernelSpec::gaussian(config.kernel_scale);
        let kl = build_kl(&mesh, &kernel, &mass_full, config.kl_tol, config.max_rank)?;
        let kl_mu = kl.clone().with_mean_amplitude(config.mu0, 1.0);
        let kl_eps = kl.with_mean_amplitude(config.eps0, 1.0);
        let count = (config.target_index + 8).min(mesh.n_free());
        let reference = solve_gevp(&a0, &m0, count)?;
        let cluster = EigenCluster::from_pairs(&reference, config.target_index, config.cluster_tol)?;
        let tracker = ClusterTracker::new(&reference, &cluster)?;
        Ok(Self {
            config,
            mesh,
            a0,
            m0,
            mass_full,
            kl_mu,
            kl_eps,
            reference,
            cluster,
            tracker,
        })
    }

    pub fn n(&self) -> usize {
        self.mesh.n_free()
    }

    pub fn m(&self) -> usize {
        self.cluster.m()
    }

    pub fn lambda0(&self) -> f64 {
        self.cluster.lambda0
    }

    pub fn u0(&self) -> &DMatrix<f64> {
        &self.cluster.basis
    }

    /// Builds and factorizes the bordered derivative system.
    pub fn saddle(&self) -> Result<SaddleSystem> {
        SaddleSystem::new(&self.a0, &self.m0, &self.cluster)
    }

    /// The realization with index `sample` of the given master seed.
    pub fn draw(&self, master_seed: u64, sample: u64) -> Realization {
        Realization {
            z_mu: draw_uniform(self.kl_mu.rank(), &mut sample_stream(master_seed, sample, FieldId::Mu)),
            z_eps: draw_uniform(self.kl_eps.rank(), &mut sample_stream(master_seed, sample, FieldId::Eps)),
        }
    }

    /// `μ1` and `ε1` of a realization.
    pub fn fluctuations(&self, r: &Realization) -> (NodalField, NodalField) {
        (self.kl_mu.fluctuation(&r.z_mu), self.kl_eps.fluctuation(&r.z_eps))
    }

    /// `A(μ1)` and `M(ε1)`, the directional perturbation matrices.
    pub fn directions(&self, r: &Realization) -> (CsrMatrix, CsrMatrix) {
        let (mu1, eps1) = self.fluctuations(r);
        (self.mesh.assemble_stiffness(&mu1), self.mesh.assemble_mass(&eps1))
    }

    /// Perturbed pencil at `(α, β)`; rejects non-positive coefficients.
    pub fn assemble(&self, alpha: f64, beta: f64, r: &Realization) -> Result<(CsrMatrix, CsrMatrix)> {
        let (mu1, eps1) = self.fluctuations(r);
        let combine = |mean: f64, amp: f64, f: NodalField| NodalField {
            values: f.values.into_iter().map(|v| mean + amp * v).collect(),
        };
        let mu = combine(self.config.mu0, alpha, mu1);
        let eps = combine(self.config.eps0, beta, eps1);
        let min = mu.min().min(eps.min());
        if !(min > 0.0) {
            return Err(Error::NonPositiveCoefficient { min });
        }
        Ok((self.mesh.assemble_stiffness(&mu), self.mesh.assemble_mass(&eps)))
    }

    /// Eigenpairs continuing the reference cluster at `(α, β)`.
    pub fn solve_sample(&self, alpha: f64, beta: f64, r: &Realization) -> Result<TrackedCluster> {
        let (a, m) = self.assemble(alpha, beta, r)?;
        self.tracker.solve(&a, &m)
    }

    /// Like [`DiffusionProblem::solve_sample`] but as accurate as possible:
    /// dense for small pencils, tightened iteration otherwise.
    pub fn solve_sample_accurate(&self, alpha: f64, beta: f64, r: &Realization) -> Result<TrackedCluster> {
        let (a, m) = self.assemble(alpha, beta, r)?;
        self.solve_pencil_accurate(&a, &m)
    }

    pub fn solve_pencil_accurate(&self, a: &CsrMatrix, m: &CsrMatrix) -> Result<TrackedCluster> {
        let idx = self.cluster.indices.clone();
        if a.nrows() <= DENSE_LIMIT {
            let pairs = solve_gevp_dense(&a.to_dense(), &m.to_dense(), idx.end)?;
            Ok(TrackedCluster {
                values: pairs.values[idx.clone()].to_vec(),
                basis: pairs.vectors.columns(idx.start, idx.len()).into_owned(),
                iterations: 0,
                shift: 0.0,
            })
        } else {
            self.tracker.clone().with_tolerance(1e-13).solve(a, m)
        }
    }

    /// Directional derivative bundles of a realization.
    pub fn bundles(
        &self,
        saddle: &SaddleSystem,
        r: &Realization,
    ) -> Result<(DerivativeBundle, DerivativeBundle)> {
        let (a1, m1) = self.directions(r);
        Ok((saddle.derivative_mu(&a1)?, saddle.derivative_eps(&m1, self.config.gauge)?))
    }

    /// Per-mode perturbation matrices `A(L_i)` of the μ expansion.
    pub fn mode_stiffness(&self) -> Vec<CsrMatrix> {
        (0..self.kl_mu.rank())
            .map(|i| self.mesh.assemble_stiffness(&self.kl_mu.mode(i)))
            .collect()
    }

    /// Per-mode perturbation matrices `M(L_i)` of the ε expansion.
    pub fn mode_mass(&self) -> Vec<CsrMatrix> {
        (0..self.kl_eps.rank())
            .map(|i| self.mesh.assemble_mass(&self.kl_eps.mode(i)))
            .collect()
    }
}

/// Centered finite-difference check of the eigenvalue-derivative matrix in
/// one direction `(A1, M1)`: returns `‖(Λ(h) − Λ(−h))/(2h) − dΛ‖_F` where
/// `Λ(±h)` is the cluster eigenvalue matrix aligned onto `u0`.
pub fn fd_error(
    problem: &DiffusionProblem,
    a1: &CsrMatrix,
    m1: &CsrMatrix,
    dlambda: &DMatrix<f64>,
    h: f64,
) -> Result<f64> {
    let aligned = |s: f64| -> Result<DMatrix<f64>> {
        let mut a = problem.a0.clone();
        a.axpy(s, a1)?;
        let mut m = problem.m0.clone();
        m.axpy(s, m1)?;
        let t = problem.solve_pencil_accurate(&a, &m)?;
        Ok(align(&t.basis, &t.lambda_matrix(), problem.u0(), &problem.m0)?.aligned_lambda)
    };
    let fd = (aligned(h)? - aligned(-h)?) / (2.0 * h);
    Ok((fd - dlambda).norm())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::derivative::eigenvalue_derivative;

    fn small() -> DiffusionProblem {
        DiffusionProblem::new(ProblemConfig {
            n: 9,
            ..Default::default()
        })
        .unwrap()
    }

    #[test]
    fn reference_cluster_is_double() {
        let p = small();
        assert_eq!(p.m(), 2);
        assert_eq!(p.cluster.indices, 1..3);
        assert!(p.kl_mu.rank() > 0);
    }

    #[test]
    fn zero_amplitude_reproduces_reference() {
        let p = small();
        let r = p.draw(3, 0);
        let t = p.solve_sample(0.0, 0.0, &r).unwrap();
        for v in &t.values {
            assert!((v - p.lambda0()).abs() < 1e-9 * p.lambda0());
        }
    }

    #[test]
    fn positivity_is_enforced() {
        let p = small();
        let r = Realization {
            z_mu: vec![0.5; p.kl_mu.rank()],
            z_eps: vec![0.0; p.kl_eps.rank()],
        };
        assert!(matches!(
            p.assemble(-100.0, 0.0, &r),
            Err(Error::NonPositiveCoefficient { .. })
        ));
    }

    #[test]
    fn finite_differences_converge_at_second_order() {
        let p = small();
        let r = p.draw(5, 1);
        let (a1, m1) = p.directions(&r);
        let (dmu, deps) = eigenvalue_derivative(p.u0(), &a1, &m1, p.lambda0()).unwrap();
        let dl = dmu + deps;
        let e1 = fd_error(&p, &a1, &m1, &dl, 1e-2).unwrap();
        let e2 = fd_error(&p, &a1, &m1, &dl, 5e-3).unwrap();
        let order = (e1 / e2).log2();
        assert!(order > 1.8, "observed order {order} ({e1:e}, {e2:e})");
    }
}
