//! Rotating sampled eigenbases onto a reference basis.
//!
//! For a perturbed basis `P` and reference `R0`, the cross-mass matrix
//! `G = Pᵀ M0 R0` has the SVD `G = U Σ Vᵀ`. With the rotation `Q = U Vᵀ`,
//! `(P Q)ᵀ M0 R0 = V Σ Vᵀ`, which is symmetric positive semidefinite and
//! equals `I` when `P` spans the reference space exactly.

use nalgebra::DMatrix;

use crate::derivative::{polarized_predict, DerivativeBundle};
use crate::error::{Error, Result};
use crate::linalg::{procrustes, CsrMatrix};

/// Singular values below this reject the alignment.
pub const MIN_SINGULAR: f64 = 0.5;

#[derive(Debug, Clone)]
pub struct AlignmentResult {
    /// Orthogonal `m × m`; determinant may be −1.
    pub rotation: DMatrix<f64>,
    pub aligned_basis: DMatrix<f64>,
    pub aligned_lambda: DMatrix<f64>,
    /// Singular values of the cross-mass matrix, descending.
    pub singulars: Vec<f64>,
}

impl AlignmentResult {
    pub fn min_singular(&self) -> f64 {
        self.singulars.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

/// Rotates `perturbed_basis` (and conjugates `perturbed_lambda`) so that it
/// best matches `reference_basis` in the `m0` inner product.
pub fn align(
    perturbed_basis: &DMatrix<f64>,
    perturbed_lambda: &DMatrix<f64>,
    reference_basis: &DMatrix<f64>,
    m0: &CsrMatrix,
) -> Result<AlignmentResult> {
    align_with_threshold(perturbed_basis, perturbed_lambda, reference_basis, m0, MIN_SINGULAR)
}

pub fn align_with_threshold(
    perturbed_basis: &DMatrix<f64>,
    perturbed_lambda: &DMatrix<f64>,
    reference_basis: &DMatrix<f64>,
    m0: &CsrMatrix,
    min_singular: f64,
) -> Result<AlignmentResult> {
    if perturbed_basis.shape() != reference_basis.shape() {
        return Err(Error::Dimension(format!(
            "bases of shape {:?} and {:?}",
            perturbed_basis.shape(),
            reference_basis.shape()
        )));
    }
    let g = m0.bilinear(perturbed_basis, reference_basis);
    let (sv, rotation, _) = procrustes(&g);
    let singulars: Vec<f64> = sv.iter().copied().collect();
    let smin = singulars.iter().copied().fold(f64::INFINITY, f64::min);
    if !(smin >= min_singular) {
        return Err(Error::AlignmentRejected { min_singular: smin });
    }
    let aligned_basis = perturbed_basis * &rotation;
    let aligned_lambda = rotation.transpose() * perturbed_lambda * &rotation;
    Ok(AlignmentResult {
        rotation,
        aligned_basis,
        aligned_lambda,
        singulars,
    })
}

/// `sqrt(trace(Xᵀ M X))`, the L² norm of a block of discrete functions.
pub fn m_norm(x: &DMatrix<f64>, m: &CsrMatrix) -> f64 {
    x.dot(&m.mul_dense(x)).max(0.0).sqrt()
}

/// Errors of the two first-order predictions of one sampled cluster.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolarComparison {
    pub err_lambda_polar: f64,
    pub err_lambda_svd: f64,
    pub err_basis_polar: f64,
    pub err_basis_svd: f64,
    pub min_singular: f64,
    pub degenerate: bool,
}

/// Compares a sampled cluster `(basis, eigenvalues)` at `(α, β)` with both
/// first-order predictions.
///
/// The SVD route aligns the sample onto `u0` and compares against
/// `u0 + α dU_μ + β dU_ε` and `λ0 I + α dΛ_μ + β dΛ_ε`. The polarized route
/// compares sorted eigenvalues with `λ0 + Λ` from the polarization of
/// `α dΛ_μ + β dΛ_ε`, and the basis with `(u0 + α dU_μ + β dU_ε) Q0` after an
/// orthogonal fit of the sample onto that prediction.
#[allow(clippy::too_many_arguments)]
pub fn pairwise_polar_align(
    sample_basis: &DMatrix<f64>,
    sample_eigenvalues: &[f64],
    u0: &DMatrix<f64>,
    lambda0: f64,
    mu: &DerivativeBundle,
    eps: &DerivativeBundle,
    alpha: f64,
    beta: f64,
    m0: &CsrMatrix,
) -> Result<PolarComparison> {
    let m = u0.ncols();
    let lam = DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(sample_eigenvalues));
    let svd = align(sample_basis, &lam, u0, m0)?;
    let pred_lambda =
        DMatrix::identity(m, m) * lambda0 + &mu.dlambda * alpha + &eps.dlambda * beta;
    let pred_basis = u0 + &mu.du * alpha + &eps.du * beta;
    let err_lambda_svd = (&svd.aligned_lambda - pred_lambda).norm();
    let err_basis_svd = m_norm(&(&svd.aligned_basis - pred_basis), m0);

    let polar = polarized_predict(u0, lambda0, mu, eps, alpha, beta);
    let mut sorted = sample_eigenvalues.to_vec();
    sorted.sort_by(f64::total_cmp);
    let err_lambda_polar = sorted
        .iter()
        .zip(&polar.eigenvalues)
        .map(|(a, b)| (a - b).powi(2))
        .sum::<f64>()
        .sqrt();
    let fit = align_with_threshold(sample_basis, &lam, &polar.basis, m0, 0.0)?;
    let err_basis_polar = m_norm(&(&fit.aligned_basis - &polar.basis), m0);
    Ok(PolarComparison {
        err_lambda_polar,
        err_lambda_svd,
        err_basis_polar,
        err_basis_svd,
        min_singular: svd.min_singular(),
        degenerate: polar.polarization.degenerate,
    })
}
