//! Dense symmetric helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

/// Symmetric eigendecomposition with eigenvalues in ascending order.
pub fn sym_eigen_sorted(a: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let sym = symmetrize(a);
    let eig = SymmetricEigen::new(sym);
    let n = eig.eigenvalues.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let values = DVector::from_iterator(n, order.iter().map(|&i| eig.eigenvalues[i]));
    let vectors = DMatrix::from_fn(eig.eigenvectors.nrows(), n, |r, c| {
        eig.eigenvectors[(r, order[c])]
    });
    (values, vectors)
}

pub fn symmetrize(a: &DMatrix<f64>) -> DMatrix<f64> {
    (a + a.transpose()) * 0.5
}

/// Solves `A x = λ M x` for SPD `M`, returning ascending eigenvalues and
/// M-orthonormal eigenvectors.
pub fn generalized_eigen(a: &DMatrix<f64>, m: &DMatrix<f64>) -> Result<(DVector<f64>, DMatrix<f64>)> {
    if a.shape() != m.shape() || !a.is_square() {
        return Err(Error::Dimension(format!(
            "pencil shapes {:?} and {:?}",
            a.shape(),
            m.shape()
        )));
    }
    let chol = m
        .clone()
        .cholesky()
        .ok_or_else(|| Error::NotPositiveDefinite("mass matrix".into()))?;
    let l = chol.l();
    // C = L⁻¹ A L⁻ᵀ
    let linv_a = l
        .solve_lower_triangular(a)
        .ok_or_else(|| Error::Singular("Cholesky factor".into()))?;
    let c = l
        .solve_lower_triangular(&linv_a.transpose())
        .ok_or_else(|| Error::Singular("Cholesky factor".into()))?;
    let (values, y) = sym_eigen_sorted(&c);
    let u = l
        .transpose()
        .solve_upper_triangular(&y)
        .ok_or_else(|| Error::Singular("Cholesky factor".into()))?;
    Ok((values, u))
}

/// Singular values of a small matrix together with the Procrustes factor
/// `U Vᵀ` of its SVD.
pub fn procrustes(g: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>, DMatrix<f64>) {
    let svd = g.clone().svd(true, true);
    let u = svd.u.expect("u requested");
    let vt = svd.v_t.expect("v_t requested");
    let r = &u * &vt;
    (svd.singular_values, r, vt)
}

/// Frobenius norm of `x` in the inner product induced by `m` applied column-wise:
/// `sqrt(trace(xᵀ M x))`.
pub fn m_norm(x: &DMatrix<f64>, mx: &DMatrix<f64>) -> f64 {
    x.dot(mx).max(0.0).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sorted_eigen_is_ascending_and_orthonormal() {
        let a = DMatrix::from_row_slice(3, 3, &[2.0, 1.0, 0.0, 1.0, 3.0, 1.0, 0.0, 1.0, 4.0]);
        let (vals, vecs) = sym_eigen_sorted(&a);
        assert!(vals[0] <= vals[1] && vals[1] <= vals[2]);
        let id = vecs.transpose() * &vecs;
        assert!((id - DMatrix::identity(3, 3)).norm() < 1e-12);
        let recon = &vecs * DMatrix::from_diagonal(&vals) * vecs.transpose();
        assert!((recon - a).norm() < 1e-12);
    }

    #[test]
    fn generalized_pencil() {
        let a = DMatrix::from_row_slice(2, 2, &[2.0, -1.0, -1.0, 2.0]);
        let m = DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 1.0]);
        let (vals, u) = generalized_eigen(&a, &m).unwrap();
        let gram = u.transpose() * &m * &u;
        assert!((gram - DMatrix::identity(2, 2)).norm() < 1e-12);
        for k in 0..2 {
            let r = &a * u.column(k) - &m * u.column(k) * vals[k];
            assert!(r.norm() < 1e-12);
        }
        // det(A - λM) = (2-2λ)(2-λ) - 1 = 0  ⇒  2λ² - 6λ + 3 = 0
        let disc = (36.0f64 - 24.0).sqrt();
        assert!((vals[0] - (6.0 - disc) / 4.0).abs() < 1e-12);
    }

    #[test]
    fn procrustes_of_rotation_is_itself() {
        let (s, c) = (0.3f64.sin(), 0.3f64.cos());
        let g = DMatrix::from_row_slice(2, 2, &[c, -s, s, c]);
        let (sv, r, _) = procrustes(&g);
        assert!((sv[0] - 1.0).abs() < 1e-12 && (sv[1] - 1.0).abs() < 1e-12);
        assert!((r - g).norm() < 1e-12);
    }
}
