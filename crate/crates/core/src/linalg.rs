//! Small dense symmetric-matrix helpers shared across modules.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Symmetrize in place: (M + M^T) / 2.
pub fn sym_part(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Eigendecomposition of a symmetric matrix, values ascending.
pub fn sym_eigen(m: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let se = sym_part(m).symmetric_eigen();
    // nalgebra returns unsorted eigenpairs; sort ascending for predictable use.
    let n = se.eigenvalues.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| se.eigenvalues[a].total_cmp(&se.eigenvalues[b]));
    let values = DVector::from_iterator(n, order.iter().map(|&i| se.eigenvalues[i]));
    let mut vectors = DMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &se.eigenvectors.column(src));
    }
    (values, vectors)
}

pub fn lambda_max(m: &DMatrix<f64>) -> f64 {
    let (vals, _) = sym_eigen(m);
    vals[vals.len() - 1]
}

pub fn lambda_min(m: &DMatrix<f64>) -> f64 {
    let (vals, _) = sym_eigen(m);
    vals[0]
}

/// Symmetric PSD square root, eigenvalues clamped at zero.
pub fn psd_sqrt(m: &DMatrix<f64>) -> DMatrix<f64> {
    let (vals, vecs) = sym_eigen(m);
    let sqrt_vals = vals.map(|v| v.max(0.0).sqrt());
    &vecs * DMatrix::from_diagonal(&sqrt_vals) * vecs.transpose()
}

/// Checks M ⪰ 0 within tol_psd = 1e-9 * (1 + ||M||_F).
pub fn check_psd(m: &DMatrix<f64>, context: &'static str) -> Result<()> {
    let tol = 1e-9 * (1.0 + m.norm());
    let min_eig = lambda_min(m);
    if min_eig < -tol {
        return Err(Error::NotPsd { context, min_eig });
    }
    Ok(())
}

/// Checks M ≻ 0 with an absolute floor tol_pd = 1e-10 on the minimum eigenvalue.
pub fn check_pd(m: &DMatrix<f64>, context: &'static str) -> Result<()> {
    let min_eig = lambda_min(m);
    if min_eig <= 1e-10 {
        return Err(Error::NotPd { context, min_eig });
    }
    Ok(())
}

pub fn check_symmetric(m: &DMatrix<f64>, context: &'static str) -> Result<()> {
    if !m.is_square() {
        return Err(Error::Dimension(format!(
            "{context}: expected a square matrix, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    let asym = (m - m.transpose()).norm();
    if asym > 1e-9 * (1.0 + m.norm()) {
        return Err(Error::InvalidInput(format!(
            "{context}: matrix is not symmetric (asymmetry {asym:.3e})"
        )));
    }
    Ok(())
}
