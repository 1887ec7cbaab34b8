//! Small dense linear-algebra helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

pub fn max_asymmetry(m: &DMatrix<f64>) -> f64 {
    let mut worst = 0.0f64;
    for i in 0..m.nrows() {
        for j in (i + 1)..m.ncols() {
            worst = worst.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    worst
}

pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Spectral norm of a symmetric matrix (largest absolute eigenvalue).
pub fn sym_spectral_norm(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 {
        return 0.0;
    }
    SymmetricEigen::new(symmetrize(m))
        .eigenvalues
        .iter()
        .fold(0.0f64, |acc, v| acc.max(v.abs()))
}

/// Smallest eigenvalue of a symmetric matrix.
pub fn sym_min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    SymmetricEigen::new(symmetrize(m))
        .eigenvalues
        .iter()
        .fold(f64::INFINITY, |acc, v| acc.min(*v))
}

/// Spectral norm of a general square matrix, sqrt(lambda_max(AᵀA)).
pub fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    sym_spectral_norm(&(m.transpose() * m)).sqrt()
}

pub fn check_finite_vec(v: &DVector<f64>, what: &'static str) -> Result<()> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(what))
    }
}

pub fn check_finite_mat(m: &DMatrix<f64>, what: &'static str) -> Result<()> {
    if m.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(what))
    }
}

/// Pairwise (cascade) summation in slice order. Deterministic for a fixed slice.
pub fn pairwise_sum_mat(items: &[DMatrix<f64>], rows: usize, cols: usize) -> DMatrix<f64> {
    match items.len() {
        0 => DMatrix::zeros(rows, cols),
        1 => items[0].clone(),
        n => {
            let (left, right) = items.split_at(n / 2);
            pairwise_sum_mat(left, rows, cols) + pairwise_sum_mat(right, rows, cols)
        }
    }
}

pub fn pairwise_sum_vec(items: &[DVector<f64>], len: usize) -> DVector<f64> {
    match items.len() {
        0 => DVector::zeros(len),
        1 => items[0].clone(),
        n => {
            let (left, right) = items.split_at(n / 2);
            pairwise_sum_vec(left, len) + pairwise_sum_vec(right, len)
        }
    }
}
