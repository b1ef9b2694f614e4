//! Dense symmetric helpers shared by the solvers.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};

use crate::error::{Error, Result};

/// Symmetric eigendecomposition with eigenvalues sorted ascending and the
/// eigenvector columns permuted to match.
pub fn sorted_symmetric_eigen(m: &DMatrix<f64>) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let n = m.nrows();
    if n == 0 {
        return Ok((DVector::zeros(0), DMatrix::zeros(0, 0)));
    }
    let sym = (m + m.transpose()) * 0.5;
    let eig = SymmetricEigen::try_new(sym, f64::EPSILON, 0).ok_or(Error::EigensolveFailure)?;
    if eig.eigenvalues.iter().any(|x| !x.is_finite()) {
        return Err(Error::EigensolveFailure);
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = DVector::from_iterator(n, order.iter().map(|&i| eig.eigenvalues[i]));
    let mut vectors = DMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    Ok((values, vectors))
}

/// `Φ diag(values) Φᵀ`.
pub fn spectral_matrix(vectors: &DMatrix<f64>, values: &[f64]) -> DMatrix<f64> {
    let mut scaled = vectors.clone();
    for (j, &v) in values.iter().enumerate() {
        scaled.column_mut(j).scale_mut(v);
    }
    let mut out = &scaled * vectors.transpose();
    symmetrize(&mut out);
    out
}

pub fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in 0..i {
            let avg = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = avg;
            m[(j, i)] = avg;
        }
    }
}

/// Cholesky factorization, retried with diagonal jitter `base·10^k` for
/// `k = 0..=retries` when the plain factorization fails. Returns the factor
/// and the jitter that was finally added (0 when none was needed).
pub fn cholesky_with_jitter(
    m: &DMatrix<f64>,
    base: f64,
    retries: u32,
) -> Option<(Cholesky<f64, Dyn>, f64)> {
    if let Some(c) = Cholesky::new(m.clone()) {
        return Some((c, 0.0));
    }
    let base = if base > 0.0 { base } else { f64::EPSILON };
    let mut jitter = base;
    for _ in 0..=retries {
        let mut shifted = m.clone();
        for i in 0..shifted.nrows() {
            shifted[(i, i)] += jitter;
        }
        if let Some(c) = Cholesky::new(shifted) {
            return Some((c, jitter));
        }
        jitter *= 10.0;
    }
    None
}

/// Factor `k + shift·I` for a PSD kernel matrix `k`, escalating jitter
/// `1e-12·tr(k)/M` (×10 per retry, three retries) on failure.
pub fn factor_regularized(k: &DMatrix<f64>, shift: f64) -> Result<Cholesky<f64, Dyn>> {
    let m = k.nrows();
    let mut a = k.clone();
    for i in 0..m {
        a[(i, i)] += shift;
    }
    let base = if m == 0 { 0.0 } else { 1e-12 * k.trace().abs() / m as f64 };
    if let Some(c) = Cholesky::new(a.clone()) {
        return Ok(c);
    }
    if base <= 0.0 {
        return Err(Error::SolveFailure);
    }
    let mut jitter = base;
    for _ in 0..3 {
        let mut shifted = a.clone();
        for i in 0..m {
            shifted[(i, i)] += jitter;
        }
        if let Some(c) = Cholesky::new(shifted) {
            return Ok(c);
        }
        jitter *= 10.0;
    }
    Err(Error::SolveFailure)
}

/// Evaluate `Σ c_k x^k` by Horner's rule.
pub fn poly_eval(coeffs: &[f64], x: f64) -> f64 {
    coeffs.iter().rev().fold(0.0, |acc, &c| acc * x + c)
}

/// Evaluate `Σ c_k A^k` for a square matrix by Horner's rule.
pub fn poly_eval_matrix(coeffs: &[f64], a: &DMatrix<f64>) -> DMatrix<f64> {
    let n = a.nrows();
    let mut acc = DMatrix::zeros(n, n);
    for &c in coeffs.iter().rev() {
        acc = &acc * a;
        for i in 0..n {
            acc[(i, i)] += c;
        }
    }
    acc
}
