//! Dense helpers over `nalgebra` used by the ESN read-out, probes and alignment baselines.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinalgError {
    #[error("normal equations are numerically singular")]
    Singular,
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("eigenvalue iteration did not converge")]
    NoConvergence,
}

/// Solves `(GᵀG + λI) W = GᵀY` by Cholesky.
pub fn ridge_solve(
    g: &DMatrix<f64>,
    y: &DMatrix<f64>,
    lambda: f64,
) -> Result<DMatrix<f64>, LinalgError> {
    if g.nrows() != y.nrows() {
        return Err(LinalgError::Shape(format!(
            "G has {} rows, Y has {}",
            g.nrows(),
            y.nrows()
        )));
    }
    let mut gram = g.tr_mul(g);
    for i in 0..gram.nrows() {
        gram[(i, i)] += lambda;
    }
    let rhs = g.tr_mul(y);
    let max_diag = gram.diagonal().amax();
    let chol = nalgebra::Cholesky::new(gram).ok_or(LinalgError::Singular)?;
    let l = chol.l_dirty();
    let min_pivot = (0..l.nrows())
        .map(|i| l[(i, i)] * l[(i, i)])
        .fold(f64::INFINITY, f64::min);
    if !(min_pivot > 1e-13 * max_diag.max(f64::MIN_POSITIVE)) {
        return Err(LinalgError::Singular);
    }
    let w = chol.solve(&rhs);
    if w.iter().all(|v| v.is_finite()) {
        Ok(w)
    } else {
        Err(LinalgError::Singular)
    }
}

/// Largest eigenvalue modulus of a square matrix.
pub fn spectral_radius(m: &DMatrix<f64>) -> Result<f64, LinalgError> {
    if m.nrows() != m.ncols() {
        return Err(LinalgError::Shape(format!(
            "{}x{} is not square",
            m.nrows(),
            m.ncols()
        )));
    }
    if m.nrows() == 0 {
        return Ok(0.0);
    }
    let schur = nalgebra::linalg::Schur::try_new(m.clone(), f64::EPSILON, 100_000)
        .ok_or(LinalgError::NoConvergence)?;
    Ok(schur
        .complex_eigenvalues()
        .iter()
        .map(|c| c.norm())
        .fold(0.0, f64::max))
}

/// Singular values of `m`, descending.
pub fn singular_values(m: &DMatrix<f64>) -> DVector<f64> {
    let mut s = m.clone().svd(false, false).singular_values;
    s.as_mut_slice().sort_by(|a, b| b.total_cmp(a));
    s
}

/// Column means.
pub fn col_means(m: &DMatrix<f64>) -> DVector<f64> {
    let n = m.nrows().max(1) as f64;
    DVector::from_iterator(m.ncols(), m.column_iter().map(|c| c.sum() / n))
}

/// Subtracts column means.
pub fn center_cols(m: &DMatrix<f64>) -> DMatrix<f64> {
    let mu = col_means(m);
    let mut out = m.clone();
    for (j, mut col) in out.column_iter_mut().enumerate() {
        col.add_scalar_mut(-mu[j]);
    }
    out
}

/// Row-major copy of a matrix.
pub fn to_row_major(m: &DMatrix<f64>) -> Vec<f64> {
    let mut out = Vec::with_capacity(m.len());
    for i in 0..m.nrows() {
        out.extend(m.row(i).iter());
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ridge_satisfies_normal_equations() {
        let g = DMatrix::from_fn(30, 4, |i, j| {
            ((i * 7 + j * 3) % 11) as f64 - 5.0 + 0.1 * j as f64
        });
        let y = DMatrix::from_fn(30, 2, |i, j| (i as f64).sin() + j as f64);
        let lambda = 0.3;
        let w = ridge_solve(&g, &y, lambda).unwrap();
        let lhs = (g.tr_mul(&g) + DMatrix::identity(4, 4) * lambda) * &w;
        let rhs = g.tr_mul(&y);
        assert!((lhs - &rhs).norm() <= 1e-8 * rhs.norm());
    }

    #[test]
    fn ridge_rank_deficient_is_singular_without_lambda() {
        let g = DMatrix::from_fn(10, 3, |i, j| {
            if j == 2 {
                2.0 * i as f64
            } else {
                i as f64 + j as f64 * 0.0
            }
        });
        let y = DMatrix::from_element(10, 1, 1.0);
        assert_eq!(ridge_solve(&g, &y, 0.0), Err(LinalgError::Singular));
        assert!(ridge_solve(&g, &y, 1e-3).is_ok());
    }

    #[test]
    fn spectral_radius_of_rotation_and_diag() {
        let rot = DMatrix::from_row_slice(2, 2, &[0.0, -2.0, 2.0, 0.0]);
        assert!((spectral_radius(&rot).unwrap() - 2.0).abs() < 1e-12);
        let d = DMatrix::from_diagonal(&DVector::from_vec(vec![0.5, -3.0, 1.0]));
        assert!((spectral_radius(&d).unwrap() - 3.0).abs() < 1e-12);
    }

    #[test]
    fn row_major_order() {
        let m = DMatrix::from_row_slice(2, 3, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        assert_eq!(to_row_major(&m), vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
    }
}
