//! Similarity of absolute latents: linear CKA, RSA and orthogonal Procrustes.

use nalgebra::DMatrix;

use super::metrics::{descending_ranks, pearson};
use super::RelError;
use crate::linalg::{center_cols, singular_values};

fn same_rows(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<(), RelError> {
    if a.nrows() != b.nrows() || a.nrows() < 2 {
        return Err(RelError::Shape(format!(
            "{} vs {} samples",
            a.nrows(),
            b.nrows()
        )));
    }
    Ok(())
}

/// Linear CKA, `‖YᵀX‖² / (‖XᵀX‖ ‖YᵀY‖)` on column-centered inputs.
pub fn baseline_cka(z1: &DMatrix<f64>, z2: &DMatrix<f64>) -> Result<f64, RelError> {
    same_rows(z1, z2)?;
    let (x, y) = (center_cols(z1), center_cols(z2));
    let xx = x.tr_mul(&x).norm();
    let yy = y.tr_mul(&y).norm();
    if xx == 0.0 || yy == 0.0 {
        return Err(RelError::DegenerateInput(
            "all-zero centered Gram matrix".into(),
        ));
    }
    Ok(y.tr_mul(&x).norm_squared() / (xx * yy))
}

fn upper_distances(z: &DMatrix<f64>) -> Vec<f64> {
    let n = z.nrows();
    let mut out = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        for j in i + 1..n {
            out.push((z.row(i) - z.row(j)).norm());
        }
    }
    out
}

/// Spearman correlation of the upper-triangle Euclidean distance matrices.
pub fn baseline_rsa(z1: &DMatrix<f64>, z2: &DMatrix<f64>) -> Result<f64, RelError> {
    same_rows(z1, z2)?;
    let (d1, d2) = (upper_distances(z1), upper_distances(z2));
    pearson(&descending_ranks(&d1), &descending_ranks(&d2))
        .ok_or_else(|| RelError::DegenerateInput("constant distance ranks".into()))
}

fn prepared(z: &DMatrix<f64>, k: usize) -> Result<DMatrix<f64>, RelError> {
    let mut c = center_cols(z);
    let norm = c.norm();
    if norm == 0.0 {
        return Err(RelError::DegenerateInput(
            "all-zero centered latents".into(),
        ));
    }
    c /= norm;
    Ok(c.resize_horizontally(k, 0.0))
}

/// `1 −` the residual of the best orthogonal map plus scaling between centered,
/// unit-Frobenius inputs (the narrower input is zero-padded), i.e. `(Σ σᵢ(XᵀY))²`.
pub fn baseline_procrustes(z1: &DMatrix<f64>, z2: &DMatrix<f64>) -> Result<f64, RelError> {
    same_rows(z1, z2)?;
    let k = z1.ncols().max(z2.ncols());
    let (x, y) = (prepared(z1, k)?, prepared(z2, k)?);
    let nuclear: f64 = singular_values(&x.tr_mul(&y)).iter().sum();
    Ok((nuclear * nuclear).min(1.0))
}
