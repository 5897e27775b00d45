use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::RelError;
use crate::linalg::{col_means, ridge_solve, LinalgError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeReport {
    /// Test-row R² per target channel.
    pub r2: Vec<f64>,
    pub mean_r2: f64,
    pub lambda: f64,
}

/// Fits `X ≈ Z W + b` by ridge regression on `train` rows (the intercept is
/// not penalized) and scores R² on `test` rows.
pub fn probe_ridge(
    z: &DMatrix<f64>,
    x: &DMatrix<f64>,
    lambda: f64,
    train: &[usize],
    test: &[usize],
) -> Result<ProbeReport, RelError> {
    if z.nrows() != x.nrows() {
        return Err(RelError::Shape(format!(
            "{} latent rows, {} target rows",
            z.nrows(),
            x.nrows()
        )));
    }
    if train.is_empty() || test.len() < 2 {
        return Err(RelError::InsufficientSamples {
            need: 2,
            have: train.len().min(test.len()),
        });
    }
    if let Some(&bad) = train.iter().chain(test).find(|&&i| i >= z.nrows()) {
        return Err(RelError::BadAnchor {
            index: bad,
            n: z.nrows(),
        });
    }
    let (ztr, xtr) = (z.select_rows(train), x.select_rows(train));
    let (mz, mx) = (col_means(&ztr), col_means(&xtr));
    let mut zc = ztr;
    for mut row in zc.row_iter_mut() {
        row -= mz.transpose();
    }
    let mut xc = xtr;
    for mut row in xc.row_iter_mut() {
        row -= mx.transpose();
    }
    let w = ridge_solve(&zc, &xc, lambda).map_err(|e| match e {
        LinalgError::Singular => RelError::SingularSystem,
        other => RelError::DegenerateInput(other.to_string()),
    })?;

    let (zte, xte) = (z.select_rows(test), x.select_rows(test));
    let mut pred = zte * &w;
    let offset = mx.transpose() - mz.transpose() * &w;
    for mut row in pred.row_iter_mut() {
        row += &offset;
    }
    let mut r2 = Vec::with_capacity(x.ncols());
    for c in 0..x.ncols() {
        let truth = xte.column(c);
        let mean = truth.mean();
        let ss_tot: f64 = truth.iter().map(|v| (v - mean) * (v - mean)).sum();
        let ss_res: f64 = truth
            .iter()
            .zip(pred.column(c).iter())
            .map(|(t, p)| (t - p) * (t - p))
            .sum();
        if ss_tot == 0.0 {
            return Err(RelError::DegenerateInput(format!(
                "target channel {c} is constant on test rows"
            )));
        }
        r2.push(1.0 - ss_res / ss_tot);
    }
    let mean_r2 = r2.iter().sum::<f64>() / r2.len() as f64;
    Ok(ProbeReport {
        r2,
        mean_r2,
        lambda,
    })
}
