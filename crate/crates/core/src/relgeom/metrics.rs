use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::{relative_embed, AnchorSet, RelError};
use crate::forecasters::LatentMatrix;

fn same_shape(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<(), RelError> {
    if a.shape() != b.shape() {
        return Err(RelError::Shape(format!(
            "{:?} vs {:?}",
            a.shape(),
            b.shape()
        )));
    }
    if a.nrows() == 0 || a.ncols() == 0 {
        return Err(RelError::Shape("empty relative embedding".into()));
    }
    Ok(())
}

/// Mean over rows of the cosine between matching rows.
pub fn alpha_cosine(r1: &DMatrix<f64>, r2: &DMatrix<f64>) -> Result<f64, RelError> {
    same_shape(r1, r2)?;
    let mut total = 0.0;
    for (j, (a, b)) in r1.row_iter().zip(r2.row_iter()).enumerate() {
        let (na, nb) = (a.norm(), b.norm());
        if na < 1e-12 || nb < 1e-12 {
            return Err(RelError::ZeroVector { row: j });
        }
        total += a.dot(&b) / (na * nb);
    }
    Ok(total / r1.nrows() as f64)
}

fn argmax(row: impl Iterator<Item = f64>) -> usize {
    let mut best = (0, f64::NEG_INFINITY);
    for (i, v) in row.enumerate() {
        if v > best.1 {
            best = (i, v);
        }
    }
    best.0
}

/// Fraction of rows whose most similar anchor is the same in both embeddings.
pub fn alpha_t1(r1: &DMatrix<f64>, r2: &DMatrix<f64>) -> Result<f64, RelError> {
    same_shape(r1, r2)?;
    let hits = r1
        .row_iter()
        .zip(r2.row_iter())
        .filter(|(a, b)| argmax(a.iter().copied()) == argmax(b.iter().copied()))
        .count();
    Ok(hits as f64 / r1.nrows() as f64)
}

/// Rank of each entry in a descending stable sort (0 = largest; ties keep index order).
pub fn descending_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[b].total_cmp(&values[a]));
    let mut ranks = vec![0.0; values.len()];
    for (pos, &i) in order.iter().enumerate() {
        ranks[i] = pos as f64;
    }
    ranks
}

pub(crate) fn pearson(a: &[f64], b: &[f64]) -> Option<f64> {
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    (saa > 0.0 && sbb > 0.0).then(|| sab / (saa * sbb).sqrt())
}

/// Mean over rows of the Pearson correlation of descending anchor ranks.
pub fn alpha_rank(r1: &DMatrix<f64>, r2: &DMatrix<f64>) -> Result<f64, RelError> {
    same_shape(r1, r2)?;
    if r1.ncols() < 2 {
        return Err(RelError::Shape(
            "alpha_rank needs at least 2 anchors".into(),
        ));
    }
    let mut total = 0.0;
    for (a, b) in r1.row_iter().zip(r2.row_iter()) {
        let ra = descending_ranks(&a.iter().copied().collect::<Vec<_>>());
        let rb = descending_ranks(&b.iter().copied().collect::<Vec<_>>());
        total += pearson(&ra, &rb).expect("ranks of m >= 2 entries vary");
    }
    Ok(total / r1.nrows() as f64)
}

/// Alignment of two forecasters on a shared sample list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignmentReport {
    pub model_a: String,
    pub model_b: String,
    pub cosine: f64,
    pub t1: f64,
    pub rank: f64,
    pub n_samples: usize,
    pub n_anchors: usize,
    pub seed: u64,
}

/// Compares two latent matrices through standardized relative embeddings.
pub fn align(
    a: &LatentMatrix,
    b: &LatentMatrix,
    anchors: &AnchorSet,
    seed: u64,
) -> Result<AlignmentReport, RelError> {
    if a.sample_index != b.sample_index || a.split != b.split {
        return Err(RelError::Shape(format!(
            "{} and {} were collected on different samples",
            a.forecaster_id, b.forecaster_id
        )));
    }
    let ra = relative_embed(&a.z, anchors, true)?.r;
    let rb = relative_embed(&b.z, anchors, true)?.r;
    Ok(AlignmentReport {
        model_a: a.forecaster_id.clone(),
        model_b: b.forecaster_id.clone(),
        cosine: alpha_cosine(&ra, &rb)?,
        t1: alpha_t1(&ra, &rb)?,
        rank: alpha_rank(&ra, &rb)?,
        n_samples: a.n(),
        n_anchors: anchors.m(),
        seed,
    })
}
