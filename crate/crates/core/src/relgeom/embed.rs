use nalgebra::DMatrix;
use rand::seq::index;
use serde::{Deserialize, Serialize};

use super::RelError;
use crate::rng;

const EPS: f64 = 1e-12;

/// Indices of anchor rows into a shared sample list.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnchorSet {
    pub indices: Vec<usize>,
}

impl AnchorSet {
    /// Checks that `indices` are distinct and below `n`.
    pub fn new(indices: Vec<usize>, n: usize) -> Result<Self, RelError> {
        let mut seen = vec![false; n];
        for &i in &indices {
            if i >= n || seen[i] {
                return Err(RelError::BadAnchor { index: i, n });
            }
            seen[i] = true;
        }
        Ok(Self { indices })
    }

    /// `m` distinct indices out of `n`, in ascending order.
    pub fn sample(n: usize, m: usize, seed: u64) -> Result<Self, RelError> {
        if m > n {
            return Err(RelError::InsufficientSamples { need: m, have: n });
        }
        let mut g = rng::stream(rng::derive(seed, "anchors"), m as u64);
        let mut indices = index::sample(&mut g, n, m).into_vec();
        indices.sort_unstable();
        Ok(Self { indices })
    }

    pub fn m(&self) -> usize {
        self.indices.len()
    }
}

/// Feature-wise mean and population std.
#[derive(Debug, Clone, PartialEq)]
pub struct ZScore {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl ZScore {
    pub fn fit(z: &DMatrix<f64>) -> Result<Self, RelError> {
        if z.nrows() == 0 {
            return Err(RelError::InsufficientSamples { need: 1, have: 0 });
        }
        let n = z.nrows() as f64;
        let mut mean = Vec::with_capacity(z.ncols());
        let mut std = Vec::with_capacity(z.ncols());
        for (j, col) in z.column_iter().enumerate() {
            let m = col.sum() / n;
            let s = (col.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n).sqrt();
            if !(s > EPS) {
                return Err(RelError::DegenerateFeature { column: j, std: s });
            }
            mean.push(m);
            std.push(s);
        }
        Ok(Self { mean, std })
    }

    pub fn apply(&self, z: &DMatrix<f64>) -> Result<DMatrix<f64>, RelError> {
        if z.ncols() != self.mean.len() {
            return Err(RelError::Shape(format!(
                "{} features, stats for {}",
                z.ncols(),
                self.mean.len()
            )));
        }
        let mut out = z.clone();
        for (j, mut col) in out.column_iter_mut().enumerate() {
            col.apply(|v| *v = (*v - self.mean[j]) / self.std[j]);
        }
        Ok(out)
    }
}

/// Z-scores each column with its own mean and population std.
pub fn zscore_features(z: &DMatrix<f64>) -> Result<DMatrix<f64>, RelError> {
    ZScore::fit(z)?.apply(z)
}

/// `N × m` cosine similarities of every latent to every anchor.
#[derive(Debug, Clone, PartialEq)]
pub struct RelativeEmbedding {
    pub r: DMatrix<f64>,
    pub anchors: AnchorSet,
    pub standardized: bool,
}

/// Scales rows to unit norm.
pub(crate) fn unit_rows(z: &DMatrix<f64>) -> Result<DMatrix<f64>, RelError> {
    let mut out = z.clone();
    for (i, mut row) in out.row_iter_mut().enumerate() {
        let norm = row.norm();
        if !(norm >= EPS) {
            return Err(RelError::ZeroVector { row: i });
        }
        row /= norm;
    }
    Ok(out)
}

/// Cosines of unit rows against the selected anchor rows.
pub(crate) fn cosines(
    unit: &DMatrix<f64>,
    anchor_unit: &DMatrix<f64>,
    anchors: &[usize],
) -> DMatrix<f64> {
    let a = anchor_unit.select_rows(anchors);
    unit * a.transpose()
}

/// Relative embedding of `z` with respect to its own rows `anchors`.
///
/// With `standardize`, features are z-scored over all `N` rows first.
pub fn relative_embed(
    z: &DMatrix<f64>,
    anchors: &AnchorSet,
    standardize: bool,
) -> Result<RelativeEmbedding, RelError> {
    for &i in &anchors.indices {
        if i >= z.nrows() {
            return Err(RelError::BadAnchor {
                index: i,
                n: z.nrows(),
            });
        }
    }
    let base = if standardize {
        zscore_features(z)?
    } else {
        z.clone()
    };
    let unit = unit_rows(&base)?;
    Ok(RelativeEmbedding {
        r: cosines(&unit, &unit, &anchors.indices),
        anchors: anchors.clone(),
        standardized: standardize,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_point_column() {
        let z = DMatrix::from_column_slice(2, 1, &[0.0, 2.0]);
        assert_eq!(zscore_features(&z).unwrap().as_slice(), &[-1.0, 1.0]);
    }

    #[test]
    fn zscore_is_idempotent() {
        let z = DMatrix::from_fn(7, 3, |i, j| ((i * 5 + j * 3) % 7) as f64 * (j + 1) as f64);
        let once = zscore_features(&z).unwrap();
        let twice = zscore_features(&once).unwrap();
        assert!((once - twice).amax() < 1e-12);
    }

    #[test]
    fn constant_column_is_degenerate() {
        let z = DMatrix::from_fn(4, 2, |i, j| if j == 1 { 3.0 } else { i as f64 });
        assert!(matches!(
            zscore_features(&z),
            Err(RelError::DegenerateFeature { column: 1, .. })
        ));
    }

    #[test]
    fn anchor_rows_have_unit_self_similarity() {
        let z = DMatrix::from_fn(10, 4, |i, j| {
            ((i * 7 + j * 11) % 13) as f64 - 6.0 + 0.1 * i as f64
        });
        let anchors = AnchorSet::new(vec![2, 5, 9], 10).unwrap();
        let r = relative_embed(&z, &anchors, true).unwrap().r;
        for (col, &row) in anchors.indices.iter().enumerate() {
            assert!((r[(row, col)] - 1.0).abs() < 1e-12);
        }
        assert!(r.iter().all(|v| (-1.0 - 1e-12..=1.0 + 1e-12).contains(v)));
    }

    #[test]
    fn orthogonal_rows_give_zero() {
        let z = DMatrix::from_row_slice(3, 3, &[1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 2.0]);
        let anchors = AnchorSet::new(vec![0], 3).unwrap();
        let r = relative_embed(&z, &anchors, false).unwrap().r;
        assert_eq!(r.as_slice(), &[1.0, 0.0, 0.0]);
    }

    #[test]
    fn zero_row_is_rejected() {
        let z = DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 1.0, 1.0]);
        let anchors = AnchorSet::new(vec![1], 2).unwrap();
        assert_eq!(
            relative_embed(&z, &anchors, false).unwrap_err(),
            RelError::ZeroVector { row: 0 }
        );
    }

    #[test]
    fn anchor_sets_validate_and_sample_distinct() {
        assert!(AnchorSet::new(vec![1, 1], 3).is_err());
        assert!(AnchorSet::new(vec![3], 3).is_err());
        let a = AnchorSet::sample(100, 80, 4).unwrap();
        let mut d = a.indices.clone();
        d.dedup();
        assert_eq!(d.len(), 80);
        assert_eq!(a, AnchorSet::sample(100, 80, 4).unwrap());
        assert!(AnchorSet::sample(5, 6, 0).is_err());
    }
}
