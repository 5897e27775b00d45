use nalgebra::DMatrix;
use rand::seq::index;
use serde::{Deserialize, Serialize};

use super::embed::{cosines, unit_rows};
use super::{alpha_cosine, zscore_features, RelError};
use crate::rng;

/// Alignment statistics over repeated anchor draws of one size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationPoint {
    pub k: usize,
    pub mean: f64,
    /// Population std across repeats.
    pub std: f64,
    pub values: Vec<f64>,
}

impl AblationPoint {
    fn from_values(k: usize, values: Vec<f64>) -> Self {
        let n = values.len().max(1) as f64;
        let mean = values.iter().sum::<f64>() / n;
        let std = (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n).sqrt();
        Self {
            k,
            mean,
            std,
            values,
        }
    }
}

fn prepared(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<(DMatrix<f64>, DMatrix<f64>), RelError> {
    if a.nrows() != b.nrows() {
        return Err(RelError::Shape(format!(
            "{} vs {} samples",
            a.nrows(),
            b.nrows()
        )));
    }
    Ok((
        unit_rows(&zscore_features(a)?)?,
        unit_rows(&zscore_features(b)?)?,
    ))
}

/// Mean-cosine alignment for `repeats` shared anchor draws of every size in `ks`.
///
/// Draw `r` of size `K` uses its own RNG stream, so results do not depend on
/// the order in which sizes are visited.
pub fn anchor_ablation(
    z_model: &DMatrix<f64>,
    z_reference: &DMatrix<f64>,
    ks: &[usize],
    repeats: usize,
    seed: u64,
) -> Result<Vec<AblationPoint>, RelError> {
    let n = z_model.nrows();
    if let Some(&kmax) = ks.iter().max() {
        if kmax > n {
            return Err(RelError::InsufficientSamples {
                need: kmax,
                have: n,
            });
        }
    }
    let (ua, ub) = prepared(z_model, z_reference)?;
    ks.iter()
        .map(|&k| {
            let stream_seed = rng::derive(seed, &format!("ablation/{k}"));
            let values = (0..repeats)
                .map(|r| {
                    let mut g = rng::stream(stream_seed, r as u64);
                    let mut idx = index::sample(&mut g, n, k).into_vec();
                    idx.sort_unstable();
                    alpha_cosine(&cosines(&ua, &ua, &idx), &cosines(&ub, &ub, &idx))
                })
                .collect::<Result<Vec<_>, _>>()?;
            Ok(AblationPoint::from_values(k, values))
        })
        .collect()
}

/// Control with unrelated anchors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomBaseline {
    pub k: usize,
    pub mean: f64,
    pub std: f64,
    pub values: Vec<f64>,
}

/// Alignment when the two spaces use disjoint anchor sets: each repeat draws
/// `2K` distinct samples, the first `K` anchor the model and the rest the reference.
pub fn random_baseline(
    z_model: &DMatrix<f64>,
    z_reference: &DMatrix<f64>,
    k: usize,
    repeats: usize,
    seed: u64,
) -> Result<RandomBaseline, RelError> {
    let n = z_model.nrows();
    if 2 * k > n || k == 0 {
        return Err(RelError::InsufficientSamples {
            need: 2 * k.max(1),
            have: n,
        });
    }
    let (ua, ub) = prepared(z_model, z_reference)?;
    let stream_seed = rng::derive(seed, &format!("random-baseline/{k}"));
    let values = (0..repeats)
        .map(|r| {
            let mut g = rng::stream(stream_seed, r as u64);
            let idx = index::sample(&mut g, n, 2 * k).into_vec();
            alpha_cosine(&cosines(&ua, &ua, &idx[..k]), &cosines(&ub, &ub, &idx[k..]))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let p = AblationPoint::from_values(k, values);
    Ok(RandomBaseline {
        k,
        mean: p.mean,
        std: p.std,
        values: p.values,
    })
}
