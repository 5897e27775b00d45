use nalgebra::DMatrix;

use super::train::batch_tensors;
use super::{ForecasterCheckpoint, ModelError};
use crate::dynsys::{Split, TrajectorySet, WindowRef};

pub const TRUE_SYSTEM_ID: &str = "True System";

/// Latents of a fixed list of windows; row `i` belongs to `sample_index[i]`.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentMatrix {
    pub z: DMatrix<f64>,
    pub sample_index: Vec<WindowRef>,
    pub split: Split,
    pub forecaster_id: String,
}

impl LatentMatrix {
    pub fn new(
        z: DMatrix<f64>,
        sample_index: Vec<WindowRef>,
        split: Split,
        forecaster_id: impl Into<String>,
    ) -> Result<Self, ModelError> {
        if z.nrows() != sample_index.len() {
            return Err(ModelError::Shape(format!(
                "{} latent rows for {} samples",
                z.nrows(),
                sample_index.len()
            )));
        }
        if z.iter().any(|v| !v.is_finite()) {
            return Err(ModelError::Ad(crate::autodiff::AdError::NonFinite {
                op: "latent",
            }));
        }
        Ok(Self {
            z,
            sample_index,
            split,
            forecaster_id: forecaster_id.into(),
        })
    }

    pub fn n(&self) -> usize {
        self.z.nrows()
    }

    pub fn k(&self) -> usize {
        self.z.ncols()
    }
}

const CHUNK: usize = 256;

/// Encodes the windows of `sample_index` in order.
pub fn collect_latents(
    ckpt: &ForecasterCheckpoint,
    set: &TrajectorySet,
    split: Split,
    sample_index: &[WindowRef],
) -> Result<LatentMatrix, ModelError> {
    ckpt.check_dataset(set)?;
    let model = &ckpt.model;
    let (l, h) = (model.spec.input_len, model.spec.horizon);
    let k = model.spec.code_dim();
    let mut z = DMatrix::<f64>::zeros(sample_index.len(), k);
    for (c, chunk) in sample_index.chunks(CHUNK).enumerate() {
        let (x, _) = batch_tensors(set, split, chunk, l, h)?;
        let lat = model.encode_batch(&x)?;
        for i in 0..chunk.len() {
            for j in 0..k {
                z[(c * CHUNK + i, j)] = lat.at(i, j);
            }
        }
    }
    LatentMatrix::new(z, sample_index.to_vec(), split, ckpt.id())
}

/// Reference representation: each window's normalized input, flattened row-major (`k = L·d`).
///
/// `horizon` only bounds which windows are valid, so that the rows line up with a
/// forecaster's sample list.
pub fn true_system_latents(
    set: &TrajectorySet,
    split: Split,
    sample_index: &[WindowRef],
    input_len: usize,
    horizon: usize,
) -> Result<LatentMatrix, ModelError> {
    let (x, _) = batch_tensors(set, split, sample_index, input_len, horizon)?;
    let z = DMatrix::from_row_slice(sample_index.len(), input_len * set.dim(), x.data());
    LatentMatrix::new(z, sample_index.to_vec(), split, TRUE_SYSTEM_ID)
}

/// `N × d` state at the last input step of each window, the target of linear probes.
pub fn current_states(
    set: &TrajectorySet,
    split: Split,
    sample_index: &[WindowRef],
    input_len: usize,
    horizon: usize,
) -> Result<DMatrix<f64>, ModelError> {
    let d = set.dim();
    let (x, _) = batch_tensors(set, split, sample_index, input_len, horizon)?;
    Ok(DMatrix::from_fn(sample_index.len(), d, |i, c| {
        x.at(i, (input_len - 1) * d + c)
    }))
}
