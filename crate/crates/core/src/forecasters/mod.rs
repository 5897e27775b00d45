//! Encoder–propagator–decoder forecasters, the echo-state baseline, training,
//! evaluation and latent collection.
//!
//! Every trainable model maps an input window `x[s..s+L]` (flattened row-major
//! to a vector of `L·d` values) to a latent `z₀`, advances it to `z_H` with a
//! propagator and decodes `z_H` into an `H × d` forecast (flattened to `H·d`).
//! Parameters live in one [`ParamSet`](crate::autodiff::ParamSet) whose names
//! are prefixed `enc.`, `prop.` and `dec.`.

mod checkpoint;
mod esn;
mod eval;
mod latents;
mod layers;
mod model;
mod spec;
mod train;

pub use checkpoint::{ForecasterCheckpoint, CHECKPOINT_VERSION};
pub use esn::{esn_fit, reservoir_states};
pub use eval::{evaluate, evaluate_predictions, mean_mse, EvalReport};
pub use latents::{
    collect_latents, current_states, true_system_latents, LatentMatrix, TRUE_SYSTEM_ID,
};
pub use model::{
    decode_graph, encode_graph, init_decoder, init_encoder, init_propagator, propagate_graph,
    Forecaster,
};
pub use spec::{Family, ForecasterSpec, PropagatorKind};
pub use train::{batch_tensors, train, train_with, EpochLog, TrainHooks};

use thiserror::Error;

use crate::autodiff::AdError;
use crate::dynsys::DynError;
use crate::linalg::LinalgError;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("invalid forecaster spec: {0}")]
    InvalidSpec(String),
    #[error("shape error: {0}")]
    Shape(String),
    #[error("sample {index} out of range ({len} windows)")]
    Index { index: usize, len: usize },
    #[error("training diverged at epoch {epoch} (non-finite loss)")]
    Diverged { epoch: usize },
    #[error("ridge normal equations are numerically singular; use ridge_lambda > 0")]
    SingularSystem,
    #[error("checkpoint does not match dataset: {0}")]
    Incompatible(String),
    #[error("i/o error: {0}")]
    Io(String),
    #[error("checkpoint format error: {0}")]
    Format(String),
    #[error(transparent)]
    Ad(#[from] AdError),
    #[error(transparent)]
    Dyn(#[from] DynError),
    #[error(transparent)]
    Linalg(LinalgError),
}

impl From<LinalgError> for ModelError {
    fn from(e: LinalgError) -> Self {
        match e {
            LinalgError::Singular => ModelError::SingularSystem,
            other => ModelError::Linalg(other),
        }
    }
}

impl ModelError {
    /// True for failures of the numerics rather than of the inputs.
    pub fn is_numeric(&self) -> bool {
        matches!(
            self,
            ModelError::Diverged { .. }
                | ModelError::SingularSystem
                | ModelError::Linalg(_)
                | ModelError::Ad(AdError::NonFinite { .. } | AdError::Degenerate { .. })
                | ModelError::Dyn(
                    DynError::NonFiniteState { .. }
                        | DynError::StepSizeUnderflow { .. }
                        | DynError::GenerationFailed { .. }
                )
        )
    }
}

#[cfg(test)]
pub(crate) mod tests;
