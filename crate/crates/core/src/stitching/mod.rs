//! Forecasters whose propagator and decoder read anchor-relative codes, and
//! encoder/decoder swaps between trained instances.
//!
//! A [`RelativeForecaster`] encodes a window to `z`, replaces it by the cosine
//! similarities of `z` to the latents of `m` shared anchor windows, z-scores
//! each similarity column with frozen train-split statistics and hands the
//! resulting `m`-vector to its propagator and decoder. Because every instance
//! trained against the same [`GlobalAnchors`] speaks the same `m`-dimensional
//! code, any encoder can be paired with any decoder without retraining.
//!
//! Absolute stitching pairs raw latents directly and needs equal latent sizes.

mod relative;
mod table;

pub use relative::{
    train_relative, train_relative_with, GlobalAnchors, RelativeForecaster, STITCH_ANCHORS,
};
pub use table::{
    stitch, stitch_absolute, stitch_grid, PairResult, StitchCell, StitchInstances, StitchMode,
    StitchTable,
};

use thiserror::Error;

use crate::forecasters::ModelError;
use crate::relgeom::RelError;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StitchError {
    #[error("anchor windows differ: {0}")]
    AnchorMismatch(String),
    #[error("latent sizes differ: encoder k={encoder}, decoder k={decoder}")]
    DimMismatch { encoder: usize, decoder: usize },
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Rel(#[from] RelError),
}

impl From<crate::autodiff::AdError> for StitchError {
    fn from(e: crate::autodiff::AdError) -> Self {
        StitchError::Model(e.into())
    }
}

impl From<crate::dynsys::DynError> for StitchError {
    fn from(e: crate::dynsys::DynError) -> Self {
        StitchError::Model(e.into())
    }
}

impl StitchError {
    pub fn is_numeric(&self) -> bool {
        match self {
            StitchError::Model(e) => e.is_numeric(),
            StitchError::Rel(RelError::SingularSystem) => true,
            _ => false,
        }
    }
}

#[cfg(test)]
mod tests;
