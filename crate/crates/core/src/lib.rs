//! Latent-space geometry of learned dynamical-system forecasters.
//!
//! - [`dynsys`] generates and stores trajectory datasets.
//! - [`autodiff`] is the tape-based gradient engine used for training.
//! - [`forecasters`] holds the encoder, propagator and decoder families.
//! - [`relgeom`] turns latents into anchor-relative embeddings and scores them.
//! - [`stitching`] trains relative forecasters and swaps encoders with decoders.
//!
//! See the guide in `book/` for worked examples.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::should_implement_trait, clippy::needless_range_loop)]

pub mod autodiff;
pub mod dynsys;
pub mod forecasters;
pub mod linalg;
pub mod relgeom;
pub mod rng;
pub mod stitching;

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/overview.md")]
    mod overview {}
    #[doc = include_str!("../../../book/src/datasets.md")]
    mod datasets {}
    #[doc = include_str!("../../../book/src/forecasters.md")]
    mod forecasters {}
    #[doc = include_str!("../../../book/src/relative.md")]
    mod relative {}
    #[doc = include_str!("../../../book/src/stitching.md")]
    mod stitching {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
