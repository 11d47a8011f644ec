//! Correlational recurrent encoder-decoder for two synchronized sequence
//! modalities: multimodal GRU encoder with dynamic modality weighting,
//! per-modality GRU decoders, fused/self/cross reconstruction plus
//! mini-batch correlation objective, exact BPTT gradients, adaptive SGD
//! training, and an evaluation kit for fusion, cross-modality and
//! shared-representation classification.

// `!(x > 0.0)` is used on purpose so NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

mod binio;

pub mod autograd;
pub mod dataio;
pub mod decoder;
pub mod encoder;
pub mod error;
pub mod evalkit;
pub mod numerics;
pub mod objective;
pub mod params;
pub mod trainer;

pub use error::{Error, Result};
