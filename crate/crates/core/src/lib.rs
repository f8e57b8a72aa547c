//! Modulation-domain Kalman filtering for single-channel speech denoising
//! and dereverberation.
//!
//! Each STFT bin's log-magnitude trajectory is tracked by two interacting
//! filters: an AR speech model and a first-order reverberation model whose
//! decay and gain parameters are themselves estimated online. See
//! [`enhancer::enhance`] for the whole pipeline.

// Negated comparisons are used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
pub mod config;
pub mod enhancer;
pub mod error;
pub mod lognorm;
pub mod matrix;
pub mod metrics;
pub mod reverb;
pub mod scalar;
pub mod simkit;
pub mod special;
pub mod speech;
pub mod stft;
pub mod trace;
pub mod wav;

pub use error::{Error, Result};
pub use scalar::Real;

#[cfg(any(test, feature = "oracle"))]
pub mod oracle;

/// Single-precision instantiations of the generic types.
pub mod f32 {
    pub type AudioBuffer = crate::stft::AudioBuffer<f32>;
    pub type SpectralFrames = crate::stft::SpectralFrames<f32>;
    pub type LogGaussian = crate::lognorm::LogGaussian<f32>;
    pub type Quadrature = crate::lognorm::Quadrature<f32>;
    pub type ReverbParams = crate::reverb::ReverbParams<f32>;
    pub type SpeechState = crate::speech::SpeechState<f32>;
    pub type ArModel = crate::speech::ArModel<f32>;
    pub type BinState = crate::enhancer::BinState<f32>;
    pub type Enhancement = crate::enhancer::Enhancement<f32>;
}

/// Double-precision instantiations of the generic types.
pub mod f64 {
    pub type AudioBuffer = crate::stft::AudioBuffer<f64>;
    pub type SpectralFrames = crate::stft::SpectralFrames<f64>;
    pub type LogGaussian = crate::lognorm::LogGaussian<f64>;
    pub type Quadrature = crate::lognorm::Quadrature<f64>;
    pub type ReverbParams = crate::reverb::ReverbParams<f64>;
    pub type SpeechState = crate::speech::SpeechState<f64>;
    pub type ArModel = crate::speech::ArModel<f64>;
    pub type BinState = crate::enhancer::BinState<f64>;
    pub type Enhancement = crate::enhancer::Enhancement<f64>;
}
