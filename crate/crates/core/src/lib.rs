//! Level-crossing sampling workbench.
//!
//! Synthesizes time-warped bandlimited test signals with known instantaneous
//! bandwidth, samples them with a multi-level level-crossing sampler, estimates
//! the bandwidth from the crossings (kernel intensity baseline or an LSTM
//! encoder-decoder), and reconstructs the signal by regularized least squares
//! in the warped time domain.

pub mod error;
pub mod signal;
pub mod synthesis;
pub mod lc;
pub mod reconstruction;
pub mod intensity;
pub mod nn;
pub mod harness;

pub use error::{Error, Result};
pub use signal::{
    coefficient_count, interpolate_uniform, sinc, warped_interpolate, BandwidthFunction,
    BandwidthProfile, NonuniformSeries, UniformSeries, WarpFunction,
};
