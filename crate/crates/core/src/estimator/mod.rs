//! Per-beam delay estimation and map reconstruction.
//!
//! - [`correlator`]: cross-correlation and the sample-rate coarse estimate.
//! - [`bank`]: the massive correlator for sub-sample range refinement.
//! - [`sic`]: successive interference cancellation of dominant paths.
//! - [`joint`]: raster-order selection of one delay per beam.
//! - [`maps`], [`interp`]: range/depth maps and their upscaling.

use thiserror::Error;

pub mod bank;
pub mod correlator;
pub mod interp;
pub mod joint;
pub mod maps;
pub mod sic;

pub use bank::{build_bank, fine_range_step, fractional_delay, massive_correlator, CorrelatorBank};
pub use correlator::{autocorrelation, basic_correlator, cross_correlation, delay_to_range, DelayWindow};
pub use interp::{interpolate, Interpolation};
pub use joint::{joint_processing, JointSelection};
pub use maps::construct_maps;
pub use sic::{sic_candidates, sic_on_correlation, sic_with_policy, DelaySet, SicContext, ThresholdPolicy};

#[derive(Debug, Error)]
pub enum EstimatorError {
    #[error("delay window is empty")]
    EmptyWindow,
    #[error("length mismatch: expected {expected}, got {got}")]
    Length { expected: usize, got: usize },
    #[error("estimation ratio must be an even integer >= 2, got {0}")]
    BankRatio(usize),
    #[error("invalid threshold: {0}")]
    Threshold(String),
    #[error("no beam produced any detection")]
    NoDetections,
    #[error("cannot resample {from:?} to {to:?}: only upscaling is supported")]
    Downscale { from: (usize, usize), to: (usize, usize) },
}
