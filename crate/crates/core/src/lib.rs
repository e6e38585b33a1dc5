//! mmWave MIMO depth-map sensing.
//!
//! The crate simulates a full-duplex analog-beamforming transceiver that sweeps
//! a camera-grid-matched codebook over a planar-facet scene, then turns the
//! per-beam preamble returns into range and depth maps:
//!
//! * [`scene`]: facets, materials, ray-cast ground truth, backscatter paths.
//! * [`array`]: UPA steering vectors, grid-matched codebooks, sidelobe tapers.
//! * [`channel`]: path gains, pulse shaping, beamformed delay taps.
//! * [`waveform`]: 802.11ad / PN preambles and noisy receive records.
//! * [`estimator`]: correlators, successive interference cancellation,
//!   joint-beam processing, map construction and interpolation.
//! * [`metrics`]: map error metrics and the single-target range CRLB.
//! * [`pipeline`]: scenario configs, built-in scenes, end-to-end runs, sweeps.
//!
//! Per-beam work runs on rayon when the `parallel` feature is enabled (the
//! default); every reduction is ordered so results do not depend on the
//! number of worker threads.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod array;
pub mod channel;
pub mod consts;
pub mod estimator;
pub mod exec;
pub mod map;
pub mod metrics;
pub mod pipeline;
pub mod scene;
pub mod waveform;

pub use num_complex::Complex64;
