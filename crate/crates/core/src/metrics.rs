//! Map error metrics and the single-target range CRLB.

use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::consts::SPEED_OF_LIGHT;
use crate::map::GridMap;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("map dimensions differ: {0:?} vs {1:?}")]
    Mismatch((usize, usize), (usize, usize)),
    #[error("no pixel has finite values in both maps")]
    NoPixels,
    #[error("CRLB parameter {0} must be positive and finite")]
    Crlb(&'static str),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorReport {
    pub rmse_m: f64,
    pub mae_m: f64,
    pub pixel_count_used: usize,
}

impl ErrorReport {
    pub const CSV_HEADER: &'static str = "scenario,rmse_m,mae_m,pixels,config_hash";

    pub fn write_csv_row<W: Write>(&self, mut w: W, scenario: &str, config_hash: &str) -> std::io::Result<()> {
        writeln!(w, "{scenario},{},{},{},{config_hash}", self.rmse_m, self.mae_m, self.pixel_count_used)
    }
}

/// RMSE and MAE over pixels where both maps are finite. Ground-truth misses
/// (`+inf`) are excluded.
pub fn map_errors(est: &GridMap, truth: &GridMap) -> Result<ErrorReport, MetricsError> {
    if est.dims() != truth.dims() {
        return Err(MetricsError::Mismatch(est.dims(), truth.dims()));
    }
    let (mut sq, mut abs, mut k) = (0.0, 0.0, 0usize);
    for (&e, &t) in est.as_slice().iter().zip(truth.as_slice()) {
        if e.is_finite() && t.is_finite() {
            let d = e - t;
            sq += d * d;
            abs += d.abs();
            k += 1;
        }
    }
    if k == 0 {
        return Err(MetricsError::NoPixels);
    }
    let kf = k as f64;
    Ok(ErrorReport { rmse_m: (sq / kf).sqrt(), mae_m: abs / kf, pixel_count_used: k })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CrlbParams {
    pub bandwidth_hz: f64,
    pub snr_linear: f64,
    pub p_int: f64,
    pub eta_sq: f64,
}

/// Flat-spectrum `η² = (2π)²/12`.
pub const FLAT_ETA_SQ: f64 = (2.0 * std::f64::consts::PI) * (2.0 * std::f64::consts::PI) / 12.0;

impl CrlbParams {
    pub fn new(bandwidth_hz: f64, snr_linear: f64, p_int: f64) -> Self {
        Self { bandwidth_hz, snr_linear, p_int, eta_sq: FLAT_ETA_SQ }
    }
}

/// Range variance bound `ς² / (8 P_int η² B² SNR)` in m².
pub fn crlb_range(p: &CrlbParams) -> Result<f64, MetricsError> {
    for (name, v) in [
        ("bandwidth_hz", p.bandwidth_hz),
        ("snr_linear", p.snr_linear),
        ("p_int", p.p_int),
        ("eta_sq", p.eta_sq),
    ] {
        if !(v > 0.0 && v.is_finite()) {
            return Err(MetricsError::Crlb(name));
        }
    }
    Ok(SPEED_OF_LIGHT * SPEED_OF_LIGHT
        / (8.0 * p.p_int * p.eta_sq * p.bandwidth_hz * p.bandwidth_hz * p.snr_linear))
}
