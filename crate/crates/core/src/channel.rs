//! Geometric wideband backscatter channel: path gains, the raised-cosine
//! pulse and beamformed per-beam taps `h_m[d] = w_m^H H_d f_m`.
//!
//! Taps are contracted path by path through the array responses of the
//! beam pair, so no `N x N` channel matrix is ever formed.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::array::{Beam, Codebook, UpaConfig};
use crate::consts::{dbm_to_watts, db_to_linear, BOLTZMANN, SPEED_OF_LIGHT};
use crate::exec::Execution;
use crate::Complex64;

#[derive(Debug, Error)]
pub enum ChannelError {
    #[error("range must be positive, got {0}")]
    Range(f64),
    #[error("pulse roll-off must lie in [0, 1], got {0}")]
    Rolloff(f64),
    #[error("radio: {0}")]
    Radio(String),
    #[error("tap window of {l_d} samples truncates paths {paths:?}")]
    Truncated { l_d: usize, paths: Vec<usize> },
    #[error("beam vector length {got} does not match array size {expected}")]
    BeamLength { expected: usize, got: usize },
}

/// Pulse half-span in symbols; the pulse is zero beyond `±8 T_S`.
pub const PULSE_HALF_SPAN: usize = 8;

/// Guard taps appended to the longest path delay when sizing `L_d`.
pub const TAP_GUARD: usize = 16;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RadioConfig {
    pub carrier_hz: f64,
    pub bandwidth_hz: f64,
    pub tx_power_dbm: f64,
    pub noise_figure_db: f64,
    pub tx_gain_dbi: f64,
    pub rx_gain_dbi: f64,
    pub pulse_rolloff: f64,
}

impl Default for RadioConfig {
    fn default() -> Self {
        Self {
            carrier_hz: 60e9,
            bandwidth_hz: 2e9,
            tx_power_dbm: 30.0,
            noise_figure_db: 7.0,
            tx_gain_dbi: 0.0,
            rx_gain_dbi: 0.0,
            pulse_rolloff: 0.25,
        }
    }
}

impl RadioConfig {
    pub fn validate(&self) -> Result<(), ChannelError> {
        if !(self.carrier_hz > 0.0 && self.carrier_hz.is_finite()) {
            return Err(ChannelError::Radio(format!("carrier must be positive, got {}", self.carrier_hz)));
        }
        if !(self.bandwidth_hz > 0.0 && self.bandwidth_hz.is_finite()) {
            return Err(ChannelError::Radio(format!("bandwidth must be positive, got {}", self.bandwidth_hz)));
        }
        for (name, v) in [
            ("tx_power_dbm", self.tx_power_dbm),
            ("noise_figure_db", self.noise_figure_db),
            ("tx_gain_dbi", self.tx_gain_dbi),
            ("rx_gain_dbi", self.rx_gain_dbi),
        ] {
            if !v.is_finite() {
                return Err(ChannelError::Radio(format!("{name} must be finite")));
            }
        }
        RaisedCosine::new(self.symbol_time_s(), self.pulse_rolloff).map(|_| ())
    }

    pub fn symbol_time_s(&self) -> f64 {
        1.0 / self.bandwidth_hz
    }

    pub fn wavelength_m(&self) -> f64 {
        SPEED_OF_LIGHT / self.carrier_hz
    }

    pub fn tx_power_w(&self) -> f64 {
        dbm_to_watts(self.tx_power_dbm)
    }

    /// Transmit energy per symbol `P_tx T_S` (J).
    pub fn symbol_energy(&self) -> f64 {
        self.tx_power_w() * self.symbol_time_s()
    }

    /// Per-sample noise energy `σ_n² T_S` (J), the same units as
    /// [`RadioConfig::symbol_energy`].
    pub fn noise_energy(&self, temperature_k: f64) -> f64 {
        noise_variance(self, temperature_k) * self.symbol_time_s()
    }

    pub fn pulse(&self) -> Result<RaisedCosine, ChannelError> {
        RaisedCosine::new(self.symbol_time_s(), self.pulse_rolloff)
    }
}

/// Radar-equation power gain `G_T G_R λ² σ / ((4π)³ ρ^{2 PL})` with linear
/// antenna gains.
pub fn path_gain(
    tx_gain: f64,
    rx_gain: f64,
    wavelength_m: f64,
    rcs_sqm: f64,
    range_m: f64,
    path_loss_exponent: f64,
) -> Result<f64, ChannelError> {
    if !(range_m > 0.0) {
        return Err(ChannelError::Range(range_m));
    }
    Ok(tx_gain * rx_gain * wavelength_m * wavelength_m * rcs_sqm
        / ((4.0 * PI).powi(3) * range_m.powf(2.0 * path_loss_exponent)))
}

/// Thermal noise power `k_B T B F` in watts.
pub fn noise_variance(radio: &RadioConfig, temperature_k: f64) -> f64 {
    BOLTZMANN * temperature_k * radio.bandwidth_hz * db_to_linear(radio.noise_figure_db)
}

/// Raised-cosine pulse with unit peak, truncated to `±8 T_S`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RaisedCosine {
    pub symbol_time_s: f64,
    pub rolloff: f64,
}

impl RaisedCosine {
    pub fn new(symbol_time_s: f64, rolloff: f64) -> Result<Self, ChannelError> {
        if !(0.0..=1.0).contains(&rolloff) {
            return Err(ChannelError::Rolloff(rolloff));
        }
        if !(symbol_time_s > 0.0) {
            return Err(ChannelError::Radio(format!("symbol time must be positive, got {symbol_time_s}")));
        }
        Ok(Self { symbol_time_s, rolloff })
    }

    /// Value at time `t` (seconds).
    pub fn eval(&self, t: f64) -> f64 {
        self.eval_normalized(t / self.symbol_time_s)
    }

    /// Value at `x = t / T_S`.
    pub fn eval_normalized(&self, x: f64) -> f64 {
        if x.abs() > PULSE_HALF_SPAN as f64 {
            return 0.0;
        }
        let b = self.rolloff;
        let two_bx = 2.0 * b * x;
        if b > 0.0 && (two_bx.abs() - 1.0).abs() < 1e-10 {
            return PI / 4.0 * sinc(1.0 / (2.0 * b));
        }
        sinc(x) * (PI * b * x).cos() / (1.0 - two_bx * two_bx)
    }
}

/// Normalized sinc `sin(πx)/(πx)`.
pub fn sinc(x: f64) -> f64 {
    if x == 0.0 {
        1.0
    } else {
        let px = PI * x;
        px.sin() / px
    }
}

/// Direction as the pair of angles to the `z` and `x` axes.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Direction {
    pub theta_z: f64,
    pub theta_x: f64,
}

impl Direction {
    /// From a device-frame unit vector.
    pub fn from_unit(d: &nalgebra::Vector3<f64>) -> Self {
        Self { theta_z: d.z.clamp(-1.0, 1.0).acos(), theta_x: d.x.clamp(-1.0, 1.0).acos() }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Path {
    /// Complex gain including `√G` and the carrier phase.
    pub amplitude: Complex64,
    pub delay_s: f64,
    pub aod: Direction,
    pub aoa: Direction,
}

impl Path {
    /// Backscatter path leaving and returning along the same direction.
    pub fn monostatic(amplitude: Complex64, delay_s: f64, dir_device: &nalgebra::Vector3<f64>) -> Self {
        let d = Direction::from_unit(dir_device);
        Self { amplitude, delay_s, aod: d, aoa: d }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct PathSet {
    pub paths: Vec<Path>,
}

impl PathSet {
    pub fn len(&self) -> usize {
        self.paths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.paths.is_empty()
    }

    pub fn max_delay_s(&self) -> f64 {
        self.paths.iter().map(|p| p.delay_s).fold(0.0, f64::max)
    }

    /// Default tap count `ceil(max_delay / T_S) + 16`.
    pub fn default_tap_count(&self, symbol_time_s: f64) -> usize {
        (self.max_delay_s() / symbol_time_s).ceil() as usize + TAP_GUARD
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BeamTaps {
    pub taps: Vec<Complex64>,
    pub beam_index: usize,
}

impl BeamTaps {
    pub fn len(&self) -> usize {
        self.taps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.taps.is_empty()
    }

    pub fn energy(&self) -> f64 {
        self.taps.iter().map(|t| t.norm_sqr()).sum()
    }
}

fn check_window(paths: &PathSet, symbol_time_s: f64, l_d: usize) -> Result<(), ChannelError> {
    let last = l_d as f64 - 1.0;
    let bad: Vec<usize> = paths
        .paths
        .iter()
        .enumerate()
        .filter(|(_, p)| !(p.delay_s >= 0.0) || p.delay_s / symbol_time_s + PULSE_HALF_SPAN as f64 > last)
        .map(|(i, _)| i)
        .collect();
    if bad.is_empty() {
        Ok(())
    } else {
        Err(ChannelError::Truncated { l_d, paths: bad })
    }
}

/// Beam-independent per-path quantities: steering phasors, tap window and
/// pulse weights. Built once per path set and reused for every beam pair.
#[derive(Clone, Debug)]
pub struct TapPlan {
    entries: Vec<PlanEntry>,
    l_d: usize,
}

#[derive(Clone, Debug)]
struct PlanEntry {
    amplitude: Complex64,
    tx: (Complex64, Complex64),
    /// `None` when the arrival direction equals the departure direction.
    rx: Option<(Complex64, Complex64)>,
    first: usize,
    weights: Vec<f64>,
}

fn phasors(upa: &UpaConfig, d: &Direction) -> (Complex64, Complex64) {
    (
        Complex64::from_polar(1.0, upa.phase_step(d.theta_z.cos())),
        Complex64::from_polar(1.0, upa.phase_step(d.theta_x.cos())),
    )
}

impl TapPlan {
    pub fn new(paths: &PathSet, upa: &UpaConfig, radio: &RadioConfig, l_d: usize) -> Result<Self, ChannelError> {
        let pulse = radio.pulse()?;
        let l_d = l_d.max(1);
        check_window(paths, pulse.symbol_time_s, l_d)?;
        let entries = paths
            .paths
            .iter()
            .map(|p| {
                let x0 = p.delay_s / pulse.symbol_time_s;
                let first = (x0 - PULSE_HALF_SPAN as f64).ceil().max(0.0) as usize;
                let last = ((x0 + PULSE_HALF_SPAN as f64).floor() as usize).min(l_d - 1);
                let weights = (first..=last).map(|d| pulse.eval_normalized(d as f64 - x0)).collect();
                PlanEntry {
                    amplitude: p.amplitude,
                    tx: phasors(upa, &p.aod),
                    rx: (p.aoa != p.aod).then(|| phasors(upa, &p.aoa)),
                    first,
                    weights,
                }
            })
            .collect();
        Ok(Self { entries, l_d })
    }

    pub fn tap_count(&self) -> usize {
        self.l_d
    }

    /// Taps `h[d] = Σ_paths α p(d T_S − τ) (w^H a_R)(a_T^H f)` for one beam pair.
    pub fn taps(&self, f: &Beam, w: &Beam, upa: &UpaConfig) -> Result<Vec<Complex64>, ChannelError> {
        for v in [&f.vector, &w.vector] {
            if v.len() != upa.n_elements() {
                return Err(ChannelError::BeamLength { expected: upa.n_elements(), got: v.len() });
            }
        }
        let same = std::ptr::eq(f, w) || f == w;
        let mut taps = vec![Complex64::new(0.0, 0.0); self.l_d];
        for e in &self.entries {
            let tx = f.response_at(upa, e.tx.0, e.tx.1);
            let c = match e.rx {
                None if same => Complex64::new(tx.norm_sqr(), 0.0),
                None => w.response_at(upa, e.tx.0, e.tx.1).conj() * tx,
                Some((zv, zh)) => w.response_at(upa, zv, zh).conj() * tx,
            };
            let a = e.amplitude * c;
            for (tap, &p) in taps[e.first..].iter_mut().zip(&e.weights) {
                *tap += a * p;
            }
        }
        Ok(taps)
    }
}

/// Taps for one beam pair. Use [`TapPlan`] directly when many pairs share
/// the same paths.
pub fn beamformed_taps(
    paths: &PathSet,
    f: &Beam,
    w: &Beam,
    upa: &UpaConfig,
    radio: &RadioConfig,
    l_d: usize,
) -> Result<BeamTaps, ChannelError> {
    let plan = TapPlan::new(paths, upa, radio, l_d)?;
    Ok(BeamTaps { taps: plan.taps(f, w, upa)?, beam_index: 0 })
}

/// Taps for every codebook pair, in beam order.
pub fn codebook_taps(
    paths: &PathSet,
    codebook: &Codebook,
    radio: &RadioConfig,
    l_d: usize,
    exec: Execution,
) -> Result<Vec<BeamTaps>, ChannelError> {
    let upa = &codebook.upa;
    let plan = TapPlan::new(paths, upa, radio, l_d)?;
    exec.try_map_indexed(codebook.len(), |m| {
        let (f, w) = codebook.pair(m);
        Ok(BeamTaps { taps: plan.taps(f, w, upa)?, beam_index: m })
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::array::steering_vector;
    use approx::assert_relative_eq;

    #[test]
    fn path_gain_examples() {
        let g7 = path_gain(1.0, 1.0, 0.005, 1.0, 7.0, 1.0).unwrap();
        assert_relative_eq!(g7, 0.005f64.powi(2) / ((4.0 * PI).powi(3) * 49.0), max_relative = 1e-14);
        assert_relative_eq!(g7, 2.57e-10, max_relative = 2e-3);
        let g35 = path_gain(1.0, 1.0, 0.005, 1.0, 3.5, 1.0).unwrap();
        assert_relative_eq!(g35 / g7, 4.0, max_relative = 1e-12);
        let g14 = path_gain(1.0, 1.0, 0.005, 1.0, 14.0, 1.0).unwrap();
        assert_relative_eq!(g7 / g14, 4.0, max_relative = 1e-12);
        assert_eq!(path_gain(1.0, 1.0, 0.005, 0.0, 7.0, 1.0).unwrap(), 0.0);
        assert!(matches!(path_gain(1.0, 1.0, 0.005, 1.0, 0.0, 1.0), Err(ChannelError::Range(_))));
    }

    #[test]
    fn noise_examples() {
        let r = RadioConfig::default();
        let n = noise_variance(&r, 290.0);
        assert_relative_eq!(n, 4.01e-11, max_relative = 2e-3);
        assert_relative_eq!(10.0 * (n / 1e-3).log10(), -73.97, epsilon = 0.01);
        let r0 = RadioConfig { noise_figure_db: 0.0, ..r };
        assert_eq!(noise_variance(&r0, 290.0), BOLTZMANN * 290.0 * 2e9);
        let r2 = RadioConfig { bandwidth_hz: 4e9, ..r };
        assert_relative_eq!(noise_variance(&r2, 290.0), 2.0 * n, max_relative = 1e-14);
    }

    #[test]
    fn pulse_shape() {
        let p = RaisedCosine::new(0.5e-9, 0.25).unwrap();
        assert_eq!(p.eval(0.0), 1.0);
        for k in 1..=10 {
            assert!(p.eval_normalized(k as f64).abs() < 1e-15);
            assert!(p.eval_normalized(-(k as f64)).abs() < 1e-15);
        }
        assert_eq!(p.eval_normalized(8.01), 0.0);
        let s = RaisedCosine::new(1.0, 0.0).unwrap();
        for x in [0.1, 0.5, 1.3, 4.7] {
            assert_relative_eq!(s.eval_normalized(x), sinc(x), epsilon = 1e-15);
        }
        // Removable singularity at |t| = T/(2β).
        let near = p.eval_normalized(2.0 - 1e-7);
        assert_relative_eq!(p.eval_normalized(2.0), near, epsilon = 1e-6);
        assert!(RaisedCosine::new(1.0, 1.5).is_err());
        assert!(RaisedCosine::new(1.0, -0.1).is_err());
    }

    fn matched(upa: &UpaConfig, tz: f64, tx: f64) -> Beam {
        Beam { vector: steering_vector(upa, tz, tx), factors: None }
    }

    #[test]
    fn single_on_grid_path_hits_one_tap() {
        let radio = RadioConfig::default();
        let upa = UpaConfig::half_wavelength(4, 4, radio.wavelength_m());
        let ts = radio.symbol_time_s();
        let dir = nalgebra::Vector3::new(0.0, 1.0, 0.0);
        let g: f64 = 2.57e-10;
        let paths = PathSet { paths: vec![Path::monostatic(Complex64::new(g.sqrt(), 0.0), 20.0 * ts, &dir)] };
        let b = matched(&upa, PI / 2.0, PI / 2.0);
        let t = beamformed_taps(&paths, &b, &b, &upa, &radio, paths.default_tap_count(ts)).unwrap();
        assert_eq!(t.len(), 36);
        let n = upa.n_elements() as f64;
        assert_relative_eq!(t.taps[20].norm(), g.sqrt() * n * n, max_relative = 1e-12);
        for (d, v) in t.taps.iter().enumerate() {
            if d != 20 {
                assert!(v.norm() < 1e-12 * g.sqrt() * n * n);
            }
        }
    }

    #[test]
    fn half_sample_delay_is_symmetric() {
        let radio = RadioConfig::default();
        let upa = UpaConfig::half_wavelength(2, 2, radio.wavelength_m());
        let ts = radio.symbol_time_s();
        let dir = nalgebra::Vector3::new(0.0, 1.0, 0.0);
        let paths = PathSet { paths: vec![Path::monostatic(Complex64::new(1.0, 0.0), 10.5 * ts, &dir)] };
        let b = matched(&upa, PI / 2.0, PI / 2.0);
        let t = beamformed_taps(&paths, &b, &b, &upa, &radio, 30).unwrap();
        for k in 0..8 {
            assert_relative_eq!(t.taps[10 - k].re, t.taps[11 + k].re, epsilon = 1e-12);
        }
    }

    #[test]
    fn empty_paths_and_truncation() {
        let radio = RadioConfig::default();
        let upa = UpaConfig::half_wavelength(2, 2, radio.wavelength_m());
        let b = matched(&upa, 1.0, 1.2);
        let t = beamformed_taps(&PathSet::default(), &b, &b, &upa, &radio, 5).unwrap();
        assert!(t.taps.iter().all(|v| *v == Complex64::new(0.0, 0.0)));
        let dir = nalgebra::Vector3::new(0.0, 1.0, 0.0);
        let far = PathSet { paths: vec![Path::monostatic(Complex64::new(1.0, 0.0), 100.0 * radio.symbol_time_s(), &dir)] };
        match beamformed_taps(&far, &b, &b, &upa, &radio, 50) {
            Err(ChannelError::Truncated { paths, .. }) => assert_eq!(paths, vec![0]),
            other => panic!("{other:?}"),
        }
    }
}
