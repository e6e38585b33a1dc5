//! Successive interference cancellation over the correlation of one beam.
//!
//! Cancelling `a · s[n - q̃]` from the record changes the correlation by a
//! shifted copy of the preamble autocorrelation, so the loop works on the
//! correlation vector directly: `c[q] -= (Ã / E_Q) · R[q - q̃]`, where
//! `Ã = c[q̃]` and `E_Q` is the preamble energy inside the overlap. This is
//! the same arithmetic as subtracting in the signal domain and correlating
//! again, without the repeated `O(N^p · |Q|)` correlation.

use serde::{Deserialize, Serialize};

use crate::consts::db_to_linear;
use crate::Complex64;

use super::correlator::{autocorrelation, cross_correlation, DelayWindow};
use super::EstimatorError;

pub const DEFAULT_MAX_ITERATIONS: usize = 32;

/// How the detection threshold `A_TH` on `|c[q]|²` is chosen.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ThresholdPolicy {
    /// Fixed `A_TH`.
    Absolute { value: f64 },
    /// `γ² · E · σ²`: `γ` standard deviations of the correlation noise,
    /// where `E` is the preamble energy and `σ²` the per-sample noise power.
    NoiseFloor { gamma: f64 },
    /// `max_q |c[q]|² · 10^{-dB/10}`, measured on the untouched correlation.
    RelativeToPeak { db: f64 },
    /// Larger of [`ThresholdPolicy::NoiseFloor`] and
    /// [`ThresholdPolicy::RelativeToPeak`].
    Hybrid { gamma: f64, db: f64 },
}

impl Default for ThresholdPolicy {
    fn default() -> Self {
        ThresholdPolicy::Hybrid { gamma: 4.0, db: 3.0 }
    }
}

impl ThresholdPolicy {
    pub fn validate(&self) -> Result<(), EstimatorError> {
        let ok = match *self {
            ThresholdPolicy::Absolute { value } => value > 0.0 && value.is_finite(),
            ThresholdPolicy::NoiseFloor { gamma } => gamma > 0.0 && gamma.is_finite(),
            ThresholdPolicy::RelativeToPeak { db } => db.is_finite(),
            ThresholdPolicy::Hybrid { gamma, db } => gamma > 0.0 && gamma.is_finite() && db.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(EstimatorError::Threshold(format!("{self:?}")))
        }
    }

    /// Resolves `A_TH` for one beam.
    pub fn resolve(&self, peak_power: f64, preamble_energy: f64, noise_power: f64) -> f64 {
        let floor = |g: f64| g * g * preamble_energy * noise_power;
        let rel = |db: f64| peak_power * db_to_linear(-db);
        match *self {
            ThresholdPolicy::Absolute { value } => value,
            ThresholdPolicy::NoiseFloor { gamma } => floor(gamma),
            ThresholdPolicy::RelativeToPeak { db } => rel(db),
            ThresholdPolicy::Hybrid { gamma, db } => floor(gamma).max(rel(db)),
        }
    }
}

/// Candidate delays of one beam in detection order, with the complex
/// correlation value each was detected with.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct DelaySet {
    pub delays: Vec<usize>,
    pub values: Vec<Complex64>,
    /// Set when the iteration cap stopped the loop.
    pub truncated: bool,
}

impl DelaySet {
    pub fn is_empty(&self) -> bool {
        self.delays.is_empty()
    }

    pub fn len(&self) -> usize {
        self.delays.len()
    }

    pub fn contains(&self, q: usize) -> bool {
        self.delays.contains(&q)
    }

    pub fn min(&self) -> Option<usize> {
        self.delays.iter().copied().min()
    }

    pub fn sorted(&self) -> Vec<usize> {
        let mut d = self.delays.clone();
        d.sort_unstable();
        d
    }
}

/// Per-preamble state shared by every beam.
#[derive(Clone, Debug)]
pub struct SicContext {
    pub window: DelayWindow,
    /// Autocorrelation at lags `-span..=span`, `span = window.len() - 1`.
    acf: Vec<Complex64>,
    span: usize,
    energy: f64,
    pub max_iterations: usize,
}

impl SicContext {
    /// `window` must keep the whole preamble inside the record for every
    /// delay, see [`DelayWindow::full_overlap`].
    pub fn new(preamble: &[Complex64], window: DelayWindow) -> Self {
        let span = window.len() - 1;
        Self {
            window,
            acf: autocorrelation(preamble, span),
            span,
            energy: preamble.iter().map(|s| s.norm_sqr()).sum(),
            max_iterations: DEFAULT_MAX_ITERATIONS,
        }
    }

    pub fn preamble_energy(&self) -> f64 {
        self.energy
    }
}

/// Runs SIC with an explicit threshold on the precomputed correlation
/// `corr` (one value per delay of `ctx.window`).
pub fn sic_on_correlation(mut corr: Vec<Complex64>, threshold: f64, ctx: &SicContext) -> Result<DelaySet, EstimatorError> {
    if !(threshold > 0.0) {
        return Err(EstimatorError::Threshold(format!("A_TH must be positive, got {threshold}")));
    }
    if corr.len() != ctx.window.len() {
        return Err(EstimatorError::Length { expected: ctx.window.len(), got: corr.len() });
    }
    let mut set = DelaySet::default();
    while let Some((i, power)) = super::correlator::argmax_power(&corr) {
        if power < threshold {
            break;
        }
        if set.len() == ctx.max_iterations {
            set.truncated = true;
            break;
        }
        let a = corr[i];
        let q = ctx.window.first + i;
        if !set.contains(q) {
            set.delays.push(q);
            set.values.push(a);
        }
        let scale = a / ctx.energy;
        for (j, c) in corr.iter_mut().enumerate() {
            // R[j - i] lives at index j - i + span.
            *c -= scale * ctx.acf[j + ctx.span - i];
        }
        corr[i] = Complex64::new(0.0, 0.0);
    }
    Ok(set)
}

/// SIC candidates for one record.
pub fn sic_candidates(
    record: &[Complex64],
    preamble: &[Complex64],
    threshold: f64,
    ctx: &SicContext,
) -> Result<DelaySet, EstimatorError> {
    sic_on_correlation(cross_correlation(preamble, record, ctx.window), threshold, ctx)
}

/// SIC with a threshold resolved from `policy` (noise power is the
/// post-combining per-sample variance).
pub fn sic_with_policy(
    record: &[Complex64],
    preamble: &[Complex64],
    policy: &ThresholdPolicy,
    noise_power: f64,
    ctx: &SicContext,
) -> Result<DelaySet, EstimatorError> {
    let corr = cross_correlation(preamble, record, ctx.window);
    let peak = corr.iter().map(|c| c.norm_sqr()).fold(0.0, f64::max);
    let threshold = policy.resolve(peak, ctx.energy, noise_power);
    if !(threshold > 0.0) {
        // Silent record under a relative-only policy.
        return Ok(DelaySet::default());
    }
    sic_on_correlation(corr, threshold, ctx)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::waveform::{make_preamble, PreambleKind};

    fn record(p: &[Complex64], paths: &[(usize, Complex64)], l_d: usize) -> Vec<Complex64> {
        let mut y = vec![Complex64::new(0.0, 0.0); p.len() + l_d];
        for &(q, a) in paths {
            for (n, &s) in p.iter().enumerate() {
                y[n + q] += a * s;
            }
        }
        y
    }

    #[test]
    fn two_paths_are_recovered() {
        let p = make_preamble(PreambleKind::Pn, 128, 3).unwrap().symbols;
        let y = record(&p, &[(10, Complex64::new(1.0, 0.5)), (25, Complex64::new(0.0, -0.2))], 40);
        let ctx = SicContext::new(&p, DelayWindow::full_overlap(128, y.len()).unwrap());
        let set = sic_candidates(&y, &p, 1e-3 * 128.0 * 128.0 * 0.04, &ctx).unwrap();
        assert_eq!(set.sorted(), vec![10, 25]);
        assert!(!set.truncated);
    }

    #[test]
    fn high_threshold_and_silence_give_empty_sets() {
        let p = make_preamble(PreambleKind::Pn, 64, 3).unwrap().symbols;
        let y = record(&p, &[(5, Complex64::new(1.0, 0.0))], 16);
        let ctx = SicContext::new(&p, DelayWindow::full_overlap(64, y.len()).unwrap());
        assert!(sic_candidates(&y, &p, 64.0 * 64.0 * 1.01, &ctx).unwrap().is_empty());
        let zeros = vec![Complex64::new(0.0, 0.0); y.len()];
        assert!(sic_candidates(&zeros, &p, 1e-9, &ctx).unwrap().is_empty());
        assert!(sic_candidates(&y, &p, 0.0, &ctx).is_err());
    }

    #[test]
    fn iteration_cap_sets_flag() {
        let p = make_preamble(PreambleKind::Pn, 64, 3).unwrap().symbols;
        let paths: Vec<_> = (0..6).map(|k| (3 + 5 * k, Complex64::new(1.0, 0.0))).collect();
        let y = record(&p, &paths, 40);
        let mut ctx = SicContext::new(&p, DelayWindow::full_overlap(64, y.len()).unwrap());
        ctx.max_iterations = 3;
        let set = sic_candidates(&y, &p, 1.0, &ctx).unwrap();
        assert_eq!(set.len(), 3);
        assert!(set.truncated);
    }

    #[test]
    fn policies_resolve() {
        assert_eq!(ThresholdPolicy::Absolute { value: 2.0 }.resolve(1e9, 1.0, 1.0), 2.0);
        assert_eq!(ThresholdPolicy::NoiseFloor { gamma: 4.0 }.resolve(0.0, 100.0, 0.5), 800.0);
        assert!((ThresholdPolicy::RelativeToPeak { db: 20.0 }.resolve(1e4, 1.0, 1.0) - 100.0).abs() < 1e-9);
        assert!((ThresholdPolicy::Hybrid { gamma: 1.0, db: 20.0 }.resolve(1e4, 1.0, 1e3) - 1e3).abs() < 1e-9);
        assert!(ThresholdPolicy::NoiseFloor { gamma: -1.0 }.validate().is_err());
        let json = serde_json::to_string(&ThresholdPolicy::default()).unwrap();
        assert_eq!(serde_json::from_str::<ThresholdPolicy>(&json).unwrap(), ThresholdPolicy::default());
    }
}
