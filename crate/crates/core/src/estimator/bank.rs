//! Massive correlator: a bank of fractionally delayed references evaluated
//! at the system sample rate.
//!
//! Row `l` (for `l = -δ..=δ`, `δ = ratio / 2`) is the preamble delayed by
//! `l / ratio` samples. The delay is applied by interpolating the symbols
//! with the raised-cosine pulse of the channel model, which is the
//! band-limited reference the receiver actually observes. Rows carry
//! [`PULSE_HALF_SPAN`] guard samples on both sides of the preamble.

use crate::channel::{RaisedCosine, PULSE_HALF_SPAN};
use crate::consts::SPEED_OF_LIGHT;
use crate::exec::Execution;
use crate::Complex64;

use super::EstimatorError;

#[derive(Clone, Debug, PartialEq)]
pub struct CorrelatorBank {
    /// Row-major `(2δ+1) x (N^p + 2·guard)` samples.
    rows: Vec<Complex64>,
    row_len: usize,
    inv_norms: Vec<f64>,
    pub delta: usize,
    pub ratio: usize,
    pub preamble_len: usize,
}

impl CorrelatorBank {
    pub fn row_count(&self) -> usize {
        2 * self.delta + 1
    }

    pub fn row_len(&self) -> usize {
        self.row_len
    }

    /// Row `k` (0-based; the center row `k = δ` is the undelayed reference).
    pub fn row(&self, k: usize) -> &[Complex64] {
        &self.rows[k * self.row_len..(k + 1) * self.row_len]
    }

    /// Fractional delay of row `k`, in samples.
    pub fn lag(&self, k: usize) -> f64 {
        (k as f64 - self.delta as f64) / self.ratio as f64
    }

    /// Sample offset of the first row entry relative to preamble index 0.
    pub fn guard(&self) -> usize {
        PULSE_HALF_SPAN
    }
}

/// Builds the bank for `ratio = f_est / f_S`, which must be an even integer
/// of at least 2.
pub fn build_bank(
    preamble: &[Complex64],
    ratio: usize,
    pulse: &RaisedCosine,
    exec: Execution,
) -> Result<CorrelatorBank, EstimatorError> {
    if ratio < 2 || !ratio.is_multiple_of(2) {
        return Err(EstimatorError::BankRatio(ratio));
    }
    if preamble.is_empty() {
        return Err(EstimatorError::EmptyWindow);
    }
    let delta = ratio / 2;
    let guard = PULSE_HALF_SPAN;
    let np = preamble.len();
    let row_len = np + 2 * guard;
    let span = PULSE_HALF_SPAN as isize;
    let built = exec.map_indexed(2 * delta + 1, |k| {
        let lag = (k as f64 - delta as f64) / ratio as f64;
        let mut row = vec![Complex64::new(0.0, 0.0); row_len];
        for (j, out) in row.iter_mut().enumerate() {
            let n = j as isize - guard as isize;
            let lo = (n - span - 1).max(0);
            let hi = (n + span + 1).min(np as isize - 1);
            let mut acc = Complex64::new(0.0, 0.0);
            for i in lo..=hi {
                let p = pulse.eval_normalized((n - i) as f64 - lag);
                if p != 0.0 {
                    acc += preamble[i as usize] * p;
                }
            }
            *out = acc;
        }
        let norm = row.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
        (row, if norm > 0.0 { 1.0 / norm } else { 0.0 })
    });
    let mut rows = Vec::with_capacity(built.len() * row_len);
    let mut inv_norms = Vec::with_capacity(built.len());
    for (r, inv) in built {
        rows.extend(r);
        inv_norms.push(inv);
    }
    Ok(CorrelatorBank { rows, row_len, inv_norms, delta, ratio, preamble_len: np })
}

/// Fractional delay (samples) of `record` around the coarse delay `q`.
///
/// `z̄[n] = z[n + q]` is correlated against every row and the row with the
/// largest norm-normalized magnitude wins; ties go to the smallest lag.
pub fn fractional_delay(record: &[Complex64], q: usize, bank: &CorrelatorBank) -> Result<f64, EstimatorError> {
    if record.len() < bank.preamble_len {
        return Err(EstimatorError::Length { expected: bank.preamble_len, got: record.len() });
    }
    let guard = bank.guard() as isize;
    let start = q as isize - guard;
    // Window of the record aligned with the bank rows, zero outside.
    let zbar: Vec<Complex64> = (0..bank.row_len as isize)
        .map(|j| {
            let idx = start + j;
            if idx >= 0 && (idx as usize) < record.len() {
                record[idx as usize]
            } else {
                Complex64::new(0.0, 0.0)
            }
        })
        .collect();
    let mut best = (0usize, f64::NEG_INFINITY);
    for k in 0..bank.row_count() {
        let g = bank
            .row(k)
            .iter()
            .zip(&zbar)
            .fold(Complex64::new(0.0, 0.0), |acc, (&b, &z)| acc + z * b.conj());
        let score = g.norm() * bank.inv_norms[k];
        if score > best.1 {
            best = (k, score);
        }
    }
    Ok(bank.lag(best.0))
}

/// Fine range `ρ̂^MC = ρ̂^BC + ρ̂'` with `ρ̂' = ς/(2 f_est) · l`.
pub fn massive_correlator(
    record: &[Complex64],
    q_bc: usize,
    bank: &CorrelatorBank,
    symbol_time_s: f64,
) -> Result<f64, EstimatorError> {
    let frac = fractional_delay(record, q_bc, bank)?;
    Ok(SPEED_OF_LIGHT * symbol_time_s * (q_bc as f64 + frac) / 2.0)
}

/// Fine-grid spacing `ς / (2 f_est)` in meters.
pub fn fine_range_step(symbol_time_s: f64, ratio: usize) -> f64 {
    SPEED_OF_LIGHT * symbol_time_s / (2.0 * ratio as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::waveform::{make_preamble, PreambleKind};

    fn pulse() -> RaisedCosine {
        RaisedCosine::new(0.5e-9, 0.25).unwrap()
    }

    #[test]
    fn bank_shape_and_center_row() {
        let p = make_preamble(PreambleKind::Pn, 64, 1).unwrap();
        let bank = build_bank(&p.symbols, 100, &pulse(), Execution::Sequential).unwrap();
        assert_eq!(bank.row_count(), 101);
        assert_eq!(bank.delta, 50);
        let center = bank.row(50);
        for n in 0..64 {
            assert!((center[n + bank.guard()] - p.symbols[n]).norm() < 1e-6);
        }
        assert!(matches!(build_bank(&p.symbols, 1, &pulse(), Execution::Sequential), Err(EstimatorError::BankRatio(1))));
        assert!(build_bank(&p.symbols, 3, &pulse(), Execution::Sequential).is_err());
    }

    #[test]
    fn bank_rows_are_self_consistent() {
        let p = make_preamble(PreambleKind::Pn, 128, 2).unwrap();
        let bank = build_bank(&p.symbols, 10, &pulse(), Execution::Parallel).unwrap();
        // A record holding row k at coarse delay 20 must select row k.
        for k in 0..bank.row_count() {
            let mut rec = vec![Complex64::new(0.0, 0.0); 128 + 40];
            for (j, v) in bank.row(k).iter().enumerate() {
                rec[20 + j - bank.guard()] = *v * Complex64::new(0.3, -0.7);
            }
            assert_eq!(fractional_delay(&rec, 20, &bank).unwrap(), bank.lag(k));
        }
    }
}
