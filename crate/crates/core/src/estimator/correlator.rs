//! Sample-rate cross-correlation and the basic (coarse) correlator.

use crate::consts::SPEED_OF_LIGHT;
use crate::Complex64;

use super::EstimatorError;

/// Inclusive integer delay window `first..=last` in samples.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct DelayWindow {
    pub first: usize,
    pub last: usize,
}

impl DelayWindow {
    pub fn new(first: usize, last: usize) -> Result<Self, EstimatorError> {
        if last < first {
            return Err(EstimatorError::EmptyWindow);
        }
        Ok(Self { first, last })
    }

    /// Every delay at which the whole preamble fits inside the record.
    pub fn full_overlap(preamble_len: usize, record_len: usize) -> Result<Self, EstimatorError> {
        if record_len < preamble_len || preamble_len == 0 {
            return Err(EstimatorError::EmptyWindow);
        }
        Self::new(0, record_len - preamble_len)
    }

    pub fn len(&self) -> usize {
        self.last - self.first + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn contains(&self, q: usize) -> bool {
        (self.first..=self.last).contains(&q)
    }

    pub fn iter(&self) -> std::ops::RangeInclusive<usize> {
        self.first..=self.last
    }
}

/// `c[q] = Σ_n s[n] · conj(y[n + q])` over the overlap of the two sequences,
/// one value per delay of `window`. A delayed copy `y[n] = s[n - q0]`
/// peaks at `q = q0`.
pub fn cross_correlation(s: &[Complex64], y: &[Complex64], window: DelayWindow) -> Vec<Complex64> {
    window
        .iter()
        .map(|q| {
            if q >= y.len() {
                return Complex64::new(0.0, 0.0);
            }
            s.iter()
                .zip(&y[q..])
                .fold(Complex64::new(0.0, 0.0), |acc, (&a, &b)| acc + a * b.conj())
        })
        .collect()
}

/// Aperiodic autocorrelation `R[k] = Σ_n s[n] conj(s[n + k])` for
/// `k = -max_lag ..= max_lag`, stored at index `k + max_lag`.
pub fn autocorrelation(s: &[Complex64], max_lag: usize) -> Vec<Complex64> {
    let n = s.len();
    let mut out = Vec::with_capacity(2 * max_lag + 1);
    for i in 0..=2 * max_lag {
        let k = i as isize - max_lag as isize;
        let mut acc = Complex64::new(0.0, 0.0);
        if k.unsigned_abs() < n {
            if k >= 0 {
                for j in 0..n - k as usize {
                    acc += s[j] * s[j + k as usize].conj();
                }
            } else {
                let k = (-k) as usize;
                for j in k..n {
                    acc += s[j] * s[j - k].conj();
                }
            }
        }
        out.push(acc);
    }
    out
}

/// Index of the largest `|c|²`, ties to the smallest index.
pub fn argmax_power(c: &[Complex64]) -> Option<(usize, f64)> {
    let mut best: Option<(usize, f64)> = None;
    for (i, v) in c.iter().enumerate() {
        let p = v.norm_sqr();
        if best.is_none_or(|(_, b)| p > b) {
            best = Some((i, p));
        }
    }
    best
}

/// Range of an integer round-trip delay: `ς T_S q / 2`.
pub fn delay_to_range(q: f64, symbol_time_s: f64) -> f64 {
    SPEED_OF_LIGHT * symbol_time_s * q / 2.0
}

/// Coarse delay `q^BC = argmax |c[q]|²` and its range.
pub fn basic_correlator(
    s: &[Complex64],
    y: &[Complex64],
    window: DelayWindow,
    symbol_time_s: f64,
) -> Result<(usize, f64), EstimatorError> {
    let c = cross_correlation(s, y, window);
    let (i, _) = argmax_power(&c).ok_or(EstimatorError::EmptyWindow)?;
    let q = window.first + i;
    Ok((q, delay_to_range(q as f64, symbol_time_s)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(n: usize, rng: &mut ChaCha8Rng) -> Vec<Complex64> {
        (0..n).map(|_| Complex64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)).collect()
    }

    #[test]
    fn matches_naive_double_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let s = random(64, &mut rng);
        let y = random(80, &mut rng);
        let w = DelayWindow::new(0, 79).unwrap();
        let c = cross_correlation(&s, &y, w);
        for q in 0..80 {
            let mut naive = Complex64::new(0.0, 0.0);
            for n in 0..64 {
                if n + q < 80 {
                    naive += s[n] * y[n + q].conj();
                }
            }
            assert_relative_eq!((c[q] - naive).norm(), 0.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn delayed_copy_peaks_at_delay() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let s = random(64, &mut rng);
        let mut y = vec![Complex64::new(0.0, 0.0); 64 + 20];
        for n in 0..64 {
            y[n + 13] = s[n] * Complex64::new(0.0, 2.0);
        }
        let w = DelayWindow::full_overlap(64, y.len()).unwrap();
        let (q, r) = basic_correlator(&s, &y, w, 0.5e-9).unwrap();
        assert_eq!(q, 13);
        assert_relative_eq!(r, SPEED_OF_LIGHT * 0.5e-9 * 13.0 / 2.0);
        let zeros = vec![Complex64::new(0.0, 0.0); 84];
        assert!(cross_correlation(&s, &zeros, w).iter().all(|c| c.norm() == 0.0));
        assert!(DelayWindow::new(3, 2).is_err());
    }

    #[test]
    fn autocorrelation_matches_cross_correlation() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let s = random(40, &mut rng);
        let r = autocorrelation(&s, 6);
        let mut padded = vec![Complex64::new(0.0, 0.0); 6];
        padded.extend_from_slice(&s);
        padded.extend(vec![Complex64::new(0.0, 0.0); 6]);
        // R[k] = Σ s[n] conj(s[n+k]) = c[6 + k] against the padded copy.
        let c = cross_correlation(&s, &padded, DelayWindow::new(0, 12).unwrap());
        for i in 0..13 {
            assert_relative_eq!((r[i] - c[i]).norm(), 0.0, epsilon = 1e-12);
        }
    }
}
