//! Sensing preambles and per-beam receive-signal synthesis.
//!
//! The 802.11ad single-carrier preamble is built from the Golay pair
//! Ga128/Gb128: a short training field of sixteen `Ga128` plus one `-Ga128`,
//! followed by the channel estimation field `Gu512, Gv512, Gv128`. The
//! resulting `±1` sequence is π/2-BPSK rotated.

use std::io::{self, Read, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::channel::BeamTaps;
use crate::Complex64;

#[derive(Debug, Error)]
pub enum WaveformError {
    #[error("the 802.11ad preamble has exactly {GOLAY_PREAMBLE_LEN} symbols, requested {0}; use the pn kind for other lengths")]
    GolayLength(usize),
    #[error("preamble length must be at least 1")]
    EmptyPreamble,
    #[error("noise variance must be non-negative and finite, got {0}")]
    NoiseVariance(f64),
    #[error("symbol energy must be non-negative and finite, got {0}")]
    SymbolEnergy(f64),
    #[error("tap vector is empty")]
    EmptyTaps,
    #[error("malformed record file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

pub const GOLAY_PREAMBLE_LEN: usize = 3328;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PreambleKind {
    #[serde(rename = "golay_80211ad")]
    Golay80211ad,
    Pn,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Preamble {
    pub symbols: Vec<Complex64>,
}

impl Preamble {
    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    pub fn energy(&self) -> f64 {
        self.symbols.iter().map(|s| s.norm_sqr()).sum()
    }
}

/// Golay complementary pair `(Ga128, Gb128)` from the 802.11ad recursion
/// with delays `[1, 8, 2, 4, 16, 32, 64]` and weights
/// `[-1, -1, -1, -1, +1, -1, -1]`.
pub fn golay_pair_128() -> (Vec<i8>, Vec<i8>) {
    const D: [usize; 7] = [1, 8, 2, 4, 16, 32, 64];
    const W: [i8; 7] = [-1, -1, -1, -1, 1, -1, -1];
    let mut a = vec![0i8; 128];
    let mut b = vec![0i8; 128];
    a[0] = 1;
    b[0] = 1;
    for k in 0..7 {
        let (pa, pb) = (a.clone(), b.clone());
        for n in 0..128 {
            let shifted = if n >= D[k] { pb[n - D[k]] } else { 0 };
            a[n] = W[k] * pa[n] + shifted;
            b[n] = W[k] * pa[n] - shifted;
        }
    }
    (a, b)
}

/// Aperiodic autocorrelation of a real `±1` sequence at lag `k >= 0`.
pub fn aperiodic_autocorrelation(x: &[i8], k: usize) -> i32 {
    x.iter().zip(x.iter().skip(k)).map(|(&a, &b)| a as i32 * b as i32).sum()
}

fn golay_preamble_bits() -> Vec<i8> {
    let (ga, gb) = golay_pair_128();
    let neg = |v: &[i8]| v.iter().map(|x| -x).collect::<Vec<_>>();
    let (nga, ngb) = (neg(&ga), neg(&gb));
    let mut out = Vec::with_capacity(GOLAY_PREAMBLE_LEN);
    for _ in 0..16 {
        out.extend_from_slice(&ga);
    }
    out.extend_from_slice(&nga);
    // Gu512 = [-Gb, -Ga, Gb, -Ga], Gv512 = [-Gb, Ga, -Gb, -Ga], Gv128 = -Gb.
    for part in [&ngb, &nga, &gb, &nga, &ngb, &ga, &ngb, &nga, &ngb] {
        out.extend_from_slice(part);
    }
    out
}

/// Builds a unit-modulus preamble. `seed` only affects the `pn` kind.
pub fn make_preamble(kind: PreambleKind, length: usize, seed: u64) -> Result<Preamble, WaveformError> {
    if length == 0 {
        return Err(WaveformError::EmptyPreamble);
    }
    let symbols = match kind {
        PreambleKind::Golay80211ad => {
            if length != GOLAY_PREAMBLE_LEN {
                return Err(WaveformError::GolayLength(length));
            }
            const ROT: [Complex64; 4] = [
                Complex64::new(1.0, 0.0),
                Complex64::new(0.0, 1.0),
                Complex64::new(-1.0, 0.0),
                Complex64::new(0.0, -1.0),
            ];
            golay_preamble_bits()
                .into_iter()
                .enumerate()
                .map(|(n, b)| ROT[n % 4] * b as f64)
                .collect()
        }
        PreambleKind::Pn => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a = std::f64::consts::FRAC_1_SQRT_2;
            (0..length)
                .map(|_| {
                    let bits: u8 = rng.random_range(0..4);
                    Complex64::new(if bits & 1 == 0 { a } else { -a }, if bits & 2 == 0 { a } else { -a })
                })
                .collect()
        }
    };
    Ok(Preamble { symbols })
}

/// Per-beam received samples, `N^p + L_d` long.
#[derive(Clone, Debug, PartialEq)]
pub struct SensingRecord {
    pub samples: Vec<Complex64>,
    pub beam_index: usize,
    pub preamble_len: usize,
}

impl SensingRecord {
    pub fn tap_count(&self) -> usize {
        self.samples.len() - self.preamble_len
    }
}

/// Post-combining noise: per-sample variance `variance * combiner_norm_sqr`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NoiseSpec {
    pub variance: f64,
    pub combiner_norm_sqr: f64,
}

impl NoiseSpec {
    pub const NONE: NoiseSpec = NoiseSpec { variance: 0.0, combiner_norm_sqr: 0.0 };

    pub fn total(&self) -> f64 {
        self.variance * self.combiner_norm_sqr
    }
}

/// Noise stream of one beam: the master seed with the beam index as the
/// ChaCha stream id.
pub fn beam_rng(seed: u64, beam: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(beam as u64);
    rng
}

/// `y[n] = √E_s Σ_d h[d] s[n-d] + noise`, `n = 0 .. N^p + L_d`.
pub fn synthesize_rx(
    taps: &BeamTaps,
    preamble: &Preamble,
    symbol_energy: f64,
    noise: NoiseSpec,
    seed: u64,
) -> Result<SensingRecord, WaveformError> {
    if !(noise.variance >= 0.0 && noise.variance.is_finite() && noise.combiner_norm_sqr >= 0.0) {
        return Err(WaveformError::NoiseVariance(noise.variance));
    }
    if !(symbol_energy >= 0.0 && symbol_energy.is_finite()) {
        return Err(WaveformError::SymbolEnergy(symbol_energy));
    }
    if taps.is_empty() {
        return Err(WaveformError::EmptyTaps);
    }
    let np = preamble.len();
    let l_d = taps.len();
    let scale = symbol_energy.sqrt();
    let mut samples = vec![Complex64::new(0.0, 0.0); np + l_d];
    for (d, &h) in taps.taps.iter().enumerate() {
        if h == Complex64::new(0.0, 0.0) {
            continue;
        }
        let h = h * scale;
        for (y, &s) in samples[d..d + np].iter_mut().zip(&preamble.symbols) {
            *y += h * s;
        }
    }
    let total = noise.total();
    if total > 0.0 {
        let sd = (total / 2.0).sqrt();
        let mut rng = beam_rng(seed, taps.beam_index);
        for y in samples.iter_mut() {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            *y += Complex64::new(re * sd, im * sd);
        }
    }
    Ok(SensingRecord { samples, beam_index: taps.beam_index, preamble_len: np })
}

/// Writes records back to back, each as a little-endian header
/// `(N^p, L_d, beam)` of three `u64` followed by interleaved `f64` pairs.
pub fn write_records<W: Write>(mut w: W, records: &[SensingRecord]) -> Result<(), WaveformError> {
    for r in records {
        let mut buf = Vec::with_capacity(24 + 16 * r.samples.len());
        for v in [r.preamble_len as u64, r.tap_count() as u64, r.beam_index as u64] {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        for s in &r.samples {
            buf.extend_from_slice(&s.re.to_le_bytes());
            buf.extend_from_slice(&s.im.to_le_bytes());
        }
        w.write_all(&buf)?;
    }
    Ok(())
}

pub fn read_records<R: Read>(mut r: R) -> Result<Vec<SensingRecord>, WaveformError> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    let mut out = Vec::new();
    let mut pos = 0;
    let u64_at = |p: usize| u64::from_le_bytes(bytes[p..p + 8].try_into().expect("8 bytes"));
    let f64_at = |p: usize| f64::from_le_bytes(bytes[p..p + 8].try_into().expect("8 bytes"));
    while pos < bytes.len() {
        if bytes.len() - pos < 24 {
            return Err(WaveformError::Format(format!("truncated header at byte {pos}")));
        }
        let np = u64_at(pos) as usize;
        let l_d = u64_at(pos + 8) as usize;
        let beam = u64_at(pos + 16) as usize;
        pos += 24;
        let n = np
            .checked_add(l_d)
            .filter(|n| n.checked_mul(16).is_some_and(|b| b <= bytes.len() - pos))
            .ok_or_else(|| WaveformError::Format(format!("record for beam {beam} overruns the file")))?;
        let samples = (0..n)
            .map(|i| Complex64::new(f64_at(pos + 16 * i), f64_at(pos + 16 * i + 8)))
            .collect();
        pos += 16 * n;
        out.push(SensingRecord { samples, beam_index: beam, preamble_len: np });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn golay_pair_is_complementary() {
        let (a, b) = golay_pair_128();
        assert!(a.iter().chain(&b).all(|&x| x == 1 || x == -1));
        for k in 0..128 {
            let sum = aperiodic_autocorrelation(&a, k) + aperiodic_autocorrelation(&b, k);
            assert_eq!(sum, if k == 0 { 256 } else { 0 }, "lag {k}");
        }
    }

    #[test]
    fn golay_preamble_layout() {
        let p = make_preamble(PreambleKind::Golay80211ad, 3328, 0).unwrap();
        assert_eq!(p.len(), 3328);
        assert!(p.symbols.iter().all(|s| (s.norm() - 1.0).abs() < 1e-15));
        assert_relative_eq!(p.energy() / 3328.0, 1.0, epsilon = 1e-12);
        assert!(matches!(
            make_preamble(PreambleKind::Golay80211ad, 128, 0),
            Err(WaveformError::GolayLength(128))
        ));
    }

    #[test]
    fn pn_is_seeded() {
        let a = make_preamble(PreambleKind::Pn, 50, 9).unwrap();
        let b = make_preamble(PreambleKind::Pn, 50, 9).unwrap();
        let c = make_preamble(PreambleKind::Pn, 50, 10).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_relative_eq!(a.energy() / 50.0, 1.0, epsilon = 1e-12);
        assert!(make_preamble(PreambleKind::Pn, 0, 0).is_err());
    }

    #[test]
    fn identity_channel_and_zero_channel() {
        let p = make_preamble(PreambleKind::Pn, 32, 1).unwrap();
        let mut taps = BeamTaps { taps: vec![Complex64::new(0.0, 0.0); 4], beam_index: 3 };
        let r = synthesize_rx(&taps, &p, 2.0, NoiseSpec::NONE, 0).unwrap();
        assert_eq!(r.samples.len(), 36);
        assert!(r.samples.iter().all(|s| s.norm() == 0.0));
        taps.taps[0] = Complex64::new(1.0, 0.0);
        let r = synthesize_rx(&taps, &p, 2.0, NoiseSpec::NONE, 0).unwrap();
        for n in 0..32 {
            assert_relative_eq!((r.samples[n] - p.symbols[n] * 2f64.sqrt()).norm(), 0.0, epsilon = 1e-15);
        }
        assert!(synthesize_rx(&taps, &p, 1.0, NoiseSpec { variance: -1.0, combiner_norm_sqr: 1.0 }, 0).is_err());
    }

    #[test]
    fn noise_variance_matches() {
        let p = make_preamble(PreambleKind::Pn, 100_000 - 1, 1).unwrap();
        let taps = BeamTaps { taps: vec![Complex64::new(0.0, 0.0)], beam_index: 0 };
        let noise = NoiseSpec { variance: 3.0, combiner_norm_sqr: 16.0 };
        let r = synthesize_rx(&taps, &p, 1.0, noise, 77).unwrap();
        let var = r.samples.iter().map(|s| s.norm_sqr()).sum::<f64>() / r.samples.len() as f64;
        assert_relative_eq!(var, 48.0, max_relative = 0.05);
        let again = synthesize_rx(&taps, &p, 1.0, noise, 77).unwrap();
        assert_eq!(r, again);
    }

    #[test]
    fn records_round_trip() {
        let recs = vec![
            SensingRecord { samples: vec![Complex64::new(1.5, -2.0); 5], beam_index: 0, preamble_len: 3 },
            SensingRecord { samples: vec![Complex64::new(0.1, 1e-300); 4], beam_index: 7, preamble_len: 2 },
        ];
        let mut buf = Vec::new();
        write_records(&mut buf, &recs).unwrap();
        assert_eq!(buf.len(), 2 * 24 + 9 * 16);
        assert_eq!(read_records(&buf[..]).unwrap(), recs);
        assert!(read_records(&buf[..30]).is_err());
    }
}
