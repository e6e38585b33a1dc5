//! Independent oracles shared by the integration and acceptance tests.
//!
//! Nothing here calls into the library's channel or estimator code.

#![allow(dead_code)]

use std::f64::consts::PI;

use mmwave_depth::Complex64;

pub const C: f64 = 299_792_458.0;

pub fn zero() -> Complex64 {
    Complex64::new(0.0, 0.0)
}

/// Raised-cosine pulse at `x` symbol periods, truncated at `±8`.
pub fn rc(x: f64, beta: f64) -> f64 {
    if x.abs() > 8.0 {
        return 0.0;
    }
    let sinc = if x == 0.0 { 1.0 } else { (PI * x).sin() / (PI * x) };
    let den = 1.0 - (2.0 * beta * x).powi(2);
    if den.abs() < 1e-10 {
        return PI / 4.0 * sinc_plain(1.0 / (2.0 * beta));
    }
    sinc * (PI * beta * x).cos() / den
}

fn sinc_plain(x: f64) -> f64 {
    (PI * x).sin() / (PI * x)
}

/// Half-wavelength UPA response, element `v·n_h + h`.
pub fn steering(n_h: usize, n_v: usize, theta_z: f64, theta_x: f64) -> Vec<Complex64> {
    let mut a = Vec::with_capacity(n_h * n_v);
    for v in 0..n_v {
        for h in 0..n_h {
            let phase = -PI * (v as f64 * theta_z.cos() + h as f64 * theta_x.cos());
            a.push(Complex64::from_polar(1.0, phase));
        }
    }
    a
}

pub struct OraclePath {
    pub amplitude: Complex64,
    pub delay_samples: f64,
    pub aod: (f64, f64),
    pub aoa: (f64, f64),
}

/// `h[d] = w^H (Σ_paths α p(d - τ) a_R a_T^H) f` with the full `N x N`
/// channel matrix formed per tap.
pub fn brute_force_taps(
    paths: &[OraclePath],
    f: &[Complex64],
    w: &[Complex64],
    n_h: usize,
    n_v: usize,
    l_d: usize,
    beta: f64,
) -> Vec<Complex64> {
    let n = n_h * n_v;
    let mut out = Vec::with_capacity(l_d);
    for d in 0..l_d {
        let mut h = vec![zero(); n * n];
        for p in paths {
            let g = p.amplitude * rc(d as f64 - p.delay_samples, beta);
            if g == zero() {
                continue;
            }
            let ar = steering(n_h, n_v, p.aoa.0, p.aoa.1);
            let at = steering(n_h, n_v, p.aod.0, p.aod.1);
            for i in 0..n {
                for j in 0..n {
                    h[i * n + j] += g * ar[i] * at[j].conj();
                }
            }
        }
        let mut acc = zero();
        for i in 0..n {
            let mut row = zero();
            for j in 0..n {
                row += h[i * n + j] * f[j];
            }
            acc += w[i].conj() * row;
        }
        out.push(acc);
    }
    out
}

/// `Σ_n s[n] conj(y[n + q])` by direct summation.
pub fn corr_at(s: &[Complex64], y: &[Complex64], q: usize) -> Complex64 {
    let mut acc = zero();
    for (n, &sv) in s.iter().enumerate() {
        if let Some(&yv) = y.get(n + q) {
            acc += sv * yv.conj();
        }
    }
    acc
}

/// Signal-domain SIC: correlate, take the peak, subtract the scaled
/// preamble from the residual, repeat.
pub fn literal_sic(s: &[Complex64], y: &[Complex64], first: usize, last: usize, threshold: f64, cap: usize) -> Vec<usize> {
    let energy: f64 = s.iter().map(|v| v.norm_sqr()).sum();
    let mut r = y.to_vec();
    let mut found = Vec::new();
    for _ in 0..cap {
        let mut best = (first, -1.0, zero());
        for q in first..=last {
            let c = corr_at(s, &r, q);
            if c.norm_sqr() > best.1 {
                best = (q, c.norm_sqr(), c);
            }
        }
        if best.1 < threshold {
            break;
        }
        if !found.contains(&best.0) {
            found.push(best.0);
        }
        let a = best.2.conj() / energy;
        for (n, &sv) in s.iter().enumerate() {
            if let Some(v) = r.get_mut(n + best.0) {
                *v -= a * sv;
            }
        }
    }
    found
}

/// `y[n] = Σ a s[n - q]` for integer delays, `N^p + l_d` samples.
pub fn on_grid_record(s: &[Complex64], paths: &[(usize, Complex64)], l_d: usize) -> Vec<Complex64> {
    let mut y = vec![zero(); s.len() + l_d];
    for &(q, a) in paths {
        for (n, &sv) in s.iter().enumerate() {
            y[n + q] += a * sv;
        }
    }
    y
}

/// `y[n] = a Σ_i s[i] p(n - i - τ)`: the preamble passed through one
/// band-limited path with fractional delay `tau` samples.
pub fn off_grid_record(s: &[Complex64], a: Complex64, tau: f64, l_d: usize, beta: f64) -> Vec<Complex64> {
    let mut y = vec![zero(); s.len() + l_d];
    for (n, v) in y.iter_mut().enumerate() {
        let lo = (n as f64 - tau - 9.0).ceil().max(0.0) as usize;
        let hi = ((n as f64 - tau + 9.0).floor().max(0.0) as usize).min(s.len() - 1);
        for (i, &sv) in s.iter().enumerate().take(hi + 1).skip(lo) {
            *v += a * sv * rc(n as f64 - i as f64 - tau, beta);
        }
    }
    y
}
