//! Uniform planar arrays and the camera-grid-matched sensing codebook.
//!
//! The sensing frame has `x` along the sensor width, `y` along boresight
//! (depth) and `z` along the sensor height. A beam is identified by its
//! angles to the `z` and `x` axes, `(theta_z, theta_x)`, whose cosines are the
//! direction cosines of the beam direction. Beams are designed so that their
//! direction rays pierce the camera plane `y = F_L` exactly at the centers of
//! an `n_bar_v x n_bar_h` sensor grid, which makes the codebook resolution a
//! regular image grid.

use std::f64::consts::{FRAC_PI_2, PI, TAU};
use std::io::Write;

use nalgebra::Vector3;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::exec::Execution;
use crate::map::GridMap;

#[derive(Debug, Error)]
pub enum ArrayError {
    #[error("field of view must lie in (0, 180) degrees, got {0} rad")]
    FieldOfView(f64),
    #[error("aspect ratio must be positive, got {0}")]
    AspectRatio(f64),
    #[error("focal length must be positive, got {0}")]
    FocalLength(f64),
    #[error("oversampling factors must be >= 1, got ({0}, {1})")]
    Oversampling(usize, usize),
    #[error("grid counts must be >= 1, got ({0}, {1})")]
    GridCount(usize, usize),
    #[error("array needs at least one element per axis, got {0}x{1}")]
    ArraySize(usize, usize),
    #[error("element spacing and wavelength must be positive")]
    Spacing,
    #[error("sidelobe control must be positive, got {0}")]
    SidelobeControl(f64),
    #[error("phase quantization needs at least one bit")]
    PhaseBits,
    #[error("vector length {got} does not match array size {expected}")]
    VectorLength { expected: usize, got: usize },
    #[error("radiation pattern grid is empty")]
    EmptyPattern,
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Uniform planar array geometry.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct UpaConfig {
    pub n_h: usize,
    pub n_v: usize,
    pub spacing_m: f64,
    pub wavelength_m: f64,
    /// Phase-shifter resolution; 0 means continuous phases.
    #[serde(default)]
    pub phase_bits: u32,
}

impl UpaConfig {
    pub fn half_wavelength(n_h: usize, n_v: usize, wavelength_m: f64) -> Self {
        Self { n_h, n_v, spacing_m: wavelength_m / 2.0, wavelength_m, phase_bits: 0 }
    }

    pub fn n_elements(&self) -> usize {
        self.n_h * self.n_v
    }

    pub fn wavenumber(&self) -> f64 {
        TAU / self.wavelength_m
    }

    pub fn validate(&self) -> Result<(), ArrayError> {
        if self.n_h == 0 || self.n_v == 0 {
            return Err(ArrayError::ArraySize(self.n_h, self.n_v));
        }
        if !(self.spacing_m > 0.0) || !(self.wavelength_m > 0.0) {
            return Err(ArrayError::Spacing);
        }
        Ok(())
    }

    /// Phase step between adjacent elements for direction cosine `cos_angle`.
    pub fn phase_step(&self, cos_angle: f64) -> f64 {
        self.wavenumber() * self.spacing_m * cos_angle
    }
}

/// Camera-like description of the sensed scene.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneView {
    pub fov_rad: f64,
    pub aspect_ratio: f64,
    pub os_h: usize,
    pub os_v: usize,
    /// Camera-plane distance; the codebook does not depend on it.
    pub focal_length_m: f64,
}

impl Default for SceneView {
    fn default() -> Self {
        Self {
            fov_rad: 100f64.to_radians(),
            aspect_ratio: 16.0 / 9.0,
            os_h: 1,
            os_v: 1,
            focal_length_m: 13.43e-3,
        }
    }
}

impl SceneView {
    pub fn validate(&self) -> Result<(), ArrayError> {
        if !(self.fov_rad > 0.0 && self.fov_rad < PI) {
            return Err(ArrayError::FieldOfView(self.fov_rad));
        }
        if !(self.aspect_ratio > 0.0) || !self.aspect_ratio.is_finite() {
            return Err(ArrayError::AspectRatio(self.aspect_ratio));
        }
        if !(self.focal_length_m > 0.0) || !self.focal_length_m.is_finite() {
            return Err(ArrayError::FocalLength(self.focal_length_m));
        }
        if self.os_h == 0 || self.os_v == 0 {
            return Err(ArrayError::Oversampling(self.os_h, self.os_v));
        }
        Ok(())
    }

    /// Sensor width `S_H = 2 F_L tan(FoV/2)`.
    pub fn sensor_width(&self) -> f64 {
        2.0 * self.focal_length_m * (self.fov_rad / 2.0).tan()
    }

    /// Sensor height `S_V = S_H / A_R`.
    pub fn sensor_height(&self) -> f64 {
        self.sensor_width() / self.aspect_ratio
    }
}

/// Cell-center points of the camera plane, in raster order (row 0 on top).
#[derive(Clone, Debug, PartialEq)]
pub struct SensorGrid {
    pub n_bar_h: usize,
    pub n_bar_v: usize,
    pub points: Vec<Vector3<f64>>,
}

impl SensorGrid {
    /// Linear index of grid cell `(h, v)`, both zero based.
    pub fn index(&self, h: usize, v: usize) -> usize {
        v * self.n_bar_h + h
    }

    /// Inverse of [`SensorGrid::index`]: returns `(h, v)`.
    pub fn subscripts(&self, m: usize) -> (usize, usize) {
        (m % self.n_bar_h, m / self.n_bar_h)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Builds the `n_bar_v x n_bar_h` grid of cell centers on the plane `y = F_L`.
pub fn sensor_grid(view: &SceneView, n_bar_h: usize, n_bar_v: usize) -> Result<SensorGrid, ArrayError> {
    view.validate()?;
    if n_bar_h == 0 || n_bar_v == 0 {
        return Err(ArrayError::GridCount(n_bar_h, n_bar_v));
    }
    let (s_h, s_v) = (view.sensor_width(), view.sensor_height());
    let (q_h, q_v) = (s_h / n_bar_h as f64, s_v / n_bar_v as f64);
    let mut points = Vec::with_capacity(n_bar_h * n_bar_v);
    for v in 0..n_bar_v {
        let z = s_v / 2.0 - q_v / 2.0 - v as f64 * q_v;
        for h in 0..n_bar_h {
            let x = -s_h / 2.0 + q_h / 2.0 + h as f64 * q_h;
            points.push(Vector3::new(x, view.focal_length_m, z));
        }
    }
    Ok(SensorGrid { n_bar_h, n_bar_v, points })
}

/// Angles of one grid point: to the z axis, to the x axis, and the azimuth
/// `Phi` of its projection on the x-y plane.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GridAngles {
    pub theta_z: f64,
    pub theta_x: f64,
    pub phi: f64,
}

impl GridAngles {
    pub fn of_point(p: &Vector3<f64>) -> Self {
        let (x, y, z) = (p.x, p.y, p.z);
        Self {
            theta_z: FRAC_PI_2 - (z / x.hypot(y)).atan(),
            theta_x: FRAC_PI_2 - (x / z.hypot(y)).atan(),
            phi: y.atan2(x),
        }
    }

    /// Unit direction implied by `(theta_z, theta_x)` in the front half-space.
    pub fn direction(&self) -> Vector3<f64> {
        let (ux, uz) = (self.theta_x.cos(), self.theta_z.cos());
        Vector3::new(ux, (1.0 - ux * ux - uz * uz).max(0.0).sqrt(), uz)
    }
}

pub fn grid_angles(points: &[Vector3<f64>]) -> Vec<GridAngles> {
    points.iter().map(GridAngles::of_point).collect()
}

/// Constituent vector `[1, e^{-j k d cos(a)}, ..., e^{-j (n-1) k d cos(a)}]`.
pub fn constituent_vector(n: usize, phase_step: f64) -> Vec<Complex64> {
    (0..n)
        .map(|r| Complex64::from_polar(1.0, -(r as f64) * phase_step))
        .collect()
}

/// Kronecker product `a ⊗ b` (index `i * b.len() + j`).
pub fn kron(a: &[Complex64], b: &[Complex64]) -> Vec<Complex64> {
    let mut out = Vec::with_capacity(a.len() * b.len());
    for &x in a {
        out.extend(b.iter().map(|&y| x * y));
    }
    out
}

/// UPA response / beam vector for direction `(theta_z, theta_x)`:
/// `b_V(theta_z) ⊗ b_H(theta_x)`, vertical index major.
pub fn steering_vector(upa: &UpaConfig, theta_z: f64, theta_x: f64) -> Vec<Complex64> {
    let bv = constituent_vector(upa.n_v, upa.phase_step(theta_z.cos()));
    let bh = constituent_vector(upa.n_h, upa.phase_step(theta_x.cos()));
    kron(&bv, &bh)
}

/// Gaussian sidelobe-reduction taper `exp(-(r - n/2)^2 / (2 (n/delta)^2))`,
/// `r = 1..=n`.
pub fn slr_weights(n: usize, delta: f64) -> Result<Vec<f64>, ArrayError> {
    if !(delta > 0.0) || !delta.is_finite() {
        return Err(ArrayError::SidelobeControl(delta));
    }
    let mu = n as f64 / 2.0;
    let sigma = n as f64 / delta;
    Ok((1..=n)
        .map(|r| {
            let d = r as f64 - mu;
            (-d * d / (2.0 * sigma * sigma)).exp()
        })
        .collect())
}

/// Snaps a phase to the nearest multiple of `2π / 2^bits` in `[0, 2π)`.
/// Midpoints go to the smaller phase.
pub fn quantize_phase(phase: f64, bits: u32) -> f64 {
    let levels = 1u64 << bits;
    let step = TAU / levels as f64;
    let k = phase.rem_euclid(TAU) / step;
    let lower = k.floor();
    let frac = k - lower;
    let idx = if frac > 0.5 + 1e-9 { lower + 1.0 } else { lower };
    (idx as u64 % levels) as f64 * step
}

/// Quantizes every entry's phase; moduli are preserved. `bits == 0` passes
/// the vector through unchanged.
pub fn quantize_phases(v: &[Complex64], bits: u32) -> Vec<Complex64> {
    if bits == 0 {
        return v.to_vec();
    }
    v.iter()
        .map(|c| Complex64::from_polar(c.norm(), quantize_phase(c.arg(), bits)))
        .collect()
}

/// One codebook vector. `factors` holds `(vertical, horizontal)` constituent
/// vectors when the beam is an exact Kronecker product, which lets array
/// responses be evaluated in `O(N_V + N_H)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Beam {
    pub vector: Vec<Complex64>,
    pub factors: Option<(Vec<Complex64>, Vec<Complex64>)>,
}

impl Beam {
    pub fn norm_sqr(&self) -> f64 {
        self.vector.iter().map(|c| c.norm_sqr()).sum()
    }

    /// `a(u_z, u_x)^H v` for the array response with direction cosines
    /// `(u_z, u_x)`.
    pub fn response(&self, upa: &UpaConfig, cos_z: f64, cos_x: f64) -> Complex64 {
        // a^H v = Σ_r e^{+j r ψ} v_r, evaluated by Horner in z = e^{jψ}.
        let zv = Complex64::from_polar(1.0, upa.phase_step(cos_z));
        let zh = Complex64::from_polar(1.0, upa.phase_step(cos_x));
        self.response_at(upa, zv, zh)
    }

    /// [`Beam::response`] with precomputed phasors `e^{jψ_v}`, `e^{jψ_h}`.
    pub fn response_at(&self, upa: &UpaConfig, zv: Complex64, zh: Complex64) -> Complex64 {
        match &self.factors {
            Some((bv, bh)) => horner(bv, zv) * horner(bh, zh),
            None => {
                let mut acc = Complex64::new(0.0, 0.0);
                for row in self.vector.chunks_exact(upa.n_h).rev() {
                    acc = acc * zv + horner(row, zh);
                }
                acc
            }
        }
    }
}

fn horner(coeffs: &[Complex64], z: Complex64) -> Complex64 {
    coeffs
        .iter()
        .rev()
        .fold(Complex64::new(0.0, 0.0), |acc, &c| acc * z + c)
}

/// Sidelobe-reduction controls `(delta_h, delta_v)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SlrControl {
    pub delta_h: f64,
    pub delta_v: f64,
}

/// Sensing codebook: `M = n_bar_v * n_bar_h` beams in raster order. Transmit
/// and receive share the aperture, so `w_m = f_m`.
#[derive(Clone, Debug)]
pub struct Codebook {
    pub upa: UpaConfig,
    pub view: SceneView,
    pub slr: Option<SlrControl>,
    pub grid: SensorGrid,
    pub angles: Vec<GridAngles>,
    pub beams: Vec<Beam>,
}

impl Codebook {
    pub fn len(&self) -> usize {
        self.beams.len()
    }

    pub fn is_empty(&self) -> bool {
        self.beams.is_empty()
    }

    pub fn n_bar_h(&self) -> usize {
        self.grid.n_bar_h
    }

    pub fn n_bar_v(&self) -> usize {
        self.grid.n_bar_v
    }

    /// `(f_m, w_m)`.
    pub fn pair(&self, m: usize) -> (&Beam, &Beam) {
        (&self.beams[m], &self.beams[m])
    }

    fn angle_map(&self, f: impl Fn(&GridAngles) -> f64) -> GridMap {
        GridMap::new(
            self.n_bar_v(),
            self.n_bar_h(),
            self.angles.iter().map(f).collect(),
        )
        .expect("grid shape")
    }

    /// `Θ`: angle to the z axis per grid cell.
    pub fn theta_z(&self) -> GridMap {
        self.angle_map(|a| a.theta_z)
    }

    pub fn theta_x(&self) -> GridMap {
        self.angle_map(|a| a.theta_x)
    }

    /// `Φ`: azimuth per grid cell.
    pub fn phi(&self) -> GridMap {
        self.angle_map(|a| a.phi)
    }

    /// CSV dump: index, subscripts, angles, then `re,im` of every weight.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<(), ArrayError> {
        let n = self.upa.n_elements();
        let mut header = String::from("m,h,v,theta_z_rad,theta_x_rad,phi_rad");
        for i in 0..n {
            header.push_str(&format!(",w{i}_re,w{i}_im"));
        }
        writeln!(w, "{header}")?;
        for (m, (a, beam)) in self.angles.iter().zip(&self.beams).enumerate() {
            let (h, v) = self.grid.subscripts(m);
            let mut line = format!("{m},{h},{v},{},{},{}", a.theta_z, a.theta_x, a.phi);
            for c in &beam.vector {
                line.push_str(&format!(",{},{}", c.re, c.im));
            }
            writeln!(w, "{line}")?;
        }
        Ok(())
    }
}

/// Designs the grid-matched codebook. Tapers are applied to the constituent
/// vectors before the Kronecker product; phase quantization, if configured,
/// is applied last to the full vector.
pub fn design_codebook(
    upa: &UpaConfig,
    view: &SceneView,
    slr: Option<SlrControl>,
    exec: Execution,
) -> Result<Codebook, ArrayError> {
    upa.validate()?;
    view.validate()?;
    let grid = sensor_grid(view, upa.n_h * view.os_h, upa.n_v * view.os_v)?;
    let angles = grid_angles(&grid.points);
    let (c_h, c_v) = match slr {
        Some(s) => (Some(slr_weights(upa.n_h, s.delta_h)?), Some(slr_weights(upa.n_v, s.delta_v)?)),
        None => (None, None),
    };
    let taper = |v: &mut Vec<Complex64>, c: &Option<Vec<f64>>| {
        if let Some(c) = c {
            v.iter_mut().zip(c).for_each(|(x, &w)| *x *= w);
        }
    };
    let beams = exec.map_indexed(angles.len(), |m| {
        let a = angles[m];
        let mut bv = constituent_vector(upa.n_v, upa.phase_step(a.theta_z.cos()));
        let mut bh = constituent_vector(upa.n_h, upa.phase_step(a.theta_x.cos()));
        taper(&mut bv, &c_v);
        taper(&mut bh, &c_h);
        let vector = kron(&bv, &bh);
        if upa.phase_bits > 0 {
            Beam { vector: quantize_phases(&vector, upa.phase_bits), factors: None }
        } else {
            Beam { vector, factors: Some((bv, bh)) }
        }
    });
    Ok(Codebook { upa: *upa, view: *view, slr, grid, angles, beams })
}

/// Normalized power pattern `|a(θz, θx)^H v|^2` in dB (peak at 0 dB) over the
/// Cartesian product of the given angle lists. Rows follow `theta_z`.
pub fn radiation_pattern(
    v: &[Complex64],
    upa: &UpaConfig,
    theta_z: &[f64],
    theta_x: &[f64],
) -> Result<GridMap, ArrayError> {
    if theta_z.is_empty() || theta_x.is_empty() {
        return Err(ArrayError::EmptyPattern);
    }
    if v.len() != upa.n_elements() {
        return Err(ArrayError::VectorLength { expected: upa.n_elements(), got: v.len() });
    }
    let beam = Beam { vector: v.to_vec(), factors: None };
    let mut power = GridMap::from_fn(theta_z.len(), theta_x.len(), |r, c| {
        beam.response(upa, theta_z[r].cos(), theta_x[c].cos()).norm_sqr()
    });
    let peak = power.as_slice().iter().cloned().fold(0.0, f64::max);
    for p in power.as_mut_slice() {
        *p = if peak > 0.0 { 10.0 * (*p / peak).max(1e-30).log10() } else { f64::NEG_INFINITY };
    }
    Ok(power)
}
