//! Planar-facet scenes: materials, ray-cast ground truth and monostatic
//! backscatter path tracing.
//!
//! Facets are subdivided into small cells and every visible cell returns one
//! diffuse backscatter path toward the device. A facet whose perpendicular
//! foot (as seen from the device) lies on it also returns one specular path.
//! Single-bounce specular-then-diffuse paths can be enabled for multipath
//! studies.

use std::f64::consts::{PI, TAU};
use std::io::Write;
use std::path::Path as FsPath;

use nalgebra::Vector3;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::array::{sensor_grid, ArrayError, SceneView};
use crate::channel::{path_gain, Path, PathSet};
use crate::consts::{db_to_linear, SPEED_OF_LIGHT};
use crate::exec::Execution;
use crate::map::{DepthMap, GridMap, RangeMap};

pub type Point3 = Vector3<f64>;

#[derive(Debug, Error)]
pub enum SceneError {
    #[error("scene has no facets")]
    Empty,
    #[error("unknown material {0:?}")]
    UnknownMaterial(String),
    #[error("material {name}: {field} = {value} is outside [0, 1]")]
    MaterialRange { name: String, field: &'static str, value: f64 },
    #[error("facet {index}: {reason}")]
    Facet { index: usize, reason: String },
    #[error("device pose: {0}")]
    Pose(String),
    #[error("resolution must be at least 2x2, got {0}x{1}")]
    Resolution(usize, usize),
    #[error("wavelength must be positive, got {0}")]
    Wavelength(f64),
    #[error("cell size must be positive, got {0}")]
    CellSize(f64),
    #[error("invalid view: {0}")]
    View(#[from] ArrayError),
    #[error("scene description: {0}")]
    Parse(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Diffuse-scattering description of a building material.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Material {
    pub name: String,
    /// Scattered-to-incident field ratio.
    pub scatter_ratio: f64,
    pub forward_backward_ratio: f64,
    pub cross_pol_ratio: f64,
    pub lobe_narrowness: f64,
}

impl Material {
    fn table(name: &str, scatter_ratio: f64) -> Self {
        Self {
            name: name.to_string(),
            scatter_ratio,
            forward_backward_ratio: 0.75,
            cross_pol_ratio: 0.40,
            lobe_narrowness: 0.40,
        }
    }

    /// Looks a material up in the built-in 60 GHz catalog (case-insensitive,
    /// `-`, `_` and spaces ignored).
    pub fn by_name(name: &str) -> Result<Self, SceneError> {
        let key: String = name
            .chars()
            .filter(|c| !matches!(c, '-' | '_' | ' '))
            .flat_map(char::to_lowercase)
            .collect();
        material_catalog()
            .into_iter()
            .find(|m| m.name.replace('_', "") == key)
            .ok_or_else(|| SceneError::UnknownMaterial(name.to_string()))
    }

    pub fn validate(&self) -> Result<(), SceneError> {
        for (field, value) in [
            ("scatter_ratio", self.scatter_ratio),
            ("forward_backward_ratio", self.forward_backward_ratio),
            ("cross_pol_ratio", self.cross_pol_ratio),
            ("lobe_narrowness", self.lobe_narrowness),
        ] {
            if !(0.0..=1.0).contains(&value) {
                return Err(SceneError::MaterialRange { name: self.name.clone(), field, value });
            }
        }
        Ok(())
    }
}

/// ITU-default diffuse parameters at 60 GHz.
pub fn material_catalog() -> Vec<Material> {
    vec![
        Material::table("concrete", 0.40),
        Material::table("ceilingboard", 0.30),
        Material::table("wood", 0.15),
        Material::table("floorboard", 0.15),
        Material::table("drywall", 0.10),
        Material::table("layered_drywall", 0.10),
        Material::table("glass", 0.0),
    ]
}

/// Convex planar quadrilateral.
#[derive(Clone, Debug, PartialEq)]
pub struct PlanarFacet {
    pub vertices: [Point3; 4],
    pub material: Material,
    /// Radar cross section override in m²; `None` derives it from the area.
    pub rcs_sqm: Option<f64>,
    normal: Point3,
}

const COPLANAR_TOL_M: f64 = 1e-9;

impl PlanarFacet {
    pub fn new(vertices: [Point3; 4], material: Material, rcs_sqm: Option<f64>) -> Result<Self, String> {
        let n = (vertices[1] - vertices[0]).cross(&(vertices[3] - vertices[0]));
        let norm = n.norm();
        if !(norm > 0.0) {
            return Err("degenerate facet (zero area)".into());
        }
        let normal = n / norm;
        for (i, v) in vertices.iter().enumerate() {
            let off = (v - vertices[0]).dot(&normal).abs();
            if off > COPLANAR_TOL_M {
                return Err(format!("vertex {i} is {off:e} m off the facet plane"));
            }
        }
        for i in 0..4 {
            let e = vertices[(i + 1) % 4] - vertices[i];
            let f = vertices[(i + 2) % 4] - vertices[(i + 1) % 4];
            if e.cross(&f).dot(&normal) <= 0.0 {
                return Err("facet is not a convex quadrilateral in vertex order".into());
            }
        }
        if let Some(r) = rcs_sqm {
            if !(r >= 0.0) {
                return Err(format!("negative radar cross section {r}"));
            }
        }
        Ok(Self { vertices, material, rcs_sqm, normal })
    }

    /// Axis-aligned-in-plane rectangle from a corner and two edge vectors.
    pub fn rectangle(origin: Point3, edge_u: Point3, edge_v: Point3, material: Material) -> Result<Self, String> {
        Self::new(
            [origin, origin + edge_u, origin + edge_u + edge_v, origin + edge_v],
            material,
            None,
        )
    }

    pub fn normal(&self) -> Point3 {
        self.normal
    }

    pub fn area(&self) -> f64 {
        let v = &self.vertices;
        0.5 * ((v[2] - v[0]).cross(&(v[3] - v[1]))).norm()
    }

    /// Point-in-quad test for a point already on the plane.
    pub fn contains(&self, p: &Point3) -> bool {
        let tol = 1e-12 * (1.0 + p.norm());
        (0..4).all(|i| {
            let a = self.vertices[i];
            let b = self.vertices[(i + 1) % 4];
            (b - a).cross(&(p - a)).dot(&self.normal) >= -tol
        })
    }

    /// Distance along `dir` (unit) from `origin` to the facet, if hit.
    pub fn intersect(&self, origin: &Point3, dir: &Point3) -> Option<f64> {
        let denom = self.normal.dot(dir);
        if denom.abs() < 1e-15 {
            return None;
        }
        let t = self.normal.dot(&(self.vertices[0] - origin)) / denom;
        if t <= 1e-12 {
            return None;
        }
        let p = origin + dir * t;
        self.contains(&p).then_some(t)
    }

    /// Bilinear point at parametric `(s, t)` in `[0, 1]^2`.
    fn point_at(&self, s: f64, t: f64) -> Point3 {
        let v = &self.vertices;
        v[0] * ((1.0 - s) * (1.0 - t)) + v[1] * (s * (1.0 - t)) + v[2] * (s * t) + v[3] * ((1.0 - s) * t)
    }

    /// Splits the facet into cells no larger than `cell_size` along either
    /// parametric edge. Returns `(center, area)` per cell.
    pub fn cells(&self, cell_size: f64) -> Vec<(Point3, f64)> {
        let v = &self.vertices;
        let len_s = (v[1] - v[0]).norm().max((v[2] - v[3]).norm());
        let len_t = (v[3] - v[0]).norm().max((v[2] - v[1]).norm());
        let ns = ((len_s / cell_size).ceil() as usize).max(1);
        let nt = ((len_t / cell_size).ceil() as usize).max(1);
        let mut out = Vec::with_capacity(ns * nt);
        for j in 0..nt {
            for i in 0..ns {
                let (s0, s1) = (i as f64 / ns as f64, (i + 1) as f64 / ns as f64);
                let (t0, t1) = (j as f64 / nt as f64, (j + 1) as f64 / nt as f64);
                let corners = [
                    self.point_at(s0, t0),
                    self.point_at(s1, t0),
                    self.point_at(s1, t1),
                    self.point_at(s0, t1),
                ];
                let area = 0.5 * ((corners[2] - corners[0]).cross(&(corners[3] - corners[1]))).norm();
                out.push((self.point_at(0.5 * (s0 + s1), 0.5 * (t0 + t1)), area));
            }
        }
        out
    }

    fn rcs_per_area(&self) -> f64 {
        match self.rcs_sqm {
            Some(r) => r / self.area(),
            // Lambertian backscatter: σ/A = 4 S² cos²θ; the cos² is applied per cell.
            None => 4.0 * self.material.scatter_ratio.powi(2),
        }
    }
}

/// Device location and orientation. `boresight` is the sensing `y` axis and
/// `up` the `z` axis; `x = y × z`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DevicePose {
    pub position: Point3,
    pub boresight: Point3,
    pub up: Point3,
}

impl Default for DevicePose {
    fn default() -> Self {
        Self { position: Point3::zeros(), boresight: Point3::y(), up: Point3::z() }
    }
}

impl DevicePose {
    pub fn validate(&self) -> Result<(), SceneError> {
        let tol = 1e-12;
        if (self.boresight.norm() - 1.0).abs() > tol || (self.up.norm() - 1.0).abs() > tol {
            return Err(SceneError::Pose("boresight and up must be unit vectors".into()));
        }
        if self.boresight.dot(&self.up).abs() > tol {
            return Err(SceneError::Pose("boresight must be perpendicular to up".into()));
        }
        Ok(())
    }

    pub fn right(&self) -> Point3 {
        self.boresight.cross(&self.up)
    }

    /// World → device frame.
    pub fn to_device(&self, p: &Point3) -> Point3 {
        let d = p - self.position;
        Point3::new(d.dot(&self.right()), d.dot(&self.boresight), d.dot(&self.up))
    }

    /// Device-frame direction → world direction.
    pub fn to_world_dir(&self, d: &Point3) -> Point3 {
        self.right() * d.x + self.boresight * d.y + self.up * d.z
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Scene {
    pub facets: Vec<PlanarFacet>,
    pub device: DevicePose,
    /// Path-loss exponent `PL`; the two-way loss goes as `ρ^(2 PL)`.
    pub path_loss_exponent: f64,
}

impl Scene {
    pub fn new(facets: Vec<PlanarFacet>, device: DevicePose, path_loss_exponent: f64) -> Result<Self, SceneError> {
        let scene = Self { facets, device, path_loss_exponent };
        scene.validate()?;
        Ok(scene)
    }

    pub fn validate(&self) -> Result<(), SceneError> {
        if self.facets.is_empty() {
            return Err(SceneError::Empty);
        }
        self.device.validate()?;
        for f in &self.facets {
            f.material.validate()?;
        }
        Ok(())
    }

    /// Nearest facet hit along a world-frame unit ray.
    pub fn cast(&self, origin: &Point3, dir: &Point3) -> Option<(usize, f64)> {
        self.facets
            .iter()
            .enumerate()
            .filter_map(|(i, f)| f.intersect(origin, dir).map(|t| (i, t)))
            .min_by(|a, b| a.1.total_cmp(&b.1))
    }

    fn occluded(&self, target: &Point3, skip: usize) -> bool {
        let to = target - self.device.position;
        let dist = to.norm();
        let dir = to / dist;
        self.facets
            .iter()
            .enumerate()
            .any(|(i, f)| i != skip && f.intersect(&self.device.position, &dir).is_some_and(|t| t < dist * (1.0 - 1e-9)))
    }

    pub fn from_json(text: &str) -> Result<Self, SceneError> {
        let spec: SceneSpec = serde_json::from_str(text)?;
        spec.build()
    }

    pub fn from_file(path: impl AsRef<FsPath>) -> Result<Self, SceneError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

/// JSON description of a scene.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneSpec {
    pub facets: Vec<FacetSpec>,
    #[serde(default)]
    pub device: DevicePose,
    #[serde(default = "default_pl")]
    pub path_loss_exponent: f64,
}

fn default_pl() -> f64 {
    1.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FacetSpec {
    pub vertices: [[f64; 3]; 4],
    pub material: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rcs_sqm: Option<f64>,
}

impl SceneSpec {
    pub fn build(&self) -> Result<Scene, SceneError> {
        let facets = self
            .facets
            .iter()
            .enumerate()
            .map(|(index, f)| {
                let material = Material::by_name(&f.material)?;
                let v = f.vertices.map(|p| Point3::new(p[0], p[1], p[2]));
                PlanarFacet::new(v, material, f.rcs_sqm).map_err(|reason| SceneError::Facet { index, reason })
            })
            .collect::<Result<Vec<_>, _>>()?;
        Scene::new(facets, self.device, self.path_loss_exponent)
    }

    /// Adds an axis-aligned box as its six outward faces.
    pub fn push_box(&mut self, min: [f64; 3], max: [f64; 3], material: &str) {
        let [x0, y0, z0] = min;
        let [x1, y1, z1] = max;
        let faces = [
            [[x0, y0, z0], [x1, y0, z0], [x1, y0, z1], [x0, y0, z1]],
            [[x1, y1, z0], [x0, y1, z0], [x0, y1, z1], [x1, y1, z1]],
            [[x0, y1, z0], [x0, y0, z0], [x0, y0, z1], [x0, y1, z1]],
            [[x1, y0, z0], [x1, y1, z0], [x1, y1, z1], [x1, y0, z1]],
            [[x0, y0, z1], [x1, y0, z1], [x1, y1, z1], [x0, y1, z1]],
            [[x0, y1, z0], [x1, y1, z0], [x1, y0, z0], [x0, y0, z0]],
        ];
        for vertices in faces {
            self.facets.push(FacetSpec { vertices, material: material.to_string(), rcs_sqm: None });
        }
    }
}

/// Ray-casts range and depth maps at `resolution = (rows, cols)` through the
/// cell centers of the camera grid. Misses are `+inf`.
pub fn ground_truth_maps(
    scene: &Scene,
    view: &SceneView,
    resolution: (usize, usize),
    exec: Execution,
) -> Result<(RangeMap, DepthMap), SceneError> {
    scene.validate()?;
    let (rows, cols) = resolution;
    if rows < 2 || cols < 2 {
        return Err(SceneError::Resolution(rows, cols));
    }
    let grid = sensor_grid(view, cols, rows)?;
    let origin = scene.device.position;
    let hits = exec.map_indexed(grid.len(), |m| {
        let d = grid.points[m].normalize();
        let world = scene.device.to_world_dir(&d);
        match scene.cast(&origin, &world) {
            Some((_, t)) => (t, t * d.y),
            None => (f64::INFINITY, f64::INFINITY),
        }
    });
    let range = GridMap::new(rows, cols, hits.iter().map(|h| h.0).collect()).expect("shape");
    let depth = GridMap::new(rows, cols, hits.iter().map(|h| h.1).collect()).expect("shape");
    Ok((range, depth))
}

/// Options for [`trace_backscatter_paths`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TraceConfig {
    /// Target edge length of the facet subdivision cells (m).
    pub cell_size_m: f64,
    /// Seed of the per-path random phases.
    pub seed: u64,
    /// Emit the monostatic specular return of facets facing the device.
    pub specular: bool,
    /// Normal-incidence field reflection coefficient of specular returns,
    /// further scaled by `sqrt(1 - S²)` of the material.
    pub specular_reflectivity: f64,
    /// Emit specular-bounce → diffuse-cell → specular-bounce paths.
    pub two_bounce: bool,
}

impl Default for TraceConfig {
    fn default() -> Self {
        Self { cell_size_m: 0.05, seed: 0, specular: true, specular_reflectivity: 0.4, two_bounce: false }
    }
}

struct PathDraft {
    sigma: f64,
    range: f64,
    dir_device: Point3,
    extra_field_gain: f64,
}

/// Traces monostatic backscatter paths from `scene` toward its device.
///
/// Every diffuse cell path has delay `2ρ/c`, identical departure and arrival
/// directions (device toward the cell center), amplitude `√G` with `G` from
/// [`path_gain`], the carrier phase `e^{-j2πf_cτ}` and a uniformly random
/// phase drawn from a seeded stream.
pub fn trace_backscatter_paths(
    scene: &Scene,
    cfg: &TraceConfig,
    tx_gain_dbi: f64,
    rx_gain_dbi: f64,
    wavelength_m: f64,
    exec: Execution,
) -> Result<PathSet, SceneError> {
    if !(wavelength_m > 0.0) {
        return Err(SceneError::Wavelength(wavelength_m));
    }
    if !(cfg.cell_size_m > 0.0) {
        return Err(SceneError::CellSize(cfg.cell_size_m));
    }
    scene.validate()?;
    let (gt, gr) = (db_to_linear(tx_gain_dbi), db_to_linear(rx_gain_dbi));
    let carrier = SPEED_OF_LIGHT / wavelength_m;
    let pl = scene.path_loss_exponent;
    let device = &scene.device;

    let per_facet: Vec<Vec<PathDraft>> = exec.map_indexed(scene.facets.len(), |fi| {
        let facet = &scene.facets[fi];
        let mut drafts = Vec::new();
        let rcs_density = facet.rcs_per_area();
        if rcs_density > 0.0 {
            for (center, area) in facet.cells(cfg.cell_size_m) {
                if let Some(d) = visible_cell(scene, fi, &center) {
                    let sigma = rcs_density * area * d.cos_inc * d.cos_inc;
                    drafts.push(PathDraft { sigma, range: d.range, dir_device: d.dir_device, extra_field_gain: 1.0 });
                }
            }
        }
        if cfg.specular {
            if let Some(p) = specular_path(scene, fi, cfg.specular_reflectivity, wavelength_m) {
                drafts.push(p);
            }
        }
        if cfg.two_bounce {
            drafts.extend(two_bounce_paths(scene, fi, cfg));
        }
        drafts
    });

    let mut paths = Vec::new();
    for (fi, drafts) in per_facet.into_iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(fi as u64);
        for d in drafts {
            // Keep the stream position tied to the draft order, not to
            // which drafts survive the amplitude filter.
            let random_phase = rng.random::<f64>() * TAU;
            if !(d.sigma > 0.0) || !(d.extra_field_gain > 0.0) {
                continue;
            }
            let g = path_gain(gt, gr, wavelength_m, d.sigma, d.range, pl).expect("range > 0");
            let delay = 2.0 * d.range / SPEED_OF_LIGHT;
            let carrier_phase = -TAU * carrier * delay;
            let amplitude = Complex64::from_polar(g.sqrt() * d.extra_field_gain, carrier_phase + random_phase);
            paths.push(Path::monostatic(amplitude, delay, &d.dir_device));
        }
    }
    let _ = device;
    Ok(PathSet { paths })
}

struct Visible {
    range: f64,
    dir_device: Point3,
    cos_inc: f64,
}

fn visible_cell(scene: &Scene, facet: usize, point: &Point3) -> Option<Visible> {
    let device = &scene.device;
    let local = device.to_device(point);
    if local.y <= 0.0 {
        return None;
    }
    let range = local.norm();
    let to_dev = (device.position - point) / range;
    let cos_inc = scene.facets[facet].normal().dot(&to_dev).abs();
    if cos_inc <= 0.0 || scene.occluded(point, facet) {
        return None;
    }
    Some(Visible { range, dir_device: local / range, cos_inc })
}

fn specular_path(scene: &Scene, fi: usize, reflectivity: f64, wavelength: f64) -> Option<PathDraft> {
    let facet = &scene.facets[fi];
    let n = facet.normal();
    let dev = scene.device.position;
    let foot = dev - n * n.dot(&(dev - facet.vertices[0]));
    let range = (foot - dev).norm();
    if !(range > 0.0) || !facet.contains(&foot) {
        return None;
    }
    let vis = visible_cell(scene, fi, &foot)?;
    let s = facet.material.scatter_ratio;
    let gamma = reflectivity * (1.0 - s * s).max(0.0).sqrt();
    // Image-theory return of an extended plate, capped by the flat-plate
    // value when the facet is smaller than the first Fresnel zone.
    let area = facet.area();
    let sigma = (PI * range * range).min(4.0 * PI * area * area / (wavelength * wavelength));
    Some(PathDraft { sigma: sigma * gamma * gamma, range, dir_device: vis.dir_device, extra_field_gain: 1.0 })
}

/// Device → specular bounce on facet `mirror` → diffuse cell on another
/// facet → same route back. Uses the device image across the mirror plane.
fn two_bounce_paths(scene: &Scene, mirror: usize, cfg: &TraceConfig) -> Vec<PathDraft> {
    let m = &scene.facets[mirror];
    let n = m.normal();
    let dev = scene.device.position;
    let side = n.dot(&(dev - m.vertices[0]));
    let image = dev - n * (2.0 * side);
    let s = m.material.scatter_ratio;
    let gamma = cfg.specular_reflectivity * (1.0 - s * s).max(0.0).sqrt();
    let mut out = Vec::new();
    if gamma <= 0.0 || side == 0.0 {
        return out;
    }
    for (ti, target) in scene.facets.iter().enumerate() {
        if ti == mirror || target.rcs_per_area() <= 0.0 {
            continue;
        }
        for (center, area) in target.cells(cfg.cell_size_m) {
            if n.dot(&(center - m.vertices[0])) * side <= 0.0 {
                continue;
            }
            let seg = center - image;
            let length = seg.norm();
            let dir = seg / length;
            let Some(t) = m.intersect(&image, &dir) else { continue };
            if t >= length {
                continue;
            }
            let bounce = image + dir * t;
            let local = scene.device.to_device(&bounce);
            if local.y <= 0.0 {
                continue;
            }
            let cos_inc = target.normal().dot(&dir).abs();
            let sigma = target.rcs_per_area() * area * cos_inc * cos_inc;
            out.push(PathDraft {
                sigma,
                range: length,
                dir_device: local.normalize(),
                extra_field_gain: gamma * gamma,
            });
        }
    }
    out
}

impl PathSet {
    /// CSV dump: amplitude, delay and departure/arrival angles per path.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "index,amp_re,amp_im,delay_s,aod_theta_z,aod_theta_x,aoa_theta_z,aoa_theta_x")?;
        for (i, p) in self.paths.iter().enumerate() {
            writeln!(
                w,
                "{i},{},{},{},{},{},{},{}",
                p.amplitude.re,
                p.amplitude.im,
                p.delay_s,
                p.aod.theta_z,
                p.aod.theta_x,
                p.aoa.theta_z,
                p.aoa.theta_x
            )?;
        }
        Ok(())
    }
}
