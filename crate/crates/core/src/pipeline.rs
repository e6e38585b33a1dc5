//! End-to-end orchestration: scenario configs, built-in scenes, sensing
//! sweeps, estimation, artifacts and parameter sweeps.
//!
//! A run designs the codebook, traces the scene, synthesizes one record per
//! beam, extracts candidate delays with SIC, refines every candidate with the
//! massive correlator, selects one delay per beam by joint processing, and
//! builds range/depth maps at codebook and output resolution.

use std::fmt;
use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path as FsPath, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::array::{design_codebook, Codebook, SceneView, SlrControl, UpaConfig};
use crate::channel::{BeamTaps, RadioConfig, TapPlan};
use crate::consts::{REFERENCE_TEMPERATURE_K, SPEED_OF_LIGHT};
use crate::estimator::{
    build_bank, construct_maps, delay_to_range, fractional_delay, interpolate, joint_processing, sic_with_policy,
    CorrelatorBank, DelaySet, DelayWindow, Interpolation, JointSelection, SicContext, ThresholdPolicy,
};
use crate::exec::Execution;
use crate::map::{GridMap, MapError};
use crate::metrics::{map_errors, ErrorReport};
use crate::scene::{ground_truth_maps, trace_backscatter_paths, FacetSpec, Scene, SceneSpec, TraceConfig};
use crate::waveform::{make_preamble, synthesize_rx, NoiseSpec, Preamble, PreambleKind, SensingRecord};
use crate::Complex64;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("configuration parse error: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("{stage} failed: {message}")]
    Stage { stage: Stage, message: String },
    #[error(transparent)]
    Io(#[from] io::Error),
}

impl PipelineError {
    pub fn is_config(&self) -> bool {
        matches!(self, PipelineError::Config(_) | PipelineError::Parse(_))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stage {
    Scene,
    Codebook,
    Channel,
    Sensing,
    Sic,
    JointProcessing,
    Maps,
    GroundTruth,
    Metrics,
    Output,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Stage::Scene => "scene",
            Stage::Codebook => "codebook",
            Stage::Channel => "channel",
            Stage::Sensing => "sensing",
            Stage::Sic => "sic",
            Stage::JointProcessing => "joint-processing",
            Stage::Maps => "maps",
            Stage::GroundTruth => "ground-truth",
            Stage::Metrics => "metrics",
            Stage::Output => "output",
        };
        f.write_str(s)
    }
}

fn stage<E: fmt::Display>(stage: Stage) -> impl FnOnce(E) -> PipelineError {
    move |e| PipelineError::Stage { stage, message: e.to_string() }
}

/// Where the scene comes from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SceneSource {
    /// JSON scene description on disk.
    File { path: PathBuf },
    Inline { scene: SceneSpec },
    /// A single wall perpendicular to boresight, wide enough to fill the view.
    OneWall { distance_m: f64, material: String },
    /// Back wall filling the view and a front wall covering its left half.
    TwoWalls { front_m: f64, back_m: f64, material: String },
    /// 5 m x 5 m concrete room with two wooden pillars 2 m ahead.
    PillarRoom,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArraySettings {
    pub n_h: usize,
    pub n_v: usize,
    /// Element spacing in wavelengths.
    pub spacing_wavelengths: f64,
    pub phase_bits: u32,
}

impl Default for ArraySettings {
    fn default() -> Self {
        Self { n_h: 16, n_v: 16, spacing_wavelengths: 0.5, phase_bits: 0 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PreambleSettings {
    pub kind: PreambleKind,
    pub length: usize,
}

impl Default for PreambleSettings {
    fn default() -> Self {
        Self { kind: PreambleKind::Golay80211ad, length: 3328 }
    }
}

/// Complete description of one simulated run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    pub scene: SceneSource,
    #[serde(default)]
    pub array: ArraySettings,
    #[serde(default)]
    pub view: SceneView,
    #[serde(default)]
    pub slr: Option<SlrControl>,
    #[serde(default)]
    pub radio: RadioConfig,
    #[serde(default)]
    pub trace: TraceConfig,
    #[serde(default)]
    pub preamble: PreambleSettings,
    #[serde(default)]
    pub threshold: ThresholdPolicy,
    #[serde(default = "default_ratio")]
    pub f_est_ratio: usize,
    #[serde(default)]
    pub interpolation: Interpolation,
    /// Output map size `[rows, cols]`.
    #[serde(default = "default_resolution")]
    pub output_resolution: [usize; 2],
    #[serde(default)]
    pub seed: u64,
    /// Tap count `L_d`; derived from the longest path when absent.
    #[serde(default)]
    pub tap_count: Option<usize>,
    #[serde(default = "default_iterations")]
    pub sic_max_iterations: usize,
}

fn default_ratio() -> usize {
    100
}

fn default_resolution() -> [usize; 2] {
    [1080, 1920]
}

fn default_iterations() -> usize {
    crate::estimator::sic::DEFAULT_MAX_ITERATIONS
}

impl ScenarioConfig {
    pub fn new(name: &str, scene: SceneSource) -> Self {
        Self {
            name: name.to_string(),
            scene,
            array: ArraySettings::default(),
            view: SceneView::default(),
            slr: None,
            radio: RadioConfig::default(),
            trace: TraceConfig::default(),
            preamble: PreambleSettings::default(),
            threshold: ThresholdPolicy::default(),
            f_est_ratio: default_ratio(),
            interpolation: Interpolation::default(),
            output_resolution: default_resolution(),
            seed: 0,
            tap_count: None,
            sic_max_iterations: default_iterations(),
        }
    }

    pub fn from_json(text: &str) -> Result<Self, PipelineError> {
        let cfg: Self = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: impl AsRef<FsPath>) -> Result<Self, PipelineError> {
        let text = fs::read_to_string(path.as_ref())
            .map_err(|e| PipelineError::Config(format!("{}: {e}", path.as_ref().display())))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// SHA-256 of the compact JSON form.
    pub fn hash(&self) -> String {
        let text = serde_json::to_string(self).expect("config serializes");
        hex::encode(Sha256::digest(text.as_bytes()))
    }

    pub fn upa(&self) -> UpaConfig {
        let wavelength = self.radio.wavelength_m();
        UpaConfig {
            n_h: self.array.n_h,
            n_v: self.array.n_v,
            spacing_m: self.array.spacing_wavelengths * wavelength,
            wavelength_m: wavelength,
            phase_bits: self.array.phase_bits,
        }
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        let cfg = |e: &dyn fmt::Display| PipelineError::Config(e.to_string());
        self.radio.validate().map_err(|e| cfg(&e))?;
        self.upa().validate().map_err(|e| cfg(&e))?;
        self.view.validate().map_err(|e| cfg(&e))?;
        self.threshold.validate().map_err(|e| cfg(&e))?;
        if self.f_est_ratio < 2 || !self.f_est_ratio.is_multiple_of(2) {
            return Err(PipelineError::Config(format!("f_est_ratio must be an even integer >= 2, got {}", self.f_est_ratio)));
        }
        if self.output_resolution[0] < 2 || self.output_resolution[1] < 2 {
            return Err(PipelineError::Config("output_resolution must be at least 2x2".into()));
        }
        if self.preamble.length == 0 {
            return Err(PipelineError::Config("preamble length must be positive".into()));
        }
        if self.preamble.kind == PreambleKind::Golay80211ad && self.preamble.length != crate::waveform::GOLAY_PREAMBLE_LEN {
            return Err(PipelineError::Config(format!(
                "golay_80211ad preambles have {} symbols, got {}; use kind \"pn\" for other lengths",
                crate::waveform::GOLAY_PREAMBLE_LEN,
                self.preamble.length
            )));
        }
        if self.sic_max_iterations == 0 {
            return Err(PipelineError::Config("sic_max_iterations must be positive".into()));
        }
        if !(self.trace.cell_size_m > 0.0) {
            return Err(PipelineError::Config("trace.cell_size_m must be positive".into()));
        }
        match &self.scene {
            SceneSource::OneWall { distance_m, .. } if !(*distance_m > 0.0) => {
                Err(PipelineError::Config("one_wall distance must be positive".into()))
            }
            SceneSource::TwoWalls { front_m, back_m, .. } if !(*front_m > 0.0 && back_m > front_m) => {
                Err(PipelineError::Config("two_walls needs 0 < front_m < back_m".into()))
            }
            _ => Ok(()),
        }
    }

    /// Sets one key by dotted path, e.g. `radio.tx_power_dbm=20` or
    /// `threshold={"kind":"noise_floor","gamma":4}`. The value is parsed as
    /// JSON and falls back to a plain string.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), PipelineError> {
        let mut tree = serde_json::to_value(&*self)?;
        let parsed: serde_json::Value =
            serde_json::from_str(value).unwrap_or_else(|_| serde_json::Value::String(value.to_string()));
        let mut node = &mut tree;
        let parts: Vec<&str> = key.split('.').collect();
        for (i, part) in parts.iter().enumerate() {
            let obj = node
                .as_object_mut()
                .ok_or_else(|| PipelineError::Config(format!("{key}: {part} is not inside an object")))?;
            if i + 1 == parts.len() {
                if !obj.contains_key(*part) {
                    return Err(PipelineError::Config(format!("unknown key {key}")));
                }
                obj.insert(part.to_string(), parsed.clone());
                break;
            }
            let next = obj.get_mut(*part).ok_or_else(|| PipelineError::Config(format!("unknown key {key}")))?;
            if next.is_null() {
                *next = serde_json::Value::Object(Default::default());
            }
            node = next;
        }
        let updated: ScenarioConfig =
            serde_json::from_value(tree).map_err(|e| PipelineError::Config(format!("{key}={value}: {e}")))?;
        updated.validate()?;
        *self = updated;
        Ok(())
    }

    pub fn build_scene(&self) -> Result<Scene, PipelineError> {
        let spec = match &self.scene {
            SceneSource::File { path } => {
                return Scene::from_file(path).map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))
            }
            SceneSource::Inline { scene } => scene.clone(),
            SceneSource::OneWall { distance_m, material } => one_wall_spec(*distance_m, material, &self.view),
            SceneSource::TwoWalls { front_m, back_m, material } => {
                two_walls_spec(*front_m, *back_m, material, &self.view)
            }
            SceneSource::PillarRoom => pillar_room_spec(),
        };
        spec.build().map_err(|e| PipelineError::Config(e.to_string()))
    }
}

fn wall(y: f64, x0: f64, x1: f64, z0: f64, z1: f64, material: &str) -> FacetSpec {
    FacetSpec { vertices: [[x0, y, z0], [x1, y, z0], [x1, y, z1], [x0, y, z1]], material: material.to_string(), rcs_sqm: None }
}

/// Half extents of the view footprint on a plane at depth `y`, padded so
/// every beam mainlobe lands on the wall.
fn view_half_extents(view: &SceneView, y: f64) -> (f64, f64) {
    let tan_h = (view.fov_rad / 2.0).tan();
    let tan_v = tan_h / view.aspect_ratio;
    (1.3 * y * tan_h + 0.5, 1.3 * y * tan_v + 0.5)
}

pub fn one_wall_spec(distance_m: f64, material: &str, view: &SceneView) -> SceneSpec {
    let (hw, hh) = view_half_extents(view, distance_m);
    SceneSpec {
        facets: vec![wall(distance_m, -hw, hw, -hh, hh, material)],
        device: Default::default(),
        path_loss_exponent: 1.0,
    }
}

pub fn two_walls_spec(front_m: f64, back_m: f64, material: &str, view: &SceneView) -> SceneSpec {
    let (hw, hh) = view_half_extents(view, back_m);
    SceneSpec {
        facets: vec![wall(back_m, -hw, hw, -hh, hh, material), wall(front_m, -hw, 0.0, -hh, hh, material)],
        device: Default::default(),
        path_loss_exponent: 1.0,
    }
}

/// Device at the middle of the door wall, 1.5 m above a concrete floor,
/// looking across the room; ceiling 3 m high.
pub fn pillar_room_spec() -> SceneSpec {
    let (w, d, h) = (2.5, 5.0, 3.0);
    let z0 = -1.5;
    let z1 = z0 + h;
    let mut spec = SceneSpec { facets: Vec::new(), device: Default::default(), path_loss_exponent: 1.0 };
    let f = |v: [[f64; 3]; 4], m: &str| FacetSpec { vertices: v, material: m.to_string(), rcs_sqm: None };
    // Inward-facing room surfaces; the device sits on the y = 0 wall.
    spec.facets.push(f([[-w, d, z0], [w, d, z0], [w, d, z1], [-w, d, z1]], "concrete"));
    spec.facets.push(f([[-w, 0.0, z0], [-w, d, z0], [-w, d, z1], [-w, 0.0, z1]], "concrete"));
    spec.facets.push(f([[w, d, z0], [w, 0.0, z0], [w, 0.0, z1], [w, d, z1]], "concrete"));
    spec.facets.push(f([[-w, 0.0, z0], [w, 0.0, z0], [w, d, z0], [-w, d, z0]], "concrete"));
    spec.facets.push(f([[-w, d, z1], [w, d, z1], [w, 0.0, z1], [-w, 0.0, z1]], "ceilingboard"));
    let half = 0.15;
    for xc in [-0.9, 0.9] {
        spec.push_box([xc - half, 2.0, z0], [xc + half, 2.0 + 2.0 * half, z1], "wood");
    }
    spec
}

/// The shipped scenarios with their default parameters.
pub fn builtin_scenarios() -> Vec<ScenarioConfig> {
    let mut one = ScenarioConfig::new("one_wall", SceneSource::OneWall { distance_m: 7.0, material: "concrete".into() });
    one.trace.cell_size_m = 7.0 / 140.0;
    let mut two = ScenarioConfig::new(
        "two_walls",
        SceneSource::TwoWalls { front_m: 1.0, back_m: 2.0, material: "concrete".into() },
    );
    two.trace.cell_size_m = 0.02;
    let mut room = ScenarioConfig::new("pillar_room", SceneSource::PillarRoom);
    room.view.os_h = 4;
    room.view.os_v = 4;
    room.trace.cell_size_m = 0.04;
    vec![one, two, room]
}

pub fn builtin_scenario(name: &str) -> Option<ScenarioConfig> {
    builtin_scenarios().into_iter().find(|c| c.name == name)
}

/// One-wall scenario at `distance_m`, with the cell size scaled to keep the
/// cell count fixed.
pub fn one_wall_at(distance_m: f64) -> ScenarioConfig {
    let mut c = builtin_scenario("one_wall").expect("built in");
    c.scene = SceneSource::OneWall { distance_m, material: "concrete".into() };
    c.trace.cell_size_m = distance_m / 140.0;
    c
}

/// Estimation state shared by all beams of one run.
pub struct EstimationContext {
    pub preamble: Preamble,
    pub sic: SicContext,
    pub bank: CorrelatorBank,
    pub policy: ThresholdPolicy,
    pub symbol_time_s: f64,
    /// Post-combining per-sample noise energy used by noise-floor thresholds.
    pub noise_power: f64,
}

impl EstimationContext {
    pub fn new(
        config: &ScenarioConfig,
        preamble: Preamble,
        tap_count: usize,
        combiner_norm_sqr: f64,
        exec: Execution,
    ) -> Result<Self, PipelineError> {
        let window = DelayWindow::full_overlap(preamble.len(), preamble.len() + tap_count).map_err(stage(Stage::Sic))?;
        let mut sic = SicContext::new(&preamble.symbols, window);
        sic.max_iterations = config.sic_max_iterations;
        let pulse = config.radio.pulse().map_err(stage(Stage::Sic))?;
        let bank = build_bank(&preamble.symbols, config.f_est_ratio, &pulse, exec).map_err(stage(Stage::Sic))?;
        Ok(Self {
            preamble,
            sic,
            bank,
            policy: config.threshold,
            symbol_time_s: config.radio.symbol_time_s(),
            noise_power: config.radio.noise_energy(REFERENCE_TEMPERATURE_K) * combiner_norm_sqr,
        })
    }
}

/// SIC candidates of one beam with the fractional delay of each candidate.
#[derive(Clone, Debug, PartialEq)]
pub struct BeamEstimate {
    pub set: DelaySet,
    /// Massive-correlator fractional delay (samples) anchored at each
    /// candidate, aligned with `set.delays`.
    pub fractions: Vec<f64>,
}

pub fn estimate_beam(record: &[Complex64], ctx: &EstimationContext) -> Result<BeamEstimate, PipelineError> {
    let set = sic_with_policy(record, &ctx.preamble.symbols, &ctx.policy, ctx.noise_power, &ctx.sic)
        .map_err(stage(Stage::Sic))?;
    let fractions = set
        .delays
        .iter()
        .map(|&q| fractional_delay(record, q, &ctx.bank))
        .collect::<Result<Vec<_>, _>>()
        .map_err(stage(Stage::Sic))?;
    Ok(BeamEstimate { set, fractions })
}

/// Maps at codebook resolution and the per-beam bookkeeping behind them.
#[derive(Clone, Debug, PartialEq)]
pub struct Estimates {
    pub beams: Vec<BeamEstimate>,
    pub selection: JointSelection,
    pub coarse_range_m: Vec<f64>,
    pub refinement_m: Vec<f64>,
    pub range: GridMap,
    pub depth: GridMap,
}

impl Estimates {
    pub fn truncated_beams(&self) -> usize {
        self.beams.iter().filter(|b| b.set.truncated).count()
    }
}

/// SIC, refinement, joint processing and map construction on given records.
pub fn estimate_from_records(
    records: &[SensingRecord],
    codebook: &Codebook,
    ctx: &EstimationContext,
    exec: Execution,
) -> Result<Estimates, PipelineError> {
    if records.len() != codebook.len() {
        return Err(PipelineError::Stage {
            stage: Stage::Sic,
            message: format!("{} records for a codebook of {} beams", records.len(), codebook.len()),
        });
    }
    for (m, r) in records.iter().enumerate() {
        if r.beam_index != m || r.preamble_len != ctx.preamble.len() || r.samples.len() != ctx.sic.window.last + r.preamble_len {
            return Err(PipelineError::Stage {
                stage: Stage::Sic,
                message: format!("record {m} does not match the configured beam order, preamble or tap count"),
            });
        }
    }
    let beams = exec.try_map_indexed(records.len(), |m| estimate_beam(&records[m].samples, ctx))?;
    assemble(beams, codebook, ctx)
}

fn assemble(beams: Vec<BeamEstimate>, codebook: &Codebook, ctx: &EstimationContext) -> Result<Estimates, PipelineError> {
    let (nh, nv) = (codebook.n_bar_h(), codebook.n_bar_v());
    let sets: Vec<DelaySet> = beams.iter().map(|b| b.set.clone()).collect();
    let selection = joint_processing(&sets, nh, nv).map_err(stage(Stage::JointProcessing))?;
    let ts = ctx.symbol_time_s;
    let mut coarse = Vec::with_capacity(beams.len());
    let mut refine = Vec::with_capacity(beams.len());
    let valid: Vec<usize> = (0..beams.len()).filter(|&m| !selection.filled[m]).collect();
    for (m, &q) in selection.delays.iter().enumerate() {
        let src = if selection.filled[m] { crate::estimator::joint::nearest_valid(&valid, m) } else { m };
        let b = &beams[src];
        let k = b.set.delays.iter().position(|&d| d == q).expect("selected delay is a candidate");
        coarse.push(delay_to_range(q as f64, ts));
        refine.push(delay_to_range(b.fractions[k], ts));
    }
    let (range, depth) = construct_maps(&coarse, &refine, &codebook.angles, nh, nv).map_err(stage(Stage::Maps))?;
    Ok(Estimates { beams, selection, coarse_range_m: coarse, refinement_m: refine, range, depth })
}

/// Errors of one estimate against ground truth at codebook and output
/// resolution.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorSummary {
    pub range_codebook: ErrorReport,
    pub depth_codebook: ErrorReport,
    pub range_output: ErrorReport,
    pub depth_output: ErrorReport,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunArtifacts {
    pub config: ScenarioConfig,
    pub config_hash: String,
    pub codebook_size: (usize, usize),
    pub path_count: usize,
    pub tap_count: usize,
    /// Modeled sweep duration `M (N^p + L_d) T_S`.
    pub air_time_s: f64,
    pub estimates: Estimates,
    pub range_upscaled: GridMap,
    pub depth_upscaled: GridMap,
    pub truth_range_codebook: GridMap,
    pub truth_depth_codebook: GridMap,
    pub truth_range_output: GridMap,
    pub truth_depth_output: GridMap,
    pub errors: ErrorSummary,
    pub records: Option<Vec<SensingRecord>>,
    /// Wall-clock seconds per stage.
    pub timing: Vec<(String, f64)>,
}

#[derive(Clone, Copy, Debug, Default)]
pub struct RunOptions {
    pub exec: Execution,
    pub keep_records: bool,
}

struct Timer {
    start: Instant,
    laps: Vec<(String, f64)>,
}

impl Timer {
    fn new() -> Self {
        Self { start: Instant::now(), laps: Vec::new() }
    }

    fn lap(&mut self, name: &str) {
        let now = Instant::now();
        self.laps.push((name.to_string(), (now - self.start).as_secs_f64()));
        self.start = now;
    }
}

/// Designed codebook, traced paths and preamble of a config.
pub struct Prepared {
    pub scene: Scene,
    pub codebook: Codebook,
    pub paths: crate::channel::PathSet,
    pub preamble: Preamble,
    pub tap_count: usize,
}

pub fn prepare(config: &ScenarioConfig, exec: Execution) -> Result<Prepared, PipelineError> {
    config.validate()?;
    let scene = config.build_scene()?;
    let codebook = design_codebook(&config.upa(), &config.view, config.slr, exec).map_err(stage(Stage::Codebook))?;
    let paths = trace_backscatter_paths(
        &scene,
        &config.trace,
        config.radio.tx_gain_dbi,
        config.radio.rx_gain_dbi,
        config.radio.wavelength_m(),
        exec,
    )
    .map_err(stage(Stage::Scene))?;
    let tap_count = config.tap_count.unwrap_or_else(|| paths.default_tap_count(config.radio.symbol_time_s()));
    let preamble = make_preamble(config.preamble.kind, config.preamble.length, config.seed).map_err(stage(Stage::Sensing))?;
    Ok(Prepared { scene, codebook, paths, preamble, tap_count })
}

/// Runs every stage of the framework for `config`.
pub fn run_scenario(config: &ScenarioConfig, opts: RunOptions) -> Result<RunArtifacts, PipelineError> {
    let exec = opts.exec;
    let mut timer = Timer::new();
    let prep = prepare(config, exec)?;
    timer.lap("prepare");
    let codebook = &prep.codebook;
    let w_norm = codebook.beams.first().map(|b| b.norm_sqr()).unwrap_or(0.0);
    let ctx = EstimationContext::new(config, prep.preamble.clone(), prep.tap_count, w_norm, exec)?;
    timer.lap("estimator-setup");

    let es = config.radio.symbol_energy();
    let noise_energy = config.radio.noise_energy(REFERENCE_TEMPERATURE_K);
    let upa = config.upa();
    let plan = TapPlan::new(&prep.paths, &upa, &config.radio, prep.tap_count).map_err(stage(Stage::Channel))?;
    let keep = opts.keep_records;
    let per_beam = exec.try_map_indexed(codebook.len(), |m| -> Result<_, PipelineError> {
        let (f, w) = codebook.pair(m);
        let taps = BeamTaps { taps: plan.taps(f, w, &upa).map_err(stage(Stage::Channel))?, beam_index: m };
        let noise = NoiseSpec { variance: noise_energy, combiner_norm_sqr: w.norm_sqr() };
        let record = synthesize_rx(&taps, &ctx.preamble, es, noise, config.seed).map_err(stage(Stage::Sensing))?;
        let est = estimate_beam(&record.samples, &ctx)?;
        Ok((est, keep.then_some(record)))
    })?;
    timer.lap("sense-and-sic");
    let mut beams = Vec::with_capacity(per_beam.len());
    let mut records = keep.then(Vec::new);
    for (est, rec) in per_beam {
        beams.push(est);
        if let (Some(all), Some(r)) = (records.as_mut(), rec) {
            all.push(r);
        }
    }
    let estimates = assemble(beams, codebook, &ctx)?;
    timer.lap("joint-processing");
    finish(config, prep, estimates, records, exec, timer)
}

/// Runs the estimation stages on previously recorded sensing data.
pub fn run_from_records(
    config: &ScenarioConfig,
    records: &[SensingRecord],
    exec: Execution,
) -> Result<RunArtifacts, PipelineError> {
    let mut timer = Timer::new();
    let prep = prepare(config, exec)?;
    let w_norm = prep.codebook.beams.first().map(|b| b.norm_sqr()).unwrap_or(0.0);
    let tap_count = records.first().map(|r| r.tap_count()).unwrap_or(prep.tap_count);
    let ctx = EstimationContext::new(config, prep.preamble.clone(), tap_count, w_norm, exec)?;
    timer.lap("prepare");
    let estimates = estimate_from_records(records, &prep.codebook, &ctx, exec)?;
    timer.lap("sic-and-joint-processing");
    let prep = Prepared { tap_count, ..prep };
    finish(config, prep, estimates, None, exec, timer)
}

fn finish(
    config: &ScenarioConfig,
    prep: Prepared,
    estimates: Estimates,
    records: Option<Vec<SensingRecord>>,
    exec: Execution,
    mut timer: Timer,
) -> Result<RunArtifacts, PipelineError> {
    let target = (config.output_resolution[0], config.output_resolution[1]);
    let range_upscaled = interpolate(&estimates.range, config.interpolation, target, exec).map_err(stage(Stage::Maps))?;
    let depth_upscaled = interpolate(&estimates.depth, config.interpolation, target, exec).map_err(stage(Stage::Maps))?;
    timer.lap("interpolation");
    let cb = &prep.codebook;
    let (truth_range_codebook, truth_depth_codebook) =
        ground_truth_maps(&prep.scene, &config.view, (cb.n_bar_v(), cb.n_bar_h()), exec).map_err(stage(Stage::GroundTruth))?;
    let (truth_range_output, truth_depth_output) =
        ground_truth_maps(&prep.scene, &config.view, target, exec).map_err(stage(Stage::GroundTruth))?;
    timer.lap("ground-truth");
    let m = stage(Stage::Metrics);
    let errors = ErrorSummary {
        range_codebook: map_errors(&estimates.range, &truth_range_codebook).map_err(m)?,
        depth_codebook: map_errors(&estimates.depth, &truth_depth_codebook).map_err(stage(Stage::Metrics))?,
        range_output: map_errors(&range_upscaled, &truth_range_output).map_err(stage(Stage::Metrics))?,
        depth_output: map_errors(&depth_upscaled, &truth_depth_output).map_err(stage(Stage::Metrics))?,
    };
    timer.lap("metrics");
    let air_time_s = cb.len() as f64 * (prep.preamble.len() + prep.tap_count) as f64 * config.radio.symbol_time_s();
    Ok(RunArtifacts {
        config: config.clone(),
        config_hash: config.hash(),
        codebook_size: (cb.n_bar_v(), cb.n_bar_h()),
        path_count: prep.paths.len(),
        tap_count: prep.tap_count,
        air_time_s,
        estimates,
        range_upscaled,
        depth_upscaled,
        truth_range_codebook,
        truth_depth_codebook,
        truth_range_output,
        truth_depth_output,
        errors,
        records,
        timing: timer.laps,
    })
}

fn create(dir: &FsPath, name: &str) -> Result<BufWriter<File>, PipelineError> {
    Ok(BufWriter::new(File::create(dir.join(name))?))
}

fn map_out(e: MapError) -> PipelineError {
    PipelineError::Stage { stage: Stage::Output, message: e.to_string() }
}

impl RunArtifacts {
    /// Writes maps (PGM and CSV), error and delay-set reports, the config
    /// and a summary to `dir`. Stage timings go to `timing.json`, the only
    /// file that differs between identical runs.
    pub fn write(&self, dir: impl AsRef<FsPath>) -> Result<(), PipelineError> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir)?;
        let maps: [(&str, &GridMap); 8] = [
            ("range_estimate", &self.estimates.range),
            ("depth_estimate", &self.estimates.depth),
            ("range_truth", &self.truth_range_codebook),
            ("depth_truth", &self.truth_depth_codebook),
            ("range_estimate_upscaled", &self.range_upscaled),
            ("depth_estimate_upscaled", &self.depth_upscaled),
            ("range_truth_upscaled", &self.truth_range_output),
            ("depth_truth_upscaled", &self.truth_depth_output),
        ];
        for (name, map) in maps {
            map.write_pgm(create(dir, &format!("{name}.pgm"))?).map_err(map_out)?;
            if !name.ends_with("upscaled") {
                map.write_csv(create(dir, &format!("{name}.csv"))?).map_err(map_out)?;
            }
        }
        let mut w = create(dir, "errors.csv")?;
        writeln!(w, "{}", ErrorReport::CSV_HEADER)?;
        let e = &self.errors;
        for (tag, rep) in [
            ("range_codebook", e.range_codebook),
            ("depth_codebook", e.depth_codebook),
            ("range_output", e.range_output),
            ("depth_output", e.depth_output),
        ] {
            rep.write_csv_row(&mut w, &format!("{}:{tag}", self.config.name), &self.config_hash)?;
        }
        w.flush()?;
        self.write_delay_sets(create(dir, "delay_sets.csv")?)?;
        fs::write(dir.join("config.json"), self.config.to_json())?;
        fs::write(dir.join("summary.json"), serde_json::to_string_pretty(&self.summary())?)?;
        let timing: serde_json::Map<String, serde_json::Value> =
            self.timing.iter().map(|(k, v)| (k.clone(), serde_json::json!(v))).collect();
        fs::write(dir.join("timing.json"), serde_json::to_string_pretty(&timing)?)?;
        if let Some(records) = &self.records {
            crate::waveform::write_records(create(dir, "records.bin")?, records)
                .map_err(stage(Stage::Output))?;
        }
        Ok(())
    }

    /// One row per beam: grid position, candidates, selection, refinement.
    pub fn write_delay_sets<W: Write>(&self, mut w: W) -> Result<(), PipelineError> {
        writeln!(w, "beam,h,v,candidates,selected,refinement_m,filled,truncated,config_hash")?;
        let nh = self.codebook_size.1;
        let est = &self.estimates;
        for (m, b) in est.beams.iter().enumerate() {
            let cands: Vec<String> = b.set.delays.iter().map(|d| d.to_string()).collect();
            writeln!(
                w,
                "{m},{},{},{},{},{},{},{},{}",
                m % nh,
                m / nh,
                cands.join(";"),
                est.selection.delays[m],
                est.refinement_m[m],
                est.selection.filled[m],
                b.set.truncated,
                self.config_hash
            )?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn summary(&self) -> serde_json::Value {
        serde_json::json!({
            "scenario": self.config.name,
            "config_hash": self.config_hash,
            "codebook_rows": self.codebook_size.0,
            "codebook_cols": self.codebook_size.1,
            "paths": self.path_count,
            "tap_count": self.tap_count,
            "air_time_s": self.air_time_s,
            "filled_beams": self.estimates.selection.filled_count(),
            "truncated_beams": self.estimates.truncated_beams(),
            "errors": self.errors,
        })
    }
}

/// Parameter varied by [`sweep`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParameter {
    TxPower,
    PreambleLen,
    Distance,
    UpaSize,
    OsFactor,
}

impl std::str::FromStr for SweepParameter {
    type Err = PipelineError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        serde_json::from_value(serde_json::Value::String(s.to_string()))
            .map_err(|_| PipelineError::Config(format!("unknown sweep parameter {s:?}")))
    }
}

impl SweepParameter {
    pub fn apply(&self, config: &mut ScenarioConfig, value: f64) -> Result<(), PipelineError> {
        let count = || -> Result<usize, PipelineError> {
            if value >= 1.0 && value.fract() == 0.0 {
                Ok(value as usize)
            } else {
                Err(PipelineError::Config(format!("{self:?} needs a positive integer, got {value}")))
            }
        };
        match self {
            SweepParameter::TxPower => config.radio.tx_power_dbm = value,
            SweepParameter::PreambleLen => config.preamble.length = count()?,
            SweepParameter::Distance => match &mut config.scene {
                SceneSource::OneWall { distance_m, .. } => {
                    *distance_m = value;
                    config.trace.cell_size_m = value / 140.0;
                }
                _ => return Err(PipelineError::Config("distance sweeps need a one_wall scene".into())),
            },
            SweepParameter::UpaSize => {
                config.array.n_h = count()?;
                config.array.n_v = count()?;
            }
            SweepParameter::OsFactor => {
                config.view.os_h = count()?;
                config.view.os_v = count()?;
            }
        }
        config.validate()
    }
}

/// One row of a sweep report.
#[derive(Clone, Debug, PartialEq)]
pub struct SweepRow {
    pub value: f64,
    pub config_hash: String,
    pub errors: ErrorSummary,
}

pub const SWEEP_CSV_HEADER: &str = "parameter,value,range_mae_m,range_rmse_m,depth_mae_m,depth_rmse_m,\
depth_output_mae_m,depth_output_rmse_m,pixels,config_hash";

/// Runs `config` once per value of `parameter`.
pub fn sweep(
    config: &ScenarioConfig,
    parameter: SweepParameter,
    values: &[f64],
    opts: RunOptions,
) -> Result<Vec<SweepRow>, PipelineError> {
    if values.is_empty() {
        return Err(PipelineError::Config("sweep needs at least one value".into()));
    }
    values
        .iter()
        .map(|&v| {
            let mut c = config.clone();
            parameter.apply(&mut c, v)?;
            let run = run_scenario(&c, RunOptions { keep_records: false, ..opts })?;
            Ok(SweepRow { value: v, config_hash: run.config_hash, errors: run.errors })
        })
        .collect()
}

pub fn write_sweep_csv<W: Write>(mut w: W, parameter: SweepParameter, rows: &[SweepRow]) -> io::Result<()> {
    writeln!(w, "{SWEEP_CSV_HEADER}")?;
    let name = serde_json::to_value(parameter).expect("serializes");
    let name = name.as_str().unwrap_or_default();
    for r in rows {
        let e = &r.errors;
        writeln!(
            w,
            "{name},{},{},{},{},{},{},{},{},{}",
            r.value,
            e.range_codebook.mae_m,
            e.range_codebook.rmse_m,
            e.depth_codebook.mae_m,
            e.depth_codebook.rmse_m,
            e.depth_output.mae_m,
            e.depth_output.rmse_m,
            e.depth_codebook.pixel_count_used,
            r.config_hash
        )?;
    }
    Ok(())
}

/// Round-trip delay (seconds) of a target at `range_m`.
pub fn round_trip_delay(range_m: f64) -> f64 {
    2.0 * range_m / SPEED_OF_LIGHT
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtins_validate_and_build() {
        let all = builtin_scenarios();
        assert_eq!(all.len(), 3);
        for c in &all {
            c.validate().unwrap();
            c.build_scene().unwrap();
        }
        match &builtin_scenario("one_wall").unwrap().scene {
            SceneSource::OneWall { distance_m, material } => {
                assert_eq!(*distance_m, 7.0);
                assert_eq!(material, "concrete");
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn config_json_round_trip_and_unknown_keys() {
        let c = builtin_scenario("two_walls").unwrap();
        let back = ScenarioConfig::from_json(&c.to_json()).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.hash(), c.hash());
        let mut v: serde_json::Value = serde_json::from_str(&c.to_json()).unwrap();
        v["colour"] = serde_json::json!("red");
        assert!(matches!(ScenarioConfig::from_json(&v.to_string()), Err(PipelineError::Parse(_))));
    }

    #[test]
    fn set_overrides_and_hash_changes() {
        let mut c = builtin_scenario("one_wall").unwrap();
        let h0 = c.hash();
        c.set("radio.tx_power_dbm", "20").unwrap();
        assert_eq!(c.radio.tx_power_dbm, 20.0);
        assert_ne!(c.hash(), h0);
        c.set("threshold", r#"{"kind":"noise_floor","gamma":3}"#).unwrap();
        assert_eq!(c.threshold, ThresholdPolicy::NoiseFloor { gamma: 3.0 });
        c.set("slr", r#"{"delta_h":4,"delta_v":4}"#).unwrap();
        assert!(c.slr.is_some());
        assert!(c.set("radio.nonsense", "1").is_err());
        assert!(c.set("preamble.length", "100").unwrap_err().is_config());
        c.set("preamble.kind", "pn").unwrap();
        c.set("preamble.length", "100").unwrap();
    }

    #[test]
    fn air_time_of_largest_codebook() {
        let m = 16 * 4 * 16 * 4;
        let t = m as f64 * (3328.0 + 90.0) * 0.5e-9;
        assert!((t - 7e-3).abs() < 0.1e-3);
    }
}
