//! End-to-end runs on a reduced configuration.

use std::fs;
use std::path::Path;

use mmwave_depth::estimator::ThresholdPolicy;
use mmwave_depth::exec::Execution;
use mmwave_depth::pipeline::{
    builtin_scenario, run_from_records, run_scenario, sweep, RunOptions, ScenarioConfig, SceneSource, SweepParameter,
};
use mmwave_depth::waveform::{read_records, write_records, PreambleKind};

fn small() -> ScenarioConfig {
    let mut c = builtin_scenario("one_wall").unwrap();
    c.scene = SceneSource::OneWall { distance_m: 3.0, material: "concrete".into() };
    c.array.n_h = 8;
    c.array.n_v = 8;
    c.preamble.kind = PreambleKind::Pn;
    c.preamble.length = 256;
    c.trace.cell_size_m = 0.1;
    c.output_resolution = [36, 64];
    c.f_est_ratio = 20;
    c
}

fn outputs(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| matches!(p.extension().and_then(|e| e.to_str()), Some("pgm" | "csv" | "json")))
        .filter(|p| p.file_name().unwrap() != "timing.json")
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap()))
        .collect();
    files.sort();
    files
}

#[test]
fn runs_are_byte_identical_across_runs_and_execution_modes() {
    let cfg = small();
    let dirs: Vec<_> = (0..3).map(|_| tempfile::tempdir().unwrap()).collect();
    let modes = [Execution::Parallel, Execution::Parallel, Execution::Sequential];
    for (d, exec) in dirs.iter().zip(modes) {
        run_scenario(&cfg, RunOptions { exec, keep_records: false }).unwrap().write(d.path()).unwrap();
    }
    let first = outputs(dirs[0].path());
    assert!(first.len() >= 14);
    for d in &dirs[1..] {
        assert_eq!(outputs(d.path()), first);
    }
}

#[test]
fn seed_changes_the_noise() {
    let a = run_scenario(&small(), RunOptions { keep_records: true, ..Default::default() }).unwrap();
    let mut c = small();
    c.seed = 1;
    let b = run_scenario(&c, RunOptions { keep_records: true, ..Default::default() }).unwrap();
    assert_ne!(a.records.unwrap()[0].samples, b.records.unwrap()[0].samples);
    assert_ne!(a.config_hash, b.config_hash);
}

#[test]
fn estimation_from_saved_records_matches_the_live_run() {
    let cfg = small();
    let live = run_scenario(&cfg, RunOptions { keep_records: true, ..Default::default() }).unwrap();
    let records = live.records.clone().unwrap();
    assert_eq!(records.len(), 64);
    let mut buf = Vec::new();
    write_records(&mut buf, &records).unwrap();
    let back = read_records(buf.as_slice()).unwrap();
    assert_eq!(back, records);
    let replay = run_from_records(&cfg, &back, Execution::Parallel).unwrap();
    assert_eq!(replay.estimates, live.estimates);
    assert_eq!(replay.errors, live.errors);
    assert!(run_from_records(&cfg, &back[1..], Execution::Parallel).is_err());
}

#[test]
fn small_run_is_accurate_and_reports_air_time() {
    let run = run_scenario(&small(), RunOptions::default()).unwrap();
    assert_eq!(run.codebook_size, (8, 8));
    assert!(run.errors.depth_codebook.mae_m < 0.3, "{:?}", run.errors);
    let ts = 0.5e-9;
    let want = 64.0 * (256 + run.tap_count) as f64 * ts;
    assert!((run.air_time_s - want).abs() < 1e-15);
    assert_eq!(run.range_upscaled.dims(), (36, 64));
    let summary = run.summary();
    assert_eq!(summary["config_hash"], run.config_hash);
}

#[test]
fn silent_scene_reports_no_detections() {
    let mut cfg = small();
    cfg.threshold = ThresholdPolicy::Absolute { value: 1e30 };
    let err = run_scenario(&cfg, RunOptions::default()).unwrap_err();
    assert!(!err.is_config());
    assert!(err.to_string().contains("joint-processing"), "{err}");
}

#[test]
fn sweep_varies_the_parameter() {
    let rows = sweep(&small(), SweepParameter::TxPower, &[10.0, 30.0], RunOptions::default()).unwrap();
    assert_eq!(rows.len(), 2);
    assert_ne!(rows[0].config_hash, rows[1].config_hash);
    assert!(sweep(&small(), SweepParameter::TxPower, &[], RunOptions::default()).unwrap_err().is_config());
    let mut room = builtin_scenario("pillar_room").unwrap();
    room.array.n_h = 4;
    assert!(sweep(&room, SweepParameter::Distance, &[2.0], RunOptions::default()).unwrap_err().is_config());
    let mut golay = small();
    golay.preamble.kind = PreambleKind::Golay80211ad;
    assert!(golay.validate().unwrap_err().is_config());
}

#[test]
fn scene_files_load_and_missing_files_are_config_errors() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("scene.json");
    let spec = mmwave_depth::pipeline::one_wall_spec(3.0, "concrete", &Default::default());
    fs::write(&path, serde_json::to_string(&spec).unwrap()).unwrap();
    let mut cfg = small();
    cfg.scene = SceneSource::File { path: path.clone() };
    let from_file = run_scenario(&cfg, RunOptions::default()).unwrap();
    let inline = run_scenario(&small(), RunOptions::default()).unwrap();
    assert_eq!(from_file.estimates, inline.estimates);
    cfg.scene = SceneSource::File { path: dir.path().join("missing.json") };
    assert!(run_scenario(&cfg, RunOptions::default()).unwrap_err().is_config());
}
