//! Runs the `mmdepth` binary end to end.

use std::process::Command;

fn mmdepth() -> Command {
    Command::new(env!("CARGO_BIN_EXE_mmdepth"))
}

const SMALL: [&str; 12] = [
    "--set", "array.n_h=4",
    "--set", "array.n_v=4",
    "--set", "preamble={\"kind\":\"pn\",\"length\":128}",
    "--set", "output_resolution=[18,32]",
    "--set", "scene={\"kind\":\"one_wall\",\"distance_m\":2.0,\"material\":\"concrete\"}",
    "--set", "trace.cell_size_m=0.1",
];

#[test]
fn run_dump_and_estimate_agree() {
    let dir = tempfile::tempdir().unwrap();
    let live = dir.path().join("live");
    let replay = dir.path().join("replay");
    let status = mmdepth()
        .args(["run", "--scenario", "one_wall", "--dump-records", "--out"])
        .arg(&live)
        .args(SMALL)
        .status()
        .unwrap();
    assert!(status.success());
    for f in ["depth_estimate.pgm", "depth_estimate_upscaled.pgm", "errors.csv", "delay_sets.csv", "records.bin", "config.json"] {
        assert!(live.join(f).exists(), "{f}");
    }
    let status = mmdepth()
        .args(["estimate", "--config"])
        .arg(live.join("config.json"))
        .arg("--records")
        .arg(live.join("records.bin"))
        .arg("--out")
        .arg(&replay)
        .status()
        .unwrap();
    assert!(status.success());
    for f in ["depth_estimate.csv", "range_estimate.csv", "errors.csv"] {
        assert_eq!(std::fs::read(live.join(f)).unwrap(), std::fs::read(replay.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn sweep_writes_one_row_per_value() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("sweep.csv");
    let status = mmdepth()
        .args(["sweep", "--scenario", "one_wall", "--param", "tx_power", "--values", "10,20", "--out"])
        .arg(&out)
        .args(SMALL)
        .status()
        .unwrap();
    assert!(status.success());
    let text = std::fs::read_to_string(out).unwrap();
    assert_eq!(text.lines().count(), 3);
    assert!(text.lines().nth(1).unwrap().starts_with("tx_power,10"));
}

#[test]
fn codebook_and_ground_truth_dumps() {
    let dir = tempfile::tempdir().unwrap();
    let cb = dir.path().join("cb.csv");
    assert!(mmdepth().args(["codebook-dump", "--scenario", "two_walls", "--out"]).arg(&cb).args(SMALL).status().unwrap().success());
    assert_eq!(std::fs::read_to_string(cb).unwrap().lines().count(), 17);
    let gt = dir.path().join("gt");
    assert!(mmdepth().args(["ground-truth", "--scenario", "two_walls", "--out"]).arg(&gt).args(SMALL).status().unwrap().success());
    assert!(gt.join("depth_truth.pgm").exists());
}

#[test]
fn exit_codes() {
    let bad_key = mmdepth().args(["run", "--scenario", "one_wall", "--set", "radio.colour=1"]).status().unwrap();
    assert_eq!(bad_key.code(), Some(2));
    let unknown = mmdepth().args(["show-config", "--scenario", "moon"]).status().unwrap();
    assert_eq!(unknown.code(), Some(2));
    let no_detections = mmdepth()
        .args(["run", "--scenario", "one_wall", "--set", "threshold={\"kind\":\"absolute\",\"value\":1e30}"])
        .args(SMALL)
        .arg("--out")
        .arg(tempfile::tempdir().unwrap().path())
        .status()
        .unwrap();
    assert_eq!(no_detections.code(), Some(3));
    let listed = mmdepth().arg("show-config").output().unwrap();
    assert!(String::from_utf8(listed.stdout).unwrap().contains("pillar_room"));
}
