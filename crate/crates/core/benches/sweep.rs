//! Parallel vs sequential execution of the per-beam sensing sweep.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use mmwave_depth::array::design_codebook;
use mmwave_depth::channel::codebook_taps;
use mmwave_depth::exec::Execution;
use mmwave_depth::pipeline::{builtin_scenario, prepare, run_scenario, RunOptions, SceneSource};
use mmwave_depth::waveform::PreambleKind;

fn config() -> mmwave_depth::pipeline::ScenarioConfig {
    let mut c = builtin_scenario("one_wall").unwrap();
    c.scene = SceneSource::OneWall { distance_m: 3.0, material: "concrete".into() };
    c.array.n_h = 8;
    c.array.n_v = 8;
    c.preamble.kind = PreambleKind::Pn;
    c.preamble.length = 512;
    c.trace.cell_size_m = 0.05;
    c.output_resolution = [90, 160];
    c
}

fn bench(c: &mut Criterion) {
    let cfg = config();
    let modes = [("parallel", Execution::Parallel), ("sequential", Execution::Sequential)];

    let mut group = c.benchmark_group("codebook_taps");
    let prep = prepare(&cfg, Execution::Parallel).unwrap();
    let cb = design_codebook(&cfg.upa(), &cfg.view, None, Execution::Parallel).unwrap();
    for (name, exec) in modes {
        group.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &exec| {
            b.iter(|| codebook_taps(&prep.paths, &cb, &cfg.radio, prep.tap_count, exec).unwrap())
        });
    }
    group.finish();

    let mut group = c.benchmark_group("run_scenario");
    group.sample_size(10);
    for (name, exec) in modes {
        group.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &exec| {
            b.iter(|| run_scenario(&cfg, RunOptions { exec, keep_records: false }).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, bench);
criterion_main!(benches);
