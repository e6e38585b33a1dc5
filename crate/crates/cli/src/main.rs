//! `mmdepth`: run scenarios, sweeps and individual stages from the shell.
//!
//! Exit codes: 0 success, 2 configuration or usage error, 3 stage failure.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use mmwave_depth::exec::{init_thread_pool_from_env, Execution};
use mmwave_depth::pipeline::{
    builtin_scenario, builtin_scenarios, prepare, run_from_records, run_scenario, sweep, write_sweep_csv, PipelineError,
    RunOptions, ScenarioConfig, SweepParameter,
};
use mmwave_depth::scene::ground_truth_maps;
use mmwave_depth::waveform::read_records;

#[derive(Parser)]
#[command(name = "mmdepth", version, about = "mmWave MIMO depth-map sensing simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Source {
    /// Built-in scenario: one_wall, two_walls or pillar_room.
    #[arg(long, conflicts_with = "config")]
    scenario: Option<String>,
    /// Scenario config JSON file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override a config key, e.g. `--set radio.tx_power_dbm=20`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Run every stage on the calling thread.
    #[arg(long)]
    sequential: bool,
}

impl Source {
    fn load(&self) -> Result<ScenarioConfig, PipelineError> {
        let mut cfg = match (&self.scenario, &self.config) {
            (_, Some(path)) => ScenarioConfig::from_file(path)?,
            (Some(name), None) => builtin_scenario(name)
                .ok_or_else(|| PipelineError::Config(format!("unknown scenario {name:?}")))?,
            (None, None) => return Err(PipelineError::Config("pass --scenario or --config".into())),
        };
        for kv in &self.overrides {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| PipelineError::Config(format!("override {kv:?} is not KEY=VALUE")))?;
            cfg.set(k.trim(), v.trim())?;
        }
        Ok(cfg)
    }

    fn exec(&self) -> Execution {
        if self.sequential {
            Execution::Sequential
        } else {
            Execution::Parallel
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Simulate and estimate one scenario, writing maps and reports.
    Run {
        #[command(flatten)]
        source: Source,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Also write the per-beam sensing records to `records.bin`.
        #[arg(long)]
        dump_records: bool,
    },
    /// Run a scenario once per parameter value and write a CSV report.
    Sweep {
        #[command(flatten)]
        source: Source,
        /// tx_power, preamble_len, distance, upa_size or os_factor.
        #[arg(long)]
        param: String,
        /// Comma-separated values.
        #[arg(long, value_delimiter = ',', num_args = 1..)]
        values: Vec<f64>,
        #[arg(long, default_value = "sweep.csv")]
        out: PathBuf,
    },
    /// Render ground-truth range and depth maps at output resolution.
    GroundTruth {
        #[command(flatten)]
        source: Source,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Write the beam codebook as CSV.
    CodebookDump {
        #[command(flatten)]
        source: Source,
        #[arg(long, default_value = "codebook.csv")]
        out: PathBuf,
    },
    /// Estimate maps from previously dumped sensing records.
    Estimate {
        #[command(flatten)]
        source: Source,
        #[arg(long)]
        records: PathBuf,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Print a scenario config as JSON, or list the built-ins.
    ShowConfig {
        #[command(flatten)]
        source: Source,
    },
}

fn stage_io(e: impl std::fmt::Display) -> PipelineError {
    PipelineError::Stage { stage: mmwave_depth::pipeline::Stage::Output, message: e.to_string() }
}

fn execute(cmd: Command) -> Result<(), PipelineError> {
    match cmd {
        Command::Run { source, out, dump_records } => {
            let cfg = source.load()?;
            let run = run_scenario(&cfg, RunOptions { exec: source.exec(), keep_records: dump_records })?;
            run.write(&out)?;
            println!("{}", serde_json::to_string_pretty(&run.summary())?);
        }
        Command::Sweep { source, param, values, out } => {
            let cfg = source.load()?;
            let param: SweepParameter = param.parse()?;
            let rows = sweep(&cfg, param, &values, RunOptions { exec: source.exec(), keep_records: false })?;
            write_sweep_csv(BufWriter::new(File::create(&out)?), param, &rows)?;
            for r in &rows {
                println!("{} depth MAE {:.4} m range MAE {:.4} m", r.value, r.errors.depth_codebook.mae_m, r.errors.range_codebook.mae_m);
            }
        }
        Command::GroundTruth { source, out } => {
            let cfg = source.load()?;
            let scene = cfg.build_scene()?;
            let target = (cfg.output_resolution[0], cfg.output_resolution[1]);
            let (range, depth) = ground_truth_maps(&scene, &cfg.view, target, source.exec()).map_err(stage_io)?;
            fs::create_dir_all(&out)?;
            range.write_pgm(BufWriter::new(File::create(out.join("range_truth.pgm"))?)).map_err(stage_io)?;
            depth.write_pgm(BufWriter::new(File::create(out.join("depth_truth.pgm"))?)).map_err(stage_io)?;
            range.write_csv(BufWriter::new(File::create(out.join("range_truth.csv"))?)).map_err(stage_io)?;
            depth.write_csv(BufWriter::new(File::create(out.join("depth_truth.csv"))?)).map_err(stage_io)?;
        }
        Command::CodebookDump { source, out } => {
            let cfg = source.load()?;
            let cb = mmwave_depth::array::design_codebook(&cfg.upa(), &cfg.view, cfg.slr, source.exec())
                .map_err(|e| PipelineError::Config(e.to_string()))?;
            cb.write_csv(BufWriter::new(File::create(&out)?)).map_err(stage_io)?;
            println!("{} beams ({} x {})", cb.len(), cb.n_bar_v(), cb.n_bar_h());
        }
        Command::Estimate { source, records, out } => {
            let cfg = source.load()?;
            let file = File::open(&records).map_err(|e| PipelineError::Config(format!("{}: {e}", records.display())))?;
            let recs = read_records(BufReader::new(file)).map_err(|e| PipelineError::Config(e.to_string()))?;
            let run = run_from_records(&cfg, &recs, source.exec())?;
            run.write(&out)?;
            println!("{}", serde_json::to_string_pretty(&run.summary())?);
        }
        Command::ShowConfig { source } => {
            if source.scenario.is_none() && source.config.is_none() {
                for c in builtin_scenarios() {
                    println!("{}", c.name);
                }
            } else {
                let cfg = source.load()?;
                prepare(&cfg, source.exec())?;
                println!("{}", cfg.to_json());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    init_thread_pool_from_env();
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_config() { 2 } else { 3 })
        }
    }
}
