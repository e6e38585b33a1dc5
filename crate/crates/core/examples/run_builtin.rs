//! Runs a built-in scenario and prints its summary.
//!
//! `cargo run --release --example run_builtin -- one_wall radio.tx_power_dbm=20`

use mmwave_depth::pipeline::{builtin_scenario, run_scenario, RunOptions};

fn main() {
    let mut args = std::env::args().skip(1);
    let name = args.next().unwrap_or_else(|| "one_wall".into());
    let mut cfg = builtin_scenario(&name).expect("unknown scenario");
    for kv in args {
        let (k, v) = kv.split_once('=').expect("key=value");
        cfg.set(k, v).expect("override");
    }
    let run = run_scenario(&cfg, RunOptions::default()).expect("run");
    println!("{}", serde_json::to_string_pretty(&run.summary()).unwrap());
    for (k, t) in &run.timing {
        println!("{k}: {t:.3}s");
    }
}
