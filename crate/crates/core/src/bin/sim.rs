//! Simulation entry point.
//!
//! Ranks are worker threads launched in-process; `ranks = N` in the config
//! (or `--override ranks=N`) selects the rank count, so no external process
//! launcher is needed.

use biofilm2d::driver::{self, RunMode, SimConfig};
use clap::Parser;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "sim",
    about = "2D biofilm phase-field flow simulator",
    long_about = None
)]
struct Cli {
    /// Configuration file (`key = value` lines, `#` comments). Omitted: all
    /// defaults.
    #[arg(long)]
    config: Option<PathBuf>,

    /// Run mode: simulate | scaling | serialcheck.
    #[arg(long)]
    mode: Option<String>,

    /// Output directory (overrides `output.dir`).
    #[arg(long)]
    output: Option<PathBuf>,

    /// Number of time steps (overrides `steps`).
    #[arg(long)]
    steps: Option<usize>,

    /// Extra `key=value` overrides, applied after the config file.
    #[arg(long = "override", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

fn build_config(cli: &Cli) -> Result<SimConfig, String> {
    let mut cfg = match &cli.config {
        Some(path) => driver::load_config(path).map_err(|e| e.to_string())?,
        None => SimConfig::default(),
    };
    if let Some(mode) = &cli.mode {
        cfg.apply("mode", mode, 0).map_err(|e| e.to_string())?;
    }
    if let Some(dir) = &cli.output {
        cfg.output.dir = dir.clone();
    }
    if let Some(steps) = cli.steps {
        cfg.steps = steps;
    }
    for ov in &cli.overrides {
        let (key, value) = ov
            .split_once('=')
            .ok_or_else(|| format!("override `{ov}` is not of the form key=value"))?;
        cfg.apply(key.trim(), value.trim(), 0)
            .map_err(|e| e.to_string())?;
    }
    cfg.validate().map_err(|e| e.to_string())?;
    Ok(cfg)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let cfg = match build_config(&cli) {
        Ok(cfg) => cfg,
        Err(msg) => {
            eprintln!("configuration error: {msg}");
            return ExitCode::from(1);
        }
    };
    let mode = match cfg.mode {
        RunMode::Simulate => "simulate",
        RunMode::Scaling => "scaling",
        RunMode::SerialCheck => "serialcheck",
    };
    eprintln!(
        "sim: mode={} grid={}x{} ranks={} steps={} dt={}",
        mode,
        cfg.nx - 1,
        cfg.ny - 1,
        cfg.ranks,
        cfg.steps,
        cfg.dt
    );
    let outcome = driver::run(&cfg);
    if let Some(msg) = &outcome.message {
        eprintln!("sim: {msg}");
    }
    ExitCode::from(outcome.exit_code as u8)
}
