use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};

use lte_d2d_sim::experiments::{self, ScenarioBatch};
use lte_d2d_sim::{parse_config, ScenarioConfig};

#[derive(Parser)]
#[command(name = "lte-d2d-sim", version, about = "Slot-level LTE downlink simulator with D2D relaying")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario and print its metrics as JSON.
    Run {
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long = "duration-slots")]
        duration_slots: Option<u64>,
        /// Also write metrics.json into this directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the scenario matrix of a batch and write throughput.csv and summary.json.
    Batch {
        config: PathBuf,
        #[arg(long)]
        count: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long = "duration-slots")]
        duration_slots: Option<u64>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Write synthetic SIR traces.
    GenTraces {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 16)]
        count: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Parse and validate a config; silent on success.
    Validate { config: PathBuf },
}

fn load(path: &Path, seed: Option<u64>, duration: Option<u64>) -> Result<ScenarioConfig> {
    let mut cfg = parse_config(path)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    if let Some(d) = duration {
        cfg.duration_slots = d;
    }
    Ok(cfg)
}

fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run {
            config,
            seed,
            duration_slots,
            out,
        } => {
            let cfg = load(&config, seed, duration_slots)?;
            let metrics = lte_d2d_sim::run(&cfg)?;
            let json = metrics.to_json() + "\n";
            if let Some(dir) = out {
                std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
                let path = dir.join("metrics.json");
                std::fs::write(&path, &json).with_context(|| format!("writing {}", path.display()))?;
            }
            std::io::stdout().lock().write_all(json.as_bytes())?;
        }
        Command::Batch {
            config,
            count,
            seed,
            duration_slots,
            out,
        } => {
            let mut cfg = load(&config, seed, duration_slots)?;
            if let Some(n) = count {
                anyhow::ensure!(n >= 1, "--count must be at least 1");
                cfg.batch.count = n;
            }
            let batch = ScenarioBatch::from_config(&cfg);
            let configs = experiments::gen_batch(&batch, &cfg)?;
            let records = experiments::run_matrix(&configs, &cfg.batch.scenarios, &cfg.batch.policies)?;
            let (csv, json) = experiments::write_outputs(&out, &records)?;
            eprintln!("{} runs: {} and {}", records.len(), csv.display(), json.display());
        }
        Command::GenTraces { out, count, seed } => {
            anyhow::ensure!(count >= 1, "--count must be at least 1");
            let files = experiments::write_trace_set(&out, count, seed)?;
            eprintln!("wrote {} traces to {}", files.len(), out.display());
        }
        Command::Validate { config } => {
            parse_config(&config)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
