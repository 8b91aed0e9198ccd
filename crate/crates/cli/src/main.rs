use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Result};
use clap::{Args, Parser, Subcommand};
use twoscale_runner::config::preset_names;
use twoscale_runner::{cmd_compare, cmd_convergence, cmd_run, selfcheck, ExperimentConfig, Outcome};

#[derive(Parser)]
#[command(name = "twoscale", version, about = "Two-time-scale minimizing movements experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Worker threads for sweeps (defaults to all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
}

#[derive(Args)]
struct Source {
    /// Experiment config (JSON).
    #[arg(long, conflicts_with = "preset", required_unless_present = "preset")]
    config: Option<PathBuf>,
    /// Built-in preset name.
    #[arg(long)]
    preset: Option<String>,
    /// Output directory (defaults to the config's output_dir, then ./out).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Run the scheme and write trajectory.csv, meta.json, certificate.json.
    Run(Source),
    /// Sweep step sizes and write errors.csv and rate.json.
    Convergence(Source),
    /// Write compare.csv with scheme, time-delayed and limit solutions.
    Compare(Source),
    /// Run quick invariant checks and print a pass/fail table.
    Selfcheck {
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// List the built-in presets.
    Presets,
}

fn load(src: &Source) -> Result<(ExperimentConfig, PathBuf)> {
    let cfg = match (&src.config, &src.preset) {
        (Some(path), _) => ExperimentConfig::from_path(path)?,
        (None, Some(name)) => ExperimentConfig::preset(name)?,
        (None, None) => bail!("either --config or --preset is required"),
    };
    let out = src.out.clone().or_else(|| cfg.output_dir.clone()).unwrap_or_else(|| PathBuf::from("out"));
    Ok((cfg, out))
}

fn report(outcome: Outcome) -> ExitCode {
    match outcome {
        Outcome::Completed => ExitCode::SUCCESS,
        Outcome::Collision { k, ell } => {
            eprintln!("collision: line search hit the admissible boundary at step k = {k}, window ell = {ell}");
            ExitCode::from(2)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.jobs {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::FAILURE;
        }
    }
    let result = match &cli.command {
        Command::Run(src) => load(src).and_then(|(cfg, out)| cmd_run(&cfg, &out)).map(report),
        Command::Convergence(src) => load(src).and_then(|(cfg, out)| cmd_convergence(&cfg, &out)).map(report),
        Command::Compare(src) => load(src).and_then(|(cfg, out)| cmd_compare(&cfg, &out)).map(report),
        Command::Selfcheck { seed } => {
            let checks = selfcheck::run_all(*seed);
            selfcheck::print_table(&checks);
            Ok(if checks.iter().all(|c| c.passed) { ExitCode::SUCCESS } else { ExitCode::FAILURE })
        }
        Command::Presets => {
            preset_names().for_each(|n| println!("{n}"));
            Ok(ExitCode::SUCCESS)
        }
    };
    result.unwrap_or_else(|e| {
        eprintln!("error: {e:#}");
        ExitCode::FAILURE
    })
}
