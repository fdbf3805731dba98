use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};

use cgolab::error::Error;
use cgolab::exec;
use cgolab::experiment::{run_command, ExperimentConfig, RunReport};

#[derive(Parser)]
#[command(name = "cgolab", version, about = "CGO construction and stationary-phase recovery pipelines")]
struct Cli {
    command: Command,
    /// JSON experiment config; omitted fields take their defaults
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides `output_dir` from the config
    #[arg(long)]
    output: Option<PathBuf>,
    /// Worker threads; 1 runs sequentially, 0 uses every core
    #[arg(long, default_value_t = 0)]
    jobs: usize,
    /// Validate the config and print it without running
    #[arg(long)]
    dry_run: bool,
}

#[derive(ValueEnum, Clone, Copy)]
enum Command {
    /// Cauchy-transform oracles and transport residuals
    TransformsSelftest,
    /// Build and validate the phase at x̂
    PhaseBuild,
    /// Build CGO solutions over the τ sweep and report their ledgers
    CgoBuild,
    /// Identity breakdown per τ
    Identity,
    /// Recover q₁ − q₂ at x̂ or over the probe grid
    Recover,
    /// Carleman estimate over random H¹₀ samples
    Carleman,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::TransformsSelftest => "transforms-selftest",
            Command::PhaseBuild => "phase-build",
            Command::CgoBuild => "cgo-build",
            Command::Identity => "identity",
            Command::Recover => "recover",
            Command::Carleman => "carleman",
        }
    }
}

fn load(cli: &Cli) -> Result<ExperimentConfig, Error> {
    let mut cfg = match &cli.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(dir) = &cli.output {
        cfg.output_dir = dir.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn summarize(report: &RunReport) {
    for c in &report.checks {
        let mark = if c.passed { "ok  " } else { "FAIL" };
        println!("{mark} {:<40} {:.3e} (limit {:.3e})", c.name, c.value, c.limit);
    }
    for a in &report.artifacts {
        println!("wrote {}", a.display());
    }
    println!("{}: {}", report.command, if report.passed { "passed" } else { "failed" });
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let cfg = match load(&cli) {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    if cli.dry_run {
        match serde_json::to_string_pretty(&cfg) {
            Ok(text) => println!("{text}"),
            Err(e) => {
                eprintln!("error: {e}");
                return ExitCode::from(2);
            }
        }
        return ExitCode::SUCCESS;
    }
    match cli.jobs {
        0 => {}
        1 => exec::set_sequential(true),
        n => exec::init_workers(n),
    }
    match run_command(cli.command.name(), &cfg) {
        Ok(report) => {
            summarize(&report);
            if report.passed { ExitCode::SUCCESS } else { ExitCode::from(1) }
        }
        Err(e @ Error::Config(_)) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
