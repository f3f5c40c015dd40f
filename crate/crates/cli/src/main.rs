use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use mfsim_cli::config::{ExperimentConfig, ExperimentKind};
use mfsim_cli::run_experiment;

/// Experiment runner for measure-valued dynamics with common noise.
#[derive(Parser)]
#[command(name = "mfsim", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Particle-system runs with conservation and translation oracles.
    Simulate(RunArgs),
    /// Picard iteration on the conditional-law map.
    Picard(RunArgs),
    /// Weak-formulation residuals under step refinement.
    Weakcheck(RunArgs),
    /// Forward/backward duality-gap checks.
    Duality(RunArgs),
    /// Empirical-law convergence rate in N.
    Rate(RunArgs),
    /// Conditional chaos gaps and martingale statistics.
    Chaos(RunArgs),
    /// Stratonovich/Ito conversion consistency.
    Stratcheck(RunArgs),
    /// Randomized coefficient-assumption audit.
    Assumptions(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Path to the JSON experiment config.
    #[arg(long)]
    config: PathBuf,
    /// Overrides the config's seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory for the report and CSV tables.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads (MFSIM_THREADS as fallback; default: all cores).
    #[arg(long, env = "MFSIM_THREADS")]
    threads: Option<usize>,
}

impl Command {
    fn split(self) -> (ExperimentKind, RunArgs) {
        match self {
            Command::Simulate(a) => (ExperimentKind::Simulate, a),
            Command::Picard(a) => (ExperimentKind::Picard, a),
            Command::Weakcheck(a) => (ExperimentKind::Weakcheck, a),
            Command::Duality(a) => (ExperimentKind::Duality, a),
            Command::Rate(a) => (ExperimentKind::Rate, a),
            Command::Chaos(a) => (ExperimentKind::Chaos, a),
            Command::Stratcheck(a) => (ExperimentKind::Stratcheck, a),
            Command::Assumptions(a) => (ExperimentKind::Assumptions, a),
        }
    }
}

fn load_config(kind: ExperimentKind, args: &RunArgs) -> anyhow::Result<ExperimentConfig> {
    let text = std::fs::read_to_string(&args.config)
        .map_err(|e| anyhow::anyhow!("cannot read config {}: {e}", args.config.display()))?;
    let mut cfg = ExperimentConfig::from_json(&text)?;
    cfg.kind = kind;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn execute(kind: ExperimentKind, args: RunArgs) -> anyhow::Result<bool> {
    let cfg = load_config(kind, &args)?;
    let out_dir = args
        .out
        .clone()
        .or_else(|| cfg.output.as_ref().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("mfsim_out"));
    let run = || run_experiment(&cfg, &out_dir);
    let report = match args.threads {
        #[cfg(feature = "parallel")]
        Some(n) if n > 0 => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| anyhow::anyhow!("cannot build thread pool: {e}"))?
            .install(run)?,
        _ => run()?,
    };
    println!(
        "{}: {} ({} statistics, {:.2}s, {:.3e} particle-steps/s)",
        report.kind,
        if report.pass { "PASS" } else { "FAIL" },
        report.statistics.len(),
        report.wall_clock_seconds,
        report.particle_steps_per_second,
    );
    for s in &report.statistics {
        match s.std_error {
            Some(se) => println!("  {} = {:.6e} +- {:.3e}", s.name, s.value, se),
            None => println!("  {} = {:.6e} [exact]", s.name, s.value),
        }
    }
    for f in &report.failures {
        println!("  FAIL: {f}");
    }
    println!("  report: {}/report.json", out_dir.display());
    Ok(report.pass)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (kind, args) = cli.command.split();
    match execute(kind, args) {
        Ok(true) => ExitCode::from(0),
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
