use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use fhq_harness::{execute, execute_replicas, Command, ExperimentConfig, RunOptions};

/// Finite-horizon Q-learning experiments.
///
/// Exit status: 0 on success, 1 on a configuration or I/O error, 2 when a
/// diagnostic check fails.
#[derive(Parser)]
#[command(name = "fhq", version)]
struct Cli {
    #[command(subcommand)]
    command: Sub,
}

#[derive(Subcommand)]
enum Sub {
    /// Solve the instance exactly by backward induction.
    SolveDp(Common),
    /// Train finite-horizon Q-learning and dump the trace and final table.
    Train(Common),
    /// Random-MDP experiment: error curve, stage snapshots, summary.
    RandomMdp(Common),
    /// Smart-grid comparison of the learned policy against the baselines.
    SmartGrid(Common),
    /// Fixed-point, Lipschitz, Euler-flow, noise and step-schedule checks.
    Diagnostics(Common),
}

#[derive(Args)]
struct Common {
    /// Experiment config (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Overrides every seed in the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory; falls back to `output_dir` in the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Run k independent seeds into `out/seed_{s}`.
    #[arg(long)]
    replicas: Option<usize>,
    /// Include wall-clock times in summaries (breaks byte-identical output).
    #[arg(long)]
    timing: bool,
}

fn run(command: Command, args: Common) -> Result<bool, anyhow::Error> {
    let mut config = ExperimentConfig::load(&args.config)?;
    if let Some(seed) = args.seed {
        config = config.with_seed(seed);
    }
    let Some(out) = args.out.or_else(|| config.output_dir.clone()) else {
        anyhow::bail!("no output directory: pass --out or set output_dir in the config");
    };
    let options = RunOptions {
        timing: args.timing,
    };
    let passed = match args.replicas {
        Some(k) => execute_replicas(command, &config, k, &out, options)?
            .iter()
            .all(|o| o.passed),
        None => execute(command, &config, &out, options)?.passed,
    };
    Ok(passed)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let (command, args) = match cli.command {
        Sub::SolveDp(a) => (Command::SolveDp, a),
        Sub::Train(a) => (Command::Train, a),
        Sub::RandomMdp(a) => (Command::RandomMdp, a),
        Sub::SmartGrid(a) => (Command::SmartGrid, a),
        Sub::Diagnostics(a) => (Command::Diagnostics, a),
    };
    match run(command, args) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("fhq: one or more checks failed");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("fhq: {e:#}");
            ExitCode::from(1)
        }
    }
}
