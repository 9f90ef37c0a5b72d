//! Reproducible experiment driver for finite-horizon Q-learning.
//!
//! Every run reads an [`ExperimentConfig`], writes its artifacts (CSV and
//! JSON) into one output directory and is a pure function of config and
//! seed, so repeated runs reproduce their files byte for byte.

mod checks;
mod config;
mod experiments;
mod output;

use std::path::Path;

use anyhow::{bail, Result};
use serde::{Deserialize, Serialize};

pub use checks::{run_diagnostics, CheckSummary, DiagnosticsReport};
pub use config::{DiagnosticsConfig, EvaluationConfig, ExperimentConfig, ExperimentKind, InstanceSpec};
pub use experiments::{
    run_random_mdp_experiment, run_smart_grid_experiment, scenario_label, solve_dp, train,
    ComparisonRow, DpSummary, GridReport, ResultRecord, RunOptions, GRID_ALGORITHMS,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    SolveDp,
    Train,
    RandomMdp,
    SmartGrid,
    Diagnostics,
}

impl Command {
    fn kind(self) -> Option<ExperimentKind> {
        match self {
            Command::RandomMdp => Some(ExperimentKind::RandomMdp),
            Command::SmartGrid => Some(ExperimentKind::SmartGrid),
            Command::Diagnostics => Some(ExperimentKind::Diagnostics),
            Command::SolveDp | Command::Train => None,
        }
    }
}

/// What a run produced: whether its checks passed (only diagnostics can
/// fail) and the summary it wrote.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunOutcome {
    pub seed: u64,
    pub passed: bool,
    pub summary: serde_json::Value,
}

/// Runs one experiment into `out`. Errors are configuration or I/O
/// problems; failed checks come back as `passed == false`.
pub fn execute(
    command: Command,
    config: &ExperimentConfig,
    out: &Path,
    options: RunOptions,
) -> Result<RunOutcome> {
    config.validate()?;
    if let (Some(declared), Some(expected)) = (config.experiment_kind, command.kind()) {
        if declared != expected {
            bail!("config declares a {declared:?} experiment, but {expected:?} was requested");
        }
    }
    let (passed, summary) = match command {
        Command::SolveDp => (true, serde_json::to_value(solve_dp(config, out)?)?),
        Command::Train => (true, serde_json::to_value(train(config, out, options)?)?),
        Command::RandomMdp => (
            true,
            serde_json::to_value(run_random_mdp_experiment(config, out, options)?)?,
        ),
        Command::SmartGrid => (
            true,
            serde_json::to_value(run_smart_grid_experiment(config, out, options)?)?,
        ),
        Command::Diagnostics => {
            let report = run_diagnostics(config, out)?;
            (report.passed, serde_json::to_value(report)?)
        }
    };
    Ok(RunOutcome {
        seed: config.seed(),
        passed,
        summary,
    })
}

/// Runs `replicas` independent copies with seeds `base, base + 1, …`, each
/// into `out/seed_{seed}`, and writes `out/replicas.json` ordered by seed.
pub fn execute_replicas(
    command: Command,
    config: &ExperimentConfig,
    replicas: usize,
    out: &Path,
    options: RunOptions,
) -> Result<Vec<RunOutcome>> {
    if replicas == 0 {
        bail!("--replicas must be at least 1");
    }
    let base = config.seed();
    let outcomes = par_map(replicas, |k| {
        let seed = base + k as u64;
        let config = config.clone().with_seed(seed);
        execute(command, &config, &out.join(format!("seed_{seed}")), options)
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    output::OutputDir::create(out)?.json("replicas.json", &outcomes)?;
    Ok(outcomes)
}

/// `(0..len).map(f)`, on the rayon pool when the `parallel` feature is on.
/// Results keep index order either way.
pub(crate) fn par_map<T: Send>(len: usize, f: impl Fn(usize) -> T + Sync + Send) -> Vec<T> {
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        (0..len).into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..len).map(f).collect()
    }
}
