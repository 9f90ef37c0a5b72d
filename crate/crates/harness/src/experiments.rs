use std::path::Path;
use std::time::Instant;

use anyhow::{bail, Result};
use fhq_core::grid::{self, CostEstimate, FillBattery, FillDemand, GridPolicy, TabularGridPolicy};
use fhq_core::learner::{self, sup_error, TrainingOutcome};
use fhq_core::policy::greedy_policy;
use fhq_core::{dp, FiniteHorizonMdp, QTable};
use serde::{Deserialize, Serialize};

use crate::config::{ExperimentConfig, InstanceSpec};
use crate::output::{self, OutputDir};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RunOptions {
    /// Record wall time in summaries. Off by default because it makes the
    /// output differ between otherwise identical runs.
    pub timing: bool,
}

/// One training run, as reported in `summary.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRecord {
    /// `(N,|S|,|A|)` or the grid scenario `(h,d,b,p)`.
    pub setting: String,
    pub epsilon: f64,
    /// `‖Q_learned − Q_dp‖∞` at termination.
    pub error: f64,
    pub iterations: u64,
    pub converged: bool,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wall_time_secs: Option<f64>,
}

struct Trained {
    dp: QTable,
    outcome: TrainingOutcome,
    record: ResultRecord,
}

fn train_against_dp(
    mdp: &FiniteHorizonMdp,
    setting: String,
    config: &ExperimentConfig,
    options: RunOptions,
) -> Result<Trained> {
    let started = Instant::now();
    let dp = dp::solve_with(mdp, config.learner.execution)?;
    let outcome = learner::run(mdp, &config.learner, Some(&dp))?;
    let record = ResultRecord {
        setting,
        epsilon: config.learner.epsilon,
        error: sup_error(&outcome.q, &dp)?,
        iterations: outcome.iterations,
        converged: outcome.converged,
        seed: config.seed(),
        wall_time_secs: options.timing.then(|| started.elapsed().as_secs_f64()),
    };
    Ok(Trained {
        dp,
        outcome,
        record,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DpSummary {
    pub setting: String,
    pub horizon: usize,
    pub num_states: usize,
    pub num_actions: usize,
    pub bellman_residual: f64,
    pub seed: u64,
}

/// Exact solution: `instance.json`, `q_dp.csv`, `value_dp.csv`,
/// `policy_dp.csv`, `summary.json`.
pub fn solve_dp(config: &ExperimentConfig, out: &Path) -> Result<DpSummary> {
    let mdp = config.instance.build()?;
    let q = dp::solve_with(&mdp, config.learner.execution)?;
    let dir = OutputDir::create(out)?;
    dir.text("instance.json", &mdp.to_json()?)?;
    output::write_q(&dir, "q_dp.csv", &mdp, &q)?;
    output::write_value_and_policy(&dir, "dp", &mdp, &q)?;
    let summary = DpSummary {
        setting: config.instance.label(&mdp),
        horizon: mdp.horizon(),
        num_states: mdp.num_states(),
        num_actions: mdp.num_actions(),
        bellman_residual: dp::bellman_residual(&mdp, &q)?,
        seed: config.seed(),
    };
    dir.json("summary.json", &summary)?;
    Ok(summary)
}

/// One training run: `trace.csv`, `q_final.csv`, `policy_learned.csv`,
/// `value_learned.csv`, `summary.json`.
pub fn train(config: &ExperimentConfig, out: &Path, options: RunOptions) -> Result<ResultRecord> {
    let mdp = config.instance.build()?;
    let trained = train_against_dp(&mdp, config.instance.label(&mdp), config, options)?;
    let dir = OutputDir::create(out)?;
    dir.trace("trace.csv", &trained.outcome.trace)?;
    output::write_q_pair(&dir, "q_final.csv", &mdp, &trained.outcome.q, &trained.dp)?;
    output::write_value_and_policy(&dir, "learned", &mdp, &trained.outcome.q)?;
    dir.json("summary.json", &trained.record)?;
    Ok(trained.record)
}

/// The random-MDP experiment: instance, error curve against the DP solution,
/// value/policy snapshots at the configured stages, final table, summary.
pub fn run_random_mdp_experiment(
    config: &ExperimentConfig,
    out: &Path,
    options: RunOptions,
) -> Result<ResultRecord> {
    let mdp = config.instance.build()?;
    let stages = config.snapshot_stages(mdp.horizon())?;
    let trained = train_against_dp(&mdp, config.instance.label(&mdp), config, options)?;
    let dir = OutputDir::create(out)?;
    dir.text("instance.json", &mdp.to_json()?)?;
    dir.trace("error_curve.csv", &trained.outcome.trace)?;
    output::write_snapshots(&dir, &mdp, &trained.outcome.q, &trained.dp, &stages)?;
    output::write_q_pair(&dir, "q_final.csv", &mdp, &trained.outcome.q, &trained.dp)?;
    dir.json("summary.json", &trained.record)?;
    Ok(trained.record)
}

/// A row of `comparison.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub scenario: String,
    pub algorithm: String,
    pub avg_cost: f64,
    pub std_err: f64,
    pub episodes: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridReport {
    pub rows: Vec<ComparisonRow>,
    pub training: Vec<ResultRecord>,
}

impl GridReport {
    pub fn find(&self, scenario: &str, algorithm: &str) -> Option<&ComparisonRow> {
        self.rows
            .iter()
            .find(|r| r.scenario == scenario && r.algorithm == algorithm)
    }
}

pub const GRID_ALGORITHMS: [&str; 3] = ["fhql", "fill_demand", "fill_battery"];

/// Scenario label used in `comparison.csv`, e.g. `(10,4,4,4)+renewables`.
pub fn scenario_label(config: &grid::GridConfig) -> String {
    if config.renewables_enabled {
        format!("{}+renewables", config.label())
    } else {
        config.label()
    }
}

/// Trains on the compiled grid MDP and compares the greedy policy with the
/// two baselines, all evaluated on the same episode seed. With
/// `compare_renewables` both the renewables-off and -on variants run.
pub fn run_smart_grid_experiment(
    config: &ExperimentConfig,
    out: &Path,
    options: RunOptions,
) -> Result<GridReport> {
    let InstanceSpec::Grid(base) = &config.instance else {
        bail!("the smart-grid experiment needs a `grid` instance");
    };
    let variants = if config.evaluation.compare_renewables {
        vec![false, true]
    } else {
        vec![base.renewables_enabled]
    };
    let episodes = config.evaluation.episodes;
    let exec = config.learner.execution;
    let mut report = GridReport {
        rows: Vec::new(),
        training: Vec::new(),
    };
    for enabled in variants {
        let grid_config = base.clone().with_renewables(enabled);
        let scenario = scenario_label(&grid_config);
        let mdp = grid::to_mdp(&grid_config)?;
        let trained = train_against_dp(&mdp, scenario.clone(), config, options)?;
        let learned = greedy_policy(&mdp, &trained.outcome.q)?;
        let tabular = TabularGridPolicy(&learned);
        let policies: [&dyn GridPolicy; 3] = [&tabular, &FillDemand, &FillBattery];
        for (name, policy) in GRID_ALGORITHMS.iter().zip(policies) {
            let CostEstimate { mean, std_err, .. } =
                grid::evaluate_average_cost(&grid_config, policy, episodes, grid_config.seed, exec)?;
            report.rows.push(ComparisonRow {
                scenario: scenario.clone(),
                algorithm: name.to_string(),
                avg_cost: mean,
                std_err,
                episodes,
                seed: grid_config.seed,
            });
        }
        report.training.push(trained.record);
    }
    let dir = OutputDir::create(out)?;
    dir.csv("comparison.csv", &report.rows)?;
    dir.json("summary.json", &report.training)?;
    Ok(report)
}
