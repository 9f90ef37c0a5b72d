//! Acceptance suite: one PASS/FAIL line per criterion. Runs as a plain
//! binary (`harness = false`) and exits nonzero if any criterion fails.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::process::Command as Process;
use std::time::{Duration, Instant};

use fhq_core::diagnostics::{
    euler_flow, h_field, h_infinity_field, lipschitz_probe, martingale_noise_probe, random_start,
    FieldKind,
};
use fhq_core::learner::{self, LearnerConfig, StepSchedule};
use fhq_core::policy::brute_force_optimal_q;
use fhq_core::random_mdp::{generate, RandomMdpSpec};
use fhq_core::rng::{self, domain};
use fhq_core::{dp, Execution, FiniteHorizonMdp, QTable};
use fhq_harness::{
    run_smart_grid_experiment, ExperimentConfig, GridReport, InstanceSpec, RunOptions,
};

// Tolerances and limits, one block per criterion.
const DP_TOLERANCE: f64 = 1e-10;
const DP_INSTANCES: u64 = 20;
const DP_TIME: Duration = Duration::from_secs(10);

const CONVERGENCE_SEEDS: u64 = 10;
const CONVERGENCE_EPSILON: f64 = 0.05;
const CONVERGENCE_MAX_ITERATIONS: u64 = 200_000;
const CONVERGENCE_CHECKPOINT: u64 = 100;
const CONVERGENCE_RATIO: f64 = 0.25;
const CONVERGENCE_MIN_PASSING: usize = 9;
const CONVERGENCE_TIME: Duration = Duration::from_secs(120);
/// Costs on the scale that matches the published iteration counts.
const WIDE_COST_HIGH: f64 = 50.0;

const TIGHT_EPSILON: f64 = 0.01;
const LOOSE_EPSILON: f64 = 0.1;
const MONOTONICITY_TIME: Duration = Duration::from_secs(60);

const FIXED_POINT_TOLERANCE: f64 = 1e-10;

const FLOW_STARTS: u64 = 10;
const FLOW_RADIUS: f64 = 10.0;
const FLOW_DT: f64 = 0.1;
const FLOW_STEPS: usize = 2000;
const FLOW_TOLERANCE: f64 = 1e-4;
const FLOW_TIME: Duration = Duration::from_secs(30);

const LIPSCHITZ_TRIALS: usize = 1000;
const LIPSCHITZ_LIMIT: f64 = 2.0 + 1e-9;

const NOISE_SAMPLES: usize = 100_000;

const SCHEDULE_TERMS: u64 = 1_000_000;
const SCHEDULE_TOLERANCE: f64 = 1e-3;
const SCHEDULE_MIN_SUM: f64 = 100.0;

const GRID_EPISODES: usize = 10_000;
const GRID_GAP_SE: f64 = 3.0;
const GRID_TIME: Duration = Duration::from_secs(180);

struct Outcome {
    id: &'static str,
    name: &'static str,
    passed: bool,
    detail: String,
    elapsed: Duration,
}

fn check(
    results: &mut Vec<Outcome>,
    id: &'static str,
    name: &'static str,
    limit: Option<Duration>,
    f: impl FnOnce() -> (bool, String),
) {
    let start = Instant::now();
    let (mut passed, mut detail) = f();
    let elapsed = start.elapsed();
    if let Some(limit) = limit {
        if elapsed > limit {
            passed = false;
            detail.push_str(&format!("; over the {limit:?} limit"));
        }
    }
    println!(
        "{} {:>3}  {:<34} {:>8.2}s  {}",
        if passed { "PASS" } else { "FAIL" },
        id,
        name,
        elapsed.as_secs_f64(),
        detail
    );
    results.push(Outcome {
        id,
        name,
        passed,
        detail,
        elapsed,
    });
}

fn wide_cost_instance(horizon: usize, states: usize, actions: usize, seed: u64) -> FiniteHorizonMdp {
    generate(&RandomMdpSpec {
        cost_high: WIDE_COST_HIGH,
        terminal_cost_high: WIDE_COST_HIGH,
        ..RandomMdpSpec::setting(horizon, states, actions, seed)
    })
    .unwrap()
}

fn unit_scale(horizon: usize, states: usize, actions: usize, seed: u64) -> FiniteHorizonMdp {
    generate(&RandomMdpSpec::setting(horizon, states, actions, seed)).unwrap()
}

/// Trains with the DP oracle, counting iterations whose terminal layer is
/// not exactly `g_N`.
fn train(
    mdp: &FiniteHorizonMdp,
    exact: &QTable,
    config: &LearnerConfig,
    unpinned: &mut usize,
    observed: &mut u64,
) -> learner::TrainingOutcome {
    learner::run_observed(mdp, config, Some(exact), |_, q| {
        *observed += 1;
        if !q.terminal_is_pinned(mdp) {
            *unpinned += 1;
        }
    })
    .unwrap()
}

fn files(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in fs::read_dir(&d).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let key = path.strip_prefix(dir).unwrap().display().to_string();
                out.insert(key, fs::read(&path).unwrap());
            }
        }
    }
    out
}

fn fhq(args: &[&str]) -> i32 {
    Process::new(env!("CARGO_BIN_EXE_fhq"))
        .args(args)
        .output()
        .expect("running fhq")
        .status
        .code()
        .unwrap_or(-1)
}

fn main() {
    let mut results = Vec::new();
    // instances every fixed-point check runs on
    let mut instances: Vec<FiniteHorizonMdp> = Vec::new();
    let mut unpinned = 0usize;
    let mut observed = 0u64;

    check(&mut results, "1", "DP optimality vs enumeration", Some(DP_TIME), || {
        let mut worst: f64 = 0.0;
        for seed in 0..DP_INSTANCES {
            let k = seed as usize;
            let mdp = unit_scale(1 + k % 3, 2 + k % 3, 2 + k % 2, seed);
            let gap = dp::solve(&mdp)
                .unwrap()
                .sup_distance(&brute_force_optimal_q(&mdp).unwrap())
                .unwrap();
            worst = worst.max(gap);
            instances.push(mdp);
        }
        (worst <= DP_TOLERANCE, format!("{DP_INSTANCES} instances, max gap {worst:.2e}"))
    });

    check(&mut results, "2", "FHQL convergence (10,5,5)", Some(CONVERGENCE_TIME), || {
        let (mut terminated, mut shrunk) = (0, 0);
        let mut worst_ratio: f64 = 0.0;
        let mut iterations = Vec::new();
        for seed in 0..CONVERGENCE_SEEDS {
            let mdp = wide_cost_instance(10, 5, 5, seed);
            let exact = dp::solve(&mdp).unwrap();
            let config = LearnerConfig {
                epsilon: CONVERGENCE_EPSILON,
                max_iterations: CONVERGENCE_MAX_ITERATIONS,
                trace_stride: CONVERGENCE_CHECKPOINT,
                seed,
                ..LearnerConfig::default()
            };
            let out = train(&mdp, &exact, &config, &mut unpinned, &mut observed);
            if out.converged && out.iterations < CONVERGENCE_MAX_ITERATIONS {
                terminated += 1;
            }
            let early = out.trace.at(CONVERGENCE_CHECKPOINT).and_then(|r| r.error);
            let last = out.trace.last().and_then(|r| r.error);
            if let (Some(early), Some(last)) = (early, last) {
                let ratio = last / early;
                worst_ratio = worst_ratio.max(ratio);
                if ratio <= CONVERGENCE_RATIO {
                    shrunk += 1;
                }
            }
            iterations.push(out.iterations);
            instances.push(mdp);
        }
        let total = CONVERGENCE_SEEDS as usize;
        (
            terminated == total && shrunk >= CONVERGENCE_MIN_PASSING,
            format!(
                "terminated {terminated}/{total}, error ratio ≤ {CONVERGENCE_RATIO} on {shrunk}/{total} \
                 (worst {worst_ratio:.3}), iterations {}..{}",
                iterations.iter().min().unwrap(),
                iterations.iter().max().unwrap()
            ),
        )
    });

    check(&mut results, "3", "tolerance monotonicity", Some(MONOTONICITY_TIME), || {
        let mdp = wide_cost_instance(10, 5, 5, 0);
        let exact = dp::solve(&mdp).unwrap();
        let final_error = |epsilon, unpinned: &mut usize, observed: &mut u64| {
            let config = LearnerConfig {
                epsilon,
                trace_stride: 1000,
                ..LearnerConfig::default()
            };
            let out = train(&mdp, &exact, &config, unpinned, observed);
            (out.q.sup_distance(&exact).unwrap(), out.iterations)
        };
        let (tight, tight_iters) = final_error(TIGHT_EPSILON, &mut unpinned, &mut observed);
        let (loose, loose_iters) = final_error(LOOSE_EPSILON, &mut unpinned, &mut observed);
        (
            tight <= loose,
            format!(
                "ε={TIGHT_EPSILON}: {tight:.4} after {tight_iters}; ε={LOOSE_EPSILON}: {loose:.4} after {loose_iters}"
            ),
        )
    });

    check(&mut results, "4", "terminal pinning", None, || {
        (
            unpinned == 0 && observed > 0,
            format!("{unpinned} unpinned of {observed} iterates across criteria 2-3"),
        )
    });

    let flow_instance = unit_scale(10, 5, 5, 1);
    let noise_instance = unit_scale(5, 4, 3, 1);

    check(&mut results, "5", "fixed point of h, origin of h∞", None, || {
        instances.push(flow_instance.clone());
        instances.push(noise_instance.clone());
        let (mut worst, mut origin): (f64, f64) = (0.0, 0.0);
        for mdp in &instances {
            let exact = dp::solve(mdp).unwrap();
            worst = worst.max(h_field(mdp, &exact).unwrap().sup_norm());
            origin = origin.max(h_infinity_field(mdp, &QTable::zeros_for(mdp)).unwrap().sup_norm());
        }
        (
            worst <= FIXED_POINT_TOLERANCE && origin == 0.0,
            format!("{} instances, max ‖h(Q_dp)‖ {worst:.2e}, max ‖h∞(0)‖ {origin}", instances.len()),
        )
    });

    check(&mut results, "6", "Euler flow stability (10,5,5)", Some(FLOW_TIME), || {
        let mut worst = [0.0f64; 2];
        for (k, kind) in [FieldKind::H, FieldKind::HInfinity].into_iter().enumerate() {
            for start in 0..FLOW_STARTS {
                let mut r = rng::substream(7, domain::FLOW_STARTS, start + 100 * k as u64, 0);
                let q0 = random_start(&flow_instance, kind, FLOW_RADIUS, &mut r);
                let flow = euler_flow(&flow_instance, &q0, kind, FLOW_DT, FLOW_STEPS).unwrap();
                worst[k] = worst[k].max(*flow.distances.last().unwrap());
            }
        }
        (
            worst.iter().all(|&d| d <= FLOW_TOLERANCE),
            format!(
                "{FLOW_STARTS} starts each; max final distance h {:.2e}, h∞ {:.2e}",
                worst[0], worst[1]
            ),
        )
    });

    check(&mut results, "7", "Lipschitz bound", None, || {
        let probe = |kind| {
            lipschitz_probe(&flow_instance, kind, LIPSCHITZ_TRIALS, FLOW_RADIUS, 3, Execution::default())
                .unwrap()
                .max_ratio
        };
        let (h, h_inf) = (probe(FieldKind::H), probe(FieldKind::HInfinity));
        (
            h <= LIPSCHITZ_LIMIT && h_inf <= LIPSCHITZ_LIMIT,
            format!("{LIPSCHITZ_TRIALS} pairs; max ratio h {h:.4}, h∞ {h_inf:.4}"),
        )
    });

    check(&mut results, "8", "martingale noise (5,4,3)", None, || {
        let exact = dp::solve(&noise_instance).unwrap();
        let report =
            martingale_noise_probe(&noise_instance, &exact, NOISE_SAMPLES, 11, Execution::default())
                .unwrap();
        let worst_moment = report
            .components
            .iter()
            .map(|c| c.second_moment)
            .fold(0.0, f64::max);
        (
            report.passes(),
            format!(
                "{} components; mean failures {}/{} allowed; moment failures {}; max second moment {:.3} ≤ {:.3}",
                report.components.len(),
                report.mean_failures,
                report.allowed_mean_failures,
                report.moment_failures,
                worst_moment,
                report.second_moment_bound
            ),
        )
    });

    check(&mut results, "9", "step schedule", None, || {
        let schedule = StepSchedule::default();
        let (sum, sum_sq) = schedule.partial_sums(SCHEDULE_TERMS);
        let limit = schedule.square_sum_limit();
        (
            (sum_sq - limit).abs() <= SCHEDULE_TOLERANCE && sum >= SCHEDULE_MIN_SUM,
            format!("Σa² = {sum_sq:.6} vs Lπ²/6 = {limit:.6}; Σa = {sum:.2}"),
        )
    });

    check(&mut results, "10", "smart grid ordering (10,4,4,4)", Some(GRID_TIME), || {
        let config: ExperimentConfig = serde_json::from_value(serde_json::json!({
            "instance": {"grid": {"horizon": 10, "d_max": 4, "b_max": 4, "p_max": 4, "seed": 1}},
            "learner": {"seed": 1, "trace_stride": 1000},
            "evaluation": {"episodes": GRID_EPISODES, "compare_renewables": true}
        }))
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let report: GridReport =
            run_smart_grid_experiment(&config, dir.path(), RunOptions::default()).unwrap();
        let InstanceSpec::Grid(grid) = &config.instance else { unreachable!() };
        let off = grid.label();
        let on = format!("{off}+renewables");
        let row = |s: &str, a: &str| report.find(s, a).unwrap();
        let separated = |a: &fhq_harness::ComparisonRow, b: &fhq_harness::ComparisonRow| {
            b.avg_cost - a.avg_cost > GRID_GAP_SE * (a.std_err.powi(2) + b.std_err.powi(2)).sqrt()
        };
        let (fhql, demand, battery) = (row(&off, "fhql"), row(&off, "fill_demand"), row(&off, "fill_battery"));
        let fhql_on = row(&on, "fhql");
        let ordered = separated(fhql, demand) && separated(demand, battery);
        (
            ordered && fhql_on.avg_cost < fhql.avg_cost,
            format!(
                "FHQL {:.3}±{:.3} < fill-demand {:.3}±{:.3} < fill-battery {:.3}±{:.3}; with renewables FHQL {:.3}±{:.3}",
                fhql.avg_cost, fhql.std_err, demand.avg_cost, demand.std_err,
                battery.avg_cost, battery.std_err, fhql_on.avg_cost, fhql_on.std_err
            ),
        )
    });

    check(&mut results, "11", "CLI determinism", None, || {
        let work = tempfile::tempdir().unwrap();
        let root = work.path();
        let configs = [
            ("random", r#"{"instance": {"random": {"horizon": 4, "num_states": 3, "num_actions": 2, "cost_high": 10.0}}, "learner": {"trace_stride": 5}}"#),
            ("grid", r#"{"instance": {"grid": {"horizon": 4, "d_max": 2, "b_max": 2, "p_max": 2}}, "learner": {"trace_stride": 50}, "evaluation": {"episodes": 500}}"#),
            ("diag", r#"{"instance": {"random": {"horizon": 4, "num_states": 3, "num_actions": 2}}, "diagnostics": {"lipschitz_trials": 100, "noise_samples": 2000, "flow_steps": 1500}}"#),
        ];
        for (name, text) in configs {
            fs::write(root.join(format!("{name}.json")), text).unwrap();
        }
        let runs: [(&str, &str, &[&str]); 6] = [
            ("solve-dp", "random", &[]),
            ("train", "random", &[]),
            ("random-mdp", "random", &[]),
            ("random-mdp", "random", &["--replicas", "3"]),
            ("smart-grid", "grid", &[]),
            ("diagnostics", "diag", &[]),
        ];
        let mut problems = Vec::new();
        let mut compared = 0;
        for (k, (sub, config, extra)) in runs.iter().enumerate() {
            let config = root.join(format!("{config}.json"));
            let outs = [root.join(format!("run{k}a")), root.join(format!("run{k}b"))];
            for out in &outs {
                let mut args = vec![*sub, "--config", config.to_str().unwrap(), "--seed", "5", "--out", out.to_str().unwrap()];
                args.extend_from_slice(extra);
                let code = fhq(&args);
                if code != 0 {
                    problems.push(format!("{sub} exited {code}"));
                }
            }
            let (a, b) = (files(&outs[0]), files(&outs[1]));
            if a.is_empty() || a != b {
                problems.push(format!("{sub} {extra:?}: outputs differ"));
            }
            compared += a.len();
        }
        (
            problems.is_empty(),
            if problems.is_empty() {
                format!("{} runs, {compared} files byte-identical", runs.len())
            } else {
                problems.join("; ")
            },
        )
    });

    check(&mut results, "11b", "CLI exit codes", None, || {
        let work = tempfile::tempdir().unwrap();
        let root = work.path();
        let mdp = unit_scale(2, 2, 2, 0);
        let mut doc: serde_json::Value = serde_json::from_str(&mdp.to_json().unwrap()).unwrap();
        doc["transition"][0][1][0] = serde_json::json!([0.5, 0.4]);
        fs::write(root.join("broken.json"), doc.to_string()).unwrap();
        fs::write(root.join("diag.json"), r#"{"instance": {"file": "broken.json"}}"#).unwrap();
        fs::write(root.join("bad.json"), r#"{"instance": {"random": {"horizon": 0}}}"#).unwrap();
        let out = root.join("out");
        let out = out.to_str().unwrap();
        let corrupted = fhq(&["diagnostics", "--config", root.join("diag.json").to_str().unwrap(), "--out", out]);
        let invalid = fhq(&["train", "--config", root.join("bad.json").to_str().unwrap(), "--out", out]);
        let missing = fhq(&["train", "--config", root.join("nope.json").to_str().unwrap(), "--out", out]);
        (
            corrupted == 2 && invalid == 1 && missing == 1,
            format!("corrupted kernel → {corrupted}, invalid config → {invalid}, missing config → {missing}"),
        )
    });

    let failed: Vec<_> = results.iter().filter(|r| !r.passed).collect();
    let total: f64 = results.iter().map(|r| r.elapsed.as_secs_f64()).sum();
    println!(
        "\nacceptance: {} passed, {} failed ({total:.1}s)",
        results.len() - failed.len(),
        failed.len()
    );
    for r in &failed {
        println!("  failed {} {}: {}", r.id, r.name, r.detail);
    }
    if !failed.is_empty() {
        std::process::exit(1);
    }
}
