use std::path::Path;

use anyhow::Result;
use fhq_core::diagnostics::{
    self, euler_flow, h_field, h_infinity_field, lipschitz_probe, martingale_noise_probe,
    random_start, FieldKind, FieldProbeReport, NoiseProbeReport,
};
use fhq_core::rng::{self, domain};
use fhq_core::{dp, FiniteHorizonMdp, QTable, ValidationReport};
use serde::{Deserialize, Serialize};

use crate::config::{DiagnosticsConfig, ExperimentConfig};
use crate::output::OutputDir;
use crate::par_map;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckSummary {
    pub name: String,
    pub passed: bool,
}

/// `report.json`: one entry per check that ran, in a fixed order. Checks
/// after a failed validation are not run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsReport {
    pub setting: String,
    pub seed: u64,
    pub passed: bool,
    pub checks: Vec<CheckSummary>,
}

impl DiagnosticsReport {
    pub fn check(&self, name: &str) -> Option<bool> {
        self.checks.iter().find(|c| c.name == name).map(|c| c.passed)
    }
}

#[derive(Serialize)]
struct ValidateCheck<'a> {
    passed: bool,
    report: &'a ValidationReport,
}

#[derive(Serialize)]
struct FixedPointCheck {
    passed: bool,
    tolerance: f64,
    /// `‖h(Q_dp)‖∞`
    h_residual: f64,
    /// `‖h_∞(0)‖∞`, which must be exactly zero.
    h_infinity_at_origin: f64,
}

#[derive(Serialize)]
struct LipschitzCheck {
    passed: bool,
    bound: f64,
    h: FieldProbeReport,
    h_infinity: FieldProbeReport,
}

#[derive(Serialize)]
struct FlowRun {
    start_distance: f64,
    final_distance: f64,
}

#[derive(Serialize)]
struct FlowField {
    field_kind: FieldKind,
    passed: bool,
    runs: Vec<FlowRun>,
}

#[derive(Serialize)]
struct EulerFlowCheck {
    passed: bool,
    dt: f64,
    steps: usize,
    radius: f64,
    tolerance: f64,
    fields: Vec<FlowField>,
}

#[derive(Serialize)]
struct NoiseCheck<'a> {
    passed: bool,
    /// The probe is run at the DP solution.
    probe: &'a NoiseProbeReport,
}

#[derive(Serialize)]
struct ScheduleCheck {
    passed: bool,
    block_length: u64,
    terms: u64,
    sum: f64,
    sum_of_squares: f64,
    square_sum_limit: f64,
    tolerance: f64,
    min_sum: f64,
}

#[derive(Serialize)]
struct GapPoint {
    scale: f64,
    gap: f64,
    bound: f64,
}

#[derive(Serialize)]
struct ScaledGapCheck {
    passed: bool,
    points: Vec<GapPoint>,
}

fn flow_field(
    mdp: &FiniteHorizonMdp,
    kind: FieldKind,
    d: &DiagnosticsConfig,
) -> Result<FlowField> {
    let target = diagnostics::equilibrium(mdp, kind)?;
    let stream_base = match kind {
        FieldKind::H => 0,
        FieldKind::HInfinity => 1 << 32,
    };
    let runs = par_map(d.flow_starts, |k| -> Result<FlowRun> {
        let mut rng = rng::substream(d.seed, domain::FLOW_STARTS, stream_base + k as u64, 0);
        let q0 = random_start(mdp, kind, d.radius, &mut rng);
        let flow = euler_flow(mdp, &q0, kind, d.flow_dt, d.flow_steps)?;
        Ok(FlowRun {
            start_distance: q0.sup_distance(&target)?,
            final_distance: *flow.distances.last().expect("steps ≥ 1"),
        })
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    Ok(FlowField {
        field_kind: kind,
        passed: runs.iter().all(|r| r.final_distance <= d.flow_tolerance),
        runs,
    })
}

/// Runs validation, fixed-point, Lipschitz, Euler-flow, martingale-noise,
/// step-schedule and scaled-field checks, writing one JSON file per check
/// plus `report.json`.
pub fn run_diagnostics(config: &ExperimentConfig, out: &Path) -> Result<DiagnosticsReport> {
    let mdp = config.instance.build()?;
    let d = &config.diagnostics;
    let exec = config.learner.execution;
    let dir = OutputDir::create(out)?;
    let mut report = DiagnosticsReport {
        setting: config.instance.label(&mdp),
        seed: d.seed,
        passed: true,
        checks: Vec::new(),
    };
    fn record(report: &mut DiagnosticsReport, name: &str, passed: bool) {
        report.passed &= passed;
        report.checks.push(CheckSummary {
            name: name.to_string(),
            passed,
        });
    }

    let validation = mdp.validate();
    let passed = validation.is_valid();
    dir.json(
        "validate.json",
        &ValidateCheck {
            passed,
            report: &validation,
        },
    )?;
    record(&mut report, "validate", passed);
    if !passed {
        dir.json("report.json", &report)?;
        return Ok(report);
    }

    let q_dp = dp::solve_with(&mdp, exec)?;
    let h_residual = h_field(&mdp, &q_dp)?.sup_norm();
    let h_infinity_at_origin = h_infinity_field(&mdp, &QTable::zeros_for(&mdp))?.sup_norm();
    let check = FixedPointCheck {
        passed: h_residual <= d.fixed_point_tolerance && h_infinity_at_origin == 0.0,
        tolerance: d.fixed_point_tolerance,
        h_residual,
        h_infinity_at_origin,
    };
    dir.json("fixed_point.json", &check)?;
    record(&mut report, "fixed_point", check.passed);

    let probe = |kind| lipschitz_probe(&mdp, kind, d.lipschitz_trials, d.radius, d.seed, exec);
    let (h, h_infinity) = (probe(FieldKind::H)?, probe(FieldKind::HInfinity)?);
    let check = LipschitzCheck {
        passed: h.within_bound() && h_infinity.within_bound(),
        bound: diagnostics::LIPSCHITZ_BOUND,
        h,
        h_infinity,
    };
    dir.json("lipschitz.json", &check)?;
    record(&mut report, "lipschitz", check.passed);

    let fields = vec![
        flow_field(&mdp, FieldKind::H, d)?,
        flow_field(&mdp, FieldKind::HInfinity, d)?,
    ];
    let check = EulerFlowCheck {
        passed: fields.iter().all(|f| f.passed),
        dt: d.flow_dt,
        steps: d.flow_steps,
        radius: d.radius,
        tolerance: d.flow_tolerance,
        fields,
    };
    dir.json("euler_flow.json", &check)?;
    record(&mut report, "euler_flow", check.passed);

    let probe = martingale_noise_probe(&mdp, &q_dp, d.noise_samples, d.seed, exec)?;
    let passed = probe.passes();
    dir.json("noise.json", &NoiseCheck { passed, probe: &probe })?;
    record(&mut report, "noise", passed);

    let schedule = &config.learner.schedule;
    let (sum, sum_of_squares) = schedule.partial_sums(d.schedule_terms);
    let square_sum_limit = schedule.square_sum_limit();
    let check = ScheduleCheck {
        passed: (sum_of_squares - square_sum_limit).abs() <= d.schedule_tolerance
            && sum >= d.schedule_min_sum,
        block_length: schedule.block_length,
        terms: d.schedule_terms,
        sum,
        sum_of_squares,
        square_sum_limit,
        tolerance: d.schedule_tolerance,
        min_sum: d.schedule_min_sum,
    };
    dir.json("step_schedule.json", &check)?;
    record(&mut report, "step_schedule", check.passed);

    let g_sup = mdp.max_abs_stage_cost();
    let points = d
        .gap_scales
        .iter()
        .map(|&r| {
            Ok(GapPoint {
                scale: r,
                gap: diagnostics::scaled_field_gap(&mdp, &q_dp, r)?,
                bound: g_sup / r,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let check = ScaledGapCheck {
        passed: points.iter().all(|p| p.gap <= p.bound * (1.0 + 1e-12) + 1e-12),
        points,
    };
    dir.json("scaled_gap.json", &check)?;
    record(&mut report, "scaled_gap", check.passed);

    dir.json("report.json", &report)?;
    Ok(report)
}
