//! Numerical checks on the mean-field ODE `q̇ = h(q)` behind Q-learning.
//!
//! `h_n(i, a) = Σ_j p_n(i, a, j)(g_n(i, a, j) + min_b Q_{n+1}(j, b)) − Q_n(i, a)`
//! for `n < N` and `h_N ≡ 0`. Its scaled limit `h_∞(q) = lim h(r q) / r`
//! drops the cost term. The optimal Q-table is the unique zero of `h`; the
//! origin is the unique zero of `h_∞`. Both fields are 2-Lipschitz in the
//! sup norm, and the sampling noise around `h` is a martingale difference
//! whose second moment grows at most quadratically in `‖Q‖∞`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dp::{self, stage_min};
use crate::rng::{self, domain};
use crate::{Error, Execution, FiniteHorizonMdp, QTable, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FieldKind {
    H,
    HInfinity,
}

/// Sup-norm Lipschitz constant of both fields.
pub const LIPSCHITZ_BOUND: f64 = 2.0;

pub fn h_field(mdp: &FiniteHorizonMdp, q: &QTable) -> Result<QTable> {
    field(mdp, q, FieldKind::H)
}

pub fn h_infinity_field(mdp: &FiniteHorizonMdp, q: &QTable) -> Result<QTable> {
    field(mdp, q, FieldKind::HInfinity)
}

pub fn field(mdp: &FiniteHorizonMdp, q: &QTable, kind: FieldKind) -> Result<QTable> {
    let cost_weight = match kind {
        FieldKind::H => 1.0,
        FieldKind::HInfinity => 0.0,
    };
    let mut out = dp::backup_weighted(mdp, q, cost_weight, false)?;
    let horizon = mdp.horizon();
    for n in 0..horizon {
        for i in 0..mdp.num_states() {
            for &a in mdp.feasible_actions(i) {
                out.set(n, i, a, out.get(n, i, a) - q.get(n, i, a));
            }
        }
    }
    for i in 0..mdp.num_states() {
        for &a in mdp.feasible_actions(i) {
            out.set(horizon, i, a, 0.0);
        }
    }
    Ok(out)
}

/// `‖h(r q) / r − h_∞(q)‖∞`; bounded by `max |g_n| / r`.
pub fn scaled_field_gap(mdp: &FiniteHorizonMdp, q: &QTable, r: f64) -> Result<f64> {
    let scaled = h_field(mdp, &q.scaled(r))?.scaled(1.0 / r);
    scaled.sup_distance(&h_infinity_field(mdp, q)?)
}

/// The zero the flow of `kind` is attracted to.
pub fn equilibrium(mdp: &FiniteHorizonMdp, kind: FieldKind) -> Result<QTable> {
    match kind {
        FieldKind::H => dp::solve(mdp),
        FieldKind::HInfinity => {
            mdp.ensure_valid()?;
            Ok(QTable::zeros_for(mdp))
        }
    }
}

/// Uniform draw in the sup-norm ball of `radius` on every feasible entry.
fn random_table(mdp: &FiniteHorizonMdp, radius: f64, rng: &mut impl Rng) -> QTable {
    let mut q = QTable::zeros_for(mdp);
    for n in 0..=mdp.horizon() {
        for i in 0..mdp.num_states() {
            for &a in mdp.feasible_actions(i) {
                q.set(n, i, a, radius * (2.0 * rng::unit(rng) - 1.0));
            }
        }
    }
    q
}

/// A random starting point for [`euler_flow`]: decision stages uniform in
/// the ball of `radius`, terminal layer on the field's equilibrium (`g_N`
/// for `h`, zero for `h_∞`), since the flow never moves it.
pub fn random_start(
    mdp: &FiniteHorizonMdp,
    kind: FieldKind,
    radius: f64,
    rng: &mut impl Rng,
) -> QTable {
    let mut q = random_table(mdp, radius, rng);
    match kind {
        FieldKind::H => q.pin_terminal(mdp),
        FieldKind::HInfinity => {
            let horizon = mdp.horizon();
            for i in 0..mdp.num_states() {
                for &a in mdp.feasible_actions(i) {
                    q.set(horizon, i, a, 0.0);
                }
            }
        }
    }
    q
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldProbeReport {
    pub field_kind: FieldKind,
    pub trials: usize,
    pub radius: f64,
    /// Largest `‖field(q) − field(q′)‖∞ / ‖q − q′‖∞` seen.
    pub max_ratio: f64,
}

impl FieldProbeReport {
    pub fn within_bound(&self) -> bool {
        self.max_ratio <= LIPSCHITZ_BOUND + 1e-9
    }
}

/// Empirical Lipschitz ratio over `trials` random pairs in the ball of
/// `radius`. Trial `t` uses its own sub-stream, so the report does not
/// depend on `exec`.
pub fn lipschitz_probe(
    mdp: &FiniteHorizonMdp,
    kind: FieldKind,
    trials: usize,
    radius: f64,
    seed: u64,
    exec: Execution,
) -> Result<FieldProbeReport> {
    if trials == 0 || !(radius > 0.0) {
        return Err(Error::Config("lipschitz probe needs trials ≥ 1 and radius > 0".into()));
    }
    let ratios = exec.map_indexed(trials, |t| -> Result<f64> {
        let mut rng = rng::substream(seed, domain::LIPSCHITZ, t as u64, 0);
        loop {
            let a = random_table(mdp, radius, &mut rng);
            let b = random_table(mdp, radius, &mut rng);
            let gap = a.sup_distance(&b)?;
            if gap == 0.0 {
                continue;
            }
            let fa = field(mdp, &a, kind)?;
            let fb = field(mdp, &b, kind)?;
            return Ok(fa.sup_distance(&fb)? / gap);
        }
    });
    let mut max_ratio: f64 = 0.0;
    for r in ratios {
        max_ratio = max_ratio.max(r?);
    }
    Ok(FieldProbeReport {
        field_kind: kind,
        trials,
        radius,
        max_ratio,
    })
}

#[derive(Debug, Clone)]
pub struct EulerFlow {
    pub final_q: QTable,
    /// Sup-norm distance to the equilibrium after each step.
    pub distances: Vec<f64>,
}

/// Forward Euler `q ← q + dt · field(q)` for `steps` steps.
pub fn euler_flow(
    mdp: &FiniteHorizonMdp,
    q0: &QTable,
    kind: FieldKind,
    dt: f64,
    steps: usize,
) -> Result<EulerFlow> {
    if !(dt > 0.0 && dt <= 1.0) || steps == 0 {
        return Err(Error::Config(format!(
            "euler flow needs dt in (0, 1] and steps ≥ 1, got dt={dt}, steps={steps}"
        )));
    }
    q0.ensure_shape(mdp)?;
    let target = equilibrium(mdp, kind)?;
    let mut q = q0.clone();
    let mut distances = Vec::with_capacity(steps);
    for _ in 0..steps {
        let f = field(mdp, &q, kind)?;
        for (v, d) in q.as_mut_slice().iter_mut().zip(f.as_slice()) {
            *v += dt * d;
        }
        distances.push(q.sup_distance(&target)?);
    }
    Ok(EulerFlow {
        final_q: q,
        distances,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseComponent {
    pub stage: usize,
    pub state: usize,
    pub action: usize,
    pub mean: f64,
    pub second_moment: f64,
    pub mean_ok: bool,
    pub moment_ok: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseProbeReport {
    pub samples: usize,
    pub q_sup_norm: f64,
    /// `C = 2 (‖g‖∞ + 1)² + 2`.
    pub bound_constant: f64,
    /// `C (1 + ‖Q‖∞²)`, the cap on every component's second moment.
    pub second_moment_bound: f64,
    pub mean_failures: usize,
    pub allowed_mean_failures: usize,
    pub moment_failures: usize,
    pub components: Vec<NoiseComponent>,
}

impl NoiseProbeReport {
    pub fn passes(&self) -> bool {
        self.mean_failures <= self.allowed_mean_failures && self.moment_failures == 0
    }
}

/// Samples the noise `M = (g + min_b Q_{n+1}(j, b)) − E[·]` of the sampled
/// backup at `q`, `samples` times per `(n, i, a)`.
///
/// The mean test is `|mean| ≤ 4 σ̂ / √samples`; one failure is tolerated per
/// started block of 10⁴ components. The terminal layer carries no noise and
/// is reported as exact zeros.
pub fn martingale_noise_probe(
    mdp: &FiniteHorizonMdp,
    q: &QTable,
    samples: usize,
    seed: u64,
    exec: Execution,
) -> Result<NoiseProbeReport> {
    if samples < 100 {
        return Err(Error::Config(format!("noise probe needs at least 100 samples, got {samples}")));
    }
    q.ensure_shape(mdp)?;
    mdp.ensure_valid()?;
    let (h, s) = (mdp.horizon(), mdp.num_states());

    let g_sup = mdp.max_abs_stage_cost();
    let q_sup = q.sup_norm();
    let bound_constant = 2.0 * (g_sup + 1.0).powi(2) + 2.0;
    let second_moment_bound = bound_constant * (1.0 + q_sup * q_sup);

    let next: Vec<Vec<f64>> = (1..=h).map(|n| stage_min(mdp, q, n)).collect();
    let mut keys = Vec::new();
    for n in 0..h {
        for i in 0..s {
            for &a in mdp.feasible_actions(i) {
                keys.push((n, i, a));
            }
        }
    }

    let measured = exec.map_indexed(keys.len(), |k| {
        let (n, i, a) = keys[k];
        let row = mdp.transition_row(n, i, a);
        let cost = mdp.cost_row(n, i, a);
        let target = |j: usize| cost[j] + next[n][j];
        let expected = dp::expected_target(mdp, n, i, a, &next[n], 1.0);
        let mut rng = rng::substream(seed, domain::NOISE, k as u64, 0);
        let (mut sum, mut sum_sq) = (0.0, 0.0);
        for _ in 0..samples {
            let j = rng::inverse_cdf(row, rng::unit(&mut rng));
            let m = target(j) - expected;
            sum += m;
            sum_sq += m * m;
        }
        let count = samples as f64;
        let mean = sum / count;
        let second_moment = sum_sq / count;
        let var = (second_moment - mean * mean).max(0.0) * count / (count - 1.0);
        let std_err = (var / count).sqrt();
        let mean_ok = if std_err > 0.0 {
            mean.abs() <= 4.0 * std_err
        } else {
            mean.abs() <= 1e-12 * (1.0 + expected.abs())
        };
        NoiseComponent {
            stage: n,
            state: i,
            action: a,
            mean,
            second_moment,
            mean_ok,
            moment_ok: second_moment <= second_moment_bound,
        }
    });

    let mut components = measured;
    for i in 0..s {
        for &a in mdp.feasible_actions(i) {
            components.push(NoiseComponent {
                stage: h,
                state: i,
                action: a,
                mean: 0.0,
                second_moment: 0.0,
                mean_ok: true,
                moment_ok: true,
            });
        }
    }
    let mean_failures = components.iter().filter(|c| !c.mean_ok).count();
    let moment_failures = components.iter().filter(|c| !c.moment_ok).count();
    Ok(NoiseProbeReport {
        samples,
        q_sup_norm: q_sup,
        bound_constant,
        second_moment_bound,
        mean_failures,
        allowed_mean_failures: components.len().div_ceil(10_000),
        moment_failures,
        components,
    })
}
