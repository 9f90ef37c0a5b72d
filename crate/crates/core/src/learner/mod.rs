//! Finite-horizon Q-learning.
//!
//! Starting from `Q^0_n ≡ 0` (`n < N`) and `Q^0_N = g_N`, each iteration `m`
//! draws one next state `j ~ p_n(i, a, ·)` for every feasible `(n, i, a)` and
//! moves `Q_n(i, a)` towards `g_n(i, a, j) + min_b Q_{n+1}(j, b)` with step
//! size `a(m)`. All reads within an iteration see `Q^m`; the terminal layer is
//! reset to `g_N` after every update. Training stops once the sup-norm change
//! between consecutive iterates drops to `epsilon`.

mod sampler;
mod schedule;

use std::io::{self, Write};

use serde::{Deserialize, Serialize};

pub use schedule::{step_size, StepSchedule};

use crate::rng::{self, domain};
use crate::{Error, Execution, FiniteHorizonMdp, QTable, Result};
use sampler::KernelSampler;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UpdateMode {
    /// Every feasible `(n, i, a)` once per iteration, Jacobi reads.
    #[default]
    Synchronous,
    /// Uniformly drawn pairs updated one at a time with per-pair step
    /// counters; an iteration is as many ticks as there are pairs.
    SingleSample,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LearnerConfig {
    pub epsilon: f64,
    pub max_iterations: u64,
    pub schedule: StepSchedule,
    pub seed: u64,
    /// Record every k-th iteration in the trace (the final one always is).
    pub trace_stride: u64,
    pub update_mode: UpdateMode,
    pub execution: Execution,
}

impl Default for LearnerConfig {
    fn default() -> Self {
        Self {
            epsilon: 0.05,
            max_iterations: 200_000,
            schedule: StepSchedule::default(),
            seed: 0,
            trace_stride: 1,
            update_mode: UpdateMode::Synchronous,
            execution: Execution::default(),
        }
    }
}

impl LearnerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(Error::Config(format!("epsilon must be positive, got {}", self.epsilon)));
        }
        if self.max_iterations == 0 {
            return Err(Error::Config("max_iterations must be at least 1".into()));
        }
        if self.trace_stride == 0 {
            return Err(Error::Config("trace_stride must be at least 1".into()));
        }
        if self.schedule.block_length == 0 {
            return Err(Error::Config("schedule.block_length must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub iteration: u64,
    /// `‖Q^m − Q^{m−1}‖∞`
    pub delta: f64,
    /// `‖Q^m − Q_ref‖∞` when an oracle table was supplied.
    pub error: Option<f64>,
    pub step_size: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingTrace {
    pub records: Vec<TraceRecord>,
}

impl TrainingTrace {
    pub const CSV_HEADER: &'static str = "iteration,delta,error,step_size";

    /// CSV with header `iteration,delta,error,step_size`; `error` is left
    /// empty when no oracle was supplied.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "{}", Self::CSV_HEADER)?;
        for r in &self.records {
            match r.error {
                Some(e) => writeln!(w, "{},{},{},{}", r.iteration, r.delta, e, r.step_size)?,
                None => writeln!(w, "{},{},,{}", r.iteration, r.delta, r.step_size)?,
            }
        }
        Ok(())
    }

    pub fn at(&self, iteration: u64) -> Option<&TraceRecord> {
        self.records
            .binary_search_by_key(&iteration, |r| r.iteration)
            .ok()
            .map(|k| &self.records[k])
    }

    pub fn last(&self) -> Option<&TraceRecord> {
        self.records.last()
    }
}

#[derive(Debug, Clone)]
pub struct TrainingOutcome {
    pub q: QTable,
    pub trace: TrainingTrace,
    pub iterations: u64,
    /// True when the delta test fired, false when `max_iterations` ran out.
    pub converged: bool,
}

/// `(1 − α) q + α (g + min next_row)`, `next_row` being `Q_{n+1}(j, ·)`
/// restricted to `A(j)`.
pub fn q_update(current: f64, next_row: &[f64], cost: f64, alpha: f64) -> f64 {
    let next_min = next_row.iter().copied().fold(f64::INFINITY, f64::min);
    blend(current, cost + next_min, alpha)
}

#[inline]
fn blend(current: f64, target: f64, alpha: f64) -> f64 {
    (1.0 - alpha) * current + alpha * target
}

/// Draws `j ~ p_n(i, a, ·)` by inverse CDF; consumes one 64-bit word.
pub fn sample_next_state<R: rand::Rng>(
    mdp: &FiniteHorizonMdp,
    n: usize,
    i: usize,
    a: usize,
    rng: &mut R,
) -> usize {
    rng::inverse_cdf(mdp.transition_row(n, i, a), rng::unit(rng))
}

/// `‖q − q_ref‖∞`.
pub fn sup_error(q: &QTable, q_ref: &QTable) -> Result<f64> {
    q.sup_distance(q_ref)
}

/// Holds the per-run precomputation (kernel sampler, scratch buffers).
pub struct Learner<'a> {
    mdp: &'a FiniteHorizonMdp,
    config: LearnerConfig,
    sampler: KernelSampler,
    next_min: Vec<f64>,
    pair_index: Vec<(usize, usize, usize)>,
    pair_counts: Vec<u64>,
}

impl<'a> Learner<'a> {
    pub fn new(mdp: &'a FiniteHorizonMdp, config: &LearnerConfig) -> Result<Self> {
        config.validate()?;
        mdp.ensure_valid()?;
        Ok(Self {
            mdp,
            config: config.clone(),
            sampler: KernelSampler::new(mdp),
            next_min: vec![0.0; mdp.horizon() * mdp.num_states()],
            pair_index: Vec::new(),
            pair_counts: Vec::new(),
        })
    }

    /// Writes `Q^{m+1}` into `out` and returns `‖out − q‖∞`.
    pub fn step(&mut self, q: &QTable, out: &mut QTable, m: u64) -> Result<f64> {
        q.ensure_shape(self.mdp)?;
        out.ensure_shape(self.mdp)?;
        match self.config.update_mode {
            UpdateMode::Synchronous => Ok(self.synchronous(q, out, m)),
            UpdateMode::SingleSample => Ok(self.single_sample(q, out, m)),
        }
    }

    fn synchronous(&mut self, q: &QTable, out: &mut QTable, m: u64) -> f64 {
        let mdp = self.mdp;
        let (h, s, width) = (mdp.horizon(), mdp.num_states(), mdp.num_actions());
        let alpha = self.config.schedule.step_size(m);
        for n in 0..h {
            for j in 0..s {
                self.next_min[n * s + j] = q.min_over(n + 1, j, mdp.feasible_actions(j));
            }
        }
        let next_min = &self.next_min;
        let sampler = &self.sampler;
        let seed = self.config.seed;
        let old = q.as_slice();

        let decision = &mut out.as_mut_slice()[..h * s * width];
        let delta = self.config.execution.chunks_max(decision, width, |row, out_row| {
            let (n, i) = (row / s, row % s);
            // sub-stream m, words [row·|A|, (row+1)·|A|)
            let mut rng = rng::substream(seed, domain::LEARNER, m, (row * width) as u64);
            let costs = mdp.cost_row_all(n, i);
            let base = row * width;
            let mut worst: f64 = 0.0;
            for &a in mdp.feasible_actions(i) {
                let j = sampler.sample(n, i, a, rng::unit(&mut rng));
                let target = costs[a * s + j] + next_min[n * s + j];
                let prev = old[base + a];
                let next = blend(prev, target, alpha);
                out_row[a] = next;
                worst = worst.max((next - prev).abs());
            }
            worst
        });
        out.pin_terminal(mdp);
        delta
    }

    fn single_sample(&mut self, q: &QTable, out: &mut QTable, m: u64) -> f64 {
        use rand::Rng;

        let mdp = self.mdp;
        let s = mdp.num_states();
        if self.pair_index.is_empty() {
            for n in 0..mdp.horizon() {
                for i in 0..s {
                    for &a in mdp.feasible_actions(i) {
                        self.pair_index.push((n, i, a));
                    }
                }
            }
            self.pair_counts = vec![0; self.pair_index.len()];
        }
        out.as_mut_slice().copy_from_slice(q.as_slice());
        let mut rng = rng::substream(self.config.seed, domain::LEARNER ^ 1, m, 0);
        let pairs = self.pair_index.len();
        for _ in 0..pairs {
            let k = rng.random_range(0..pairs);
            let (n, i, a) = self.pair_index[k];
            let alpha = self.config.schedule.step_size(self.pair_counts[k]);
            self.pair_counts[k] += 1;
            let j = self.sampler.sample(n, i, a, rng::unit(&mut rng));
            let target = mdp.g(n, i, a, j) + out.min_over(n + 1, j, mdp.feasible_actions(j));
            let v = blend(out.get(n, i, a), target, alpha);
            out.set(n, i, a, v);
        }
        out.pin_terminal(mdp);
        out.sup_distance(q).unwrap_or(f64::INFINITY)
    }
}

/// One synchronous iteration `Q^m → Q^{m+1}` with step size `a(m)`.
pub fn sweep(
    q: &QTable,
    mdp: &FiniteHorizonMdp,
    m: u64,
    config: &LearnerConfig,
) -> Result<QTable> {
    let config = LearnerConfig {
        update_mode: UpdateMode::Synchronous,
        ..config.clone()
    };
    let mut learner = Learner::new(mdp, &config)?;
    let mut out = QTable::zeros_for(mdp);
    learner.step(q, &mut out, m)?;
    Ok(out)
}

pub fn run(
    mdp: &FiniteHorizonMdp,
    config: &LearnerConfig,
    oracle: Option<&QTable>,
) -> Result<TrainingOutcome> {
    run_observed(mdp, config, oracle, |_, _| {})
}

/// [`run`], calling `observer(m, &Q^m)` after every iteration.
pub fn run_observed(
    mdp: &FiniteHorizonMdp,
    config: &LearnerConfig,
    oracle: Option<&QTable>,
    mut observer: impl FnMut(u64, &QTable),
) -> Result<TrainingOutcome> {
    let mut learner = Learner::new(mdp, config)?;
    if let Some(reference) = oracle {
        reference.ensure_shape(mdp)?;
    }
    let mut q = QTable::initial(mdp);
    let mut next = q.clone();
    let mut trace = TrainingTrace::default();
    let mut converged = false;
    let mut iterations = 0;

    for m in 0..config.max_iterations {
        let delta = learner.step(&q, &mut next, m)?;
        std::mem::swap(&mut q, &mut next);
        iterations = m + 1;
        observer(iterations, &q);
        converged = delta <= config.epsilon;
        let last = converged || iterations == config.max_iterations;
        if iterations % config.trace_stride == 0 || last {
            trace.records.push(TraceRecord {
                iteration: iterations,
                delta,
                error: oracle.map(|r| q.sup_distance(r)).transpose()?,
                step_size: config.schedule.step_size(m),
            });
        }
        if converged {
            break;
        }
    }
    Ok(TrainingOutcome {
        q,
        trace,
        iterations,
        converged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::fixtures::{two_state, unit_chain};
    use crate::{dp, StageLayer};
    use rand::SeedableRng;

    #[test]
    fn q_update_examples() {
        assert_eq!(q_update(0.0, &[0.0], 1.0, 1.0), 1.0);
        assert_eq!(q_update(2.0, &[3.0, 5.0], 1.0, 0.5), 3.0);
        assert_eq!(q_update(2.0, &[3.0], 1.0, 0.0), 2.0);
    }

    #[test]
    fn point_mass_rows_always_hit_their_state() {
        let layer = StageLayer::from_fn(3, 1, |_, _, j| (if j == 2 { 1.0 } else { 0.0 }, 0.0));
        let mdp = FiniteHorizonMdp::stationary(1, 3, 1, vec![vec![0]; 3], layer, vec![0.0; 3]).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        assert!((0..1000).all(|_| sample_next_state(&mdp, 0, 1, 0, &mut rng) == 2));
    }

    #[test]
    fn seeded_sampling_is_repeatable() {
        let mdp = two_state();
        let draw = || {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(99);
            (0..64).map(|_| sample_next_state(&mdp, 0, 1, 0, &mut rng)).collect::<Vec<_>>()
        };
        assert_eq!(draw(), draw());
    }

    #[test]
    fn zero_is_a_fixed_point_of_zero_cost_sweeps() {
        let layer = StageLayer::from_fn(2, 2, |_, _, _| (0.5, 0.0));
        let mdp = FiniteHorizonMdp::stationary(3, 2, 2, vec![vec![0, 1]; 2], layer, vec![0.0; 2]).unwrap();
        let q = sweep(&QTable::initial(&mdp), &mdp, 0, &LearnerConfig::default()).unwrap();
        assert_eq!(q.sup_norm(), 0.0);
        let out = run(&mdp, &LearnerConfig::default(), None).unwrap();
        assert!(out.converged);
        assert_eq!(out.iterations, 1);
    }

    #[test]
    fn first_sweep_reads_the_previous_iterate() {
        let mdp = unit_chain(2);
        let q = sweep(&QTable::initial(&mdp), &mdp, 0, &LearnerConfig::default()).unwrap();
        assert_eq!(q.get(1, 0, 0), 1.0);
        // stage 0 saw the old Q_1 = 0
        assert_eq!(q.get(0, 0, 0), 1.0);
        assert_eq!(q.get(2, 0, 0), 0.0);
    }

    #[test]
    fn unit_chain_converges_to_horizon_cost() {
        let mdp = unit_chain(3);
        let config = LearnerConfig {
            epsilon: 1e-6,
            ..LearnerConfig::default()
        };
        let out = run(&mdp, &config, None).unwrap();
        assert!(out.converged);
        assert!((out.q.get(0, 0, 0) - 3.0).abs() < 1e-3);
    }

    #[test]
    fn trace_stride_and_final_record() {
        let mdp = two_state();
        let oracle = dp::solve(&mdp).unwrap();
        let config = LearnerConfig {
            epsilon: 1e-9,
            max_iterations: 95,
            trace_stride: 10,
            ..LearnerConfig::default()
        };
        let out = run(&mdp, &config, Some(&oracle)).unwrap();
        assert!(!out.converged);
        let its: Vec<u64> = out.trace.records.iter().map(|r| r.iteration).collect();
        assert_eq!(its, vec![10, 20, 30, 40, 50, 60, 70, 80, 90, 95]);
        assert!(out.trace.records.iter().all(|r| r.error.unwrap() >= 0.0 && r.delta >= 0.0));
        let mut csv = Vec::new();
        out.trace.write_csv(&mut csv).unwrap();
        let text = String::from_utf8(csv).unwrap();
        assert!(text.starts_with("iteration,delta,error,step_size\n10,"));

        let bare = run(&mdp, &config, None).unwrap();
        let mut csv = Vec::new();
        bare.trace.write_csv(&mut csv).unwrap();
        let line = String::from_utf8(csv).unwrap().lines().nth(1).unwrap().to_string();
        assert_eq!(line.split(',').nth(2), Some(""));
    }

    #[test]
    fn execution_modes_are_bit_identical() {
        let mdp = two_state();
        let mk = |execution| LearnerConfig {
            epsilon: 1e-3,
            seed: 5,
            execution,
            ..LearnerConfig::default()
        };
        let a = run(&mdp, &mk(Execution::Sequential), None).unwrap();
        let b = run(&mdp, &mk(Execution::Parallel), None).unwrap();
        assert_eq!(a.q, b.q);
        assert_eq!(a.trace, b.trace);
    }

    #[test]
    fn single_sample_mode_learns_the_chain() {
        // A batch that misses every still-moving pair has zero delta, so the
        // learner is stepped directly instead of relying on the stopping rule.
        let mdp = unit_chain(3);
        let config = LearnerConfig {
            update_mode: UpdateMode::SingleSample,
            seed: 3,
            ..LearnerConfig::default()
        };
        let mut learner = Learner::new(&mdp, &config).unwrap();
        let mut q = QTable::initial(&mdp);
        let mut next = q.clone();
        for m in 0..200 {
            learner.step(&q, &mut next, m).unwrap();
            std::mem::swap(&mut q, &mut next);
            assert!(q.terminal_is_pinned(&mdp));
        }
        assert!((q.get(0, 0, 0) - 3.0).abs() < 1e-9, "{}", q.get(0, 0, 0));
    }

    #[test]
    fn bad_configs_are_rejected() {
        let mdp = two_state();
        for config in [
            LearnerConfig { epsilon: 0.0, ..LearnerConfig::default() },
            LearnerConfig { max_iterations: 0, ..LearnerConfig::default() },
            LearnerConfig { trace_stride: 0, ..LearnerConfig::default() },
        ] {
            assert!(matches!(run(&mdp, &config, None), Err(Error::Config(_))));
        }
    }
}
