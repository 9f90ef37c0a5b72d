//! Seeded random finite-horizon MDPs.
//!
//! Kernel rows are flat-Dirichlet (normalised i.i.d. standard exponentials),
//! stage costs `g_n(i, a, j)` are uniform on `[cost_low, cost_high]` and the
//! terminal cost on `[terminal_cost_low, terminal_cost_high]`. Every state
//! offers the same `num_actions` actions.

use rand_distr::{Distribution, Exp1, Uniform};
use serde::{Deserialize, Serialize};

use crate::rng::{self, domain};
use crate::{Error, FiniteHorizonMdp, Result, StageLayer};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RandomMdpSpec {
    pub horizon: usize,
    pub num_states: usize,
    pub num_actions: usize,
    pub cost_low: f64,
    pub cost_high: f64,
    pub terminal_cost_low: f64,
    pub terminal_cost_high: f64,
    pub seed: u64,
}

impl Default for RandomMdpSpec {
    fn default() -> Self {
        Self::setting(10, 5, 5, 0)
    }
}

impl RandomMdpSpec {
    /// `(N, |S|, |A|)` with unit cost ranges.
    pub fn setting(horizon: usize, num_states: usize, num_actions: usize, seed: u64) -> Self {
        Self {
            horizon,
            num_states,
            num_actions,
            cost_low: 0.0,
            cost_high: 1.0,
            terminal_cost_low: 0.0,
            terminal_cost_high: 1.0,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.horizon == 0 || self.num_states == 0 || self.num_actions == 0 {
            return Err(Error::Config(format!(
                "horizon, num_states and num_actions must be positive, got ({}, {}, {})",
                self.horizon, self.num_states, self.num_actions
            )));
        }
        let ranges = [
            ("cost", self.cost_low, self.cost_high),
            ("terminal cost", self.terminal_cost_low, self.terminal_cost_high),
        ];
        for (name, lo, hi) in ranges {
            if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                return Err(Error::Config(format!("{name} range [{lo}, {hi}] is not valid")));
            }
        }
        Ok(())
    }
}

pub fn generate(spec: &RandomMdpSpec) -> Result<FiniteHorizonMdp> {
    spec.validate()?;
    let (s, width) = (spec.num_states, spec.num_actions);
    let mut rng = rng::base(spec.seed, domain::GENERATOR);
    let cost = Uniform::new_inclusive(spec.cost_low, spec.cost_high)
        .map_err(|e| Error::Config(e.to_string()))?;
    let terminal = Uniform::new_inclusive(spec.terminal_cost_low, spec.terminal_cost_high)
        .map_err(|e| Error::Config(e.to_string()))?;

    let mut stages = Vec::with_capacity(spec.horizon);
    let mut weights = vec![0.0; s];
    for _ in 0..spec.horizon {
        let mut layer = StageLayer::zeros(s, width);
        for i in 0..s {
            for a in 0..width {
                for w in weights.iter_mut() {
                    let x: f64 = Exp1.sample(&mut rng);
                    // Exp1 can return exactly 0 only with vanishing probability
                    *w = x.max(f64::MIN_POSITIVE);
                }
                let total: f64 = weights.iter().sum();
                for (p, w) in layer.transition_row_mut(i, a).iter_mut().zip(&weights) {
                    *p = w / total;
                }
                for g in layer.cost_row_mut(i, a) {
                    *g = cost.sample(&mut rng);
                }
            }
        }
        stages.push(layer);
    }
    let terminal_cost = (0..s).map(|_| terminal.sample(&mut rng)).collect();
    FiniteHorizonMdp::new(s, width, vec![(0..width).collect(); s], stages, terminal_cost)
}
