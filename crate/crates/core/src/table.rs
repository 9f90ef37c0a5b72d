use serde::{Deserialize, Serialize};

use crate::{Error, FiniteHorizonMdp, Result};

/// Q-values `Q_n(i, a)` for stages `0..=horizon`.
///
/// Storage is dense over the action index space; entries of infeasible
/// actions are never read by any operation and stay at zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QTable {
    horizon: usize,
    num_states: usize,
    num_actions: usize,
    values: Vec<f64>,
}

impl QTable {
    pub fn zeros(horizon: usize, num_states: usize, num_actions: usize) -> Self {
        Self {
            horizon,
            num_states,
            num_actions,
            values: vec![0.0; (horizon + 1) * num_states * num_actions],
        }
    }

    /// All-zero table shaped for `mdp` (terminal layer included).
    pub fn zeros_for(mdp: &FiniteHorizonMdp) -> Self {
        Self::zeros(mdp.horizon(), mdp.num_states(), mdp.num_actions())
    }

    /// Zero at every decision stage, `g_N(i)` on the terminal layer.
    pub fn initial(mdp: &FiniteHorizonMdp) -> Self {
        let mut q = Self::zeros_for(mdp);
        q.pin_terminal(mdp);
        q
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    #[inline]
    pub(crate) fn offset(&self, n: usize, i: usize) -> usize {
        (n * self.num_states + i) * self.num_actions
    }

    #[inline]
    pub fn get(&self, n: usize, i: usize, a: usize) -> f64 {
        self.values[self.offset(n, i) + a]
    }

    #[inline]
    pub fn set(&mut self, n: usize, i: usize, a: usize, value: f64) {
        let k = self.offset(n, i) + a;
        self.values[k] = value;
    }

    /// `Q_n(i, ·)` over the whole action index space.
    pub fn row(&self, n: usize, i: usize) -> &[f64] {
        let k = self.offset(n, i);
        &self.values[k..k + self.num_actions]
    }

    pub fn row_mut(&mut self, n: usize, i: usize) -> &mut [f64] {
        let k = self.offset(n, i);
        &mut self.values[k..k + self.num_actions]
    }

    /// Flat view, stage-major then state then action.
    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.values
    }

    /// `min_{a ∈ actions} Q_n(i, a)`.
    #[inline]
    pub fn min_over(&self, n: usize, i: usize, actions: &[usize]) -> f64 {
        let row = self.row(n, i);
        actions.iter().fold(f64::INFINITY, |m, &a| m.min(row[a]))
    }

    /// Lowest-index minimiser over `actions`.
    pub fn argmin_over(&self, n: usize, i: usize, actions: &[usize]) -> usize {
        let row = self.row(n, i);
        let mut best = actions[0];
        for &a in &actions[1..] {
            if row[a] < row[best] {
                best = a;
            }
        }
        best
    }

    pub fn shape_matches(&self, mdp: &FiniteHorizonMdp) -> bool {
        self.horizon == mdp.horizon()
            && self.num_states == mdp.num_states()
            && self.num_actions == mdp.num_actions()
    }

    pub(crate) fn ensure_shape(&self, mdp: &FiniteHorizonMdp) -> Result<()> {
        if self.shape_matches(mdp) {
            Ok(())
        } else {
            Err(Error::Shape(format!(
                "Q-table is (N={}, S={}, A={}), MDP is (N={}, S={}, A={})",
                self.horizon,
                self.num_states,
                self.num_actions,
                mdp.horizon(),
                mdp.num_states(),
                mdp.num_actions()
            )))
        }
    }

    fn ensure_same_shape(&self, other: &QTable) -> Result<()> {
        if (self.horizon, self.num_states, self.num_actions)
            == (other.horizon, other.num_states, other.num_actions)
        {
            Ok(())
        } else {
            Err(Error::Shape(format!(
                "Q-tables are (N={}, S={}, A={}) and (N={}, S={}, A={})",
                self.horizon,
                self.num_states,
                self.num_actions,
                other.horizon,
                other.num_states,
                other.num_actions
            )))
        }
    }

    /// Sets `Q_N(i, a) = g_N(i)` for every feasible pair.
    pub fn pin_terminal(&mut self, mdp: &FiniteHorizonMdp) {
        let n = self.horizon;
        for i in 0..self.num_states {
            let g = mdp.terminal_cost()[i];
            for &a in mdp.feasible_actions(i) {
                self.set(n, i, a, g);
            }
        }
    }

    /// Whether the terminal layer equals `g_N` exactly.
    pub fn terminal_is_pinned(&self, mdp: &FiniteHorizonMdp) -> bool {
        let n = self.horizon;
        (0..self.num_states).all(|i| {
            mdp.feasible_actions(i)
                .iter()
                .all(|&a| self.get(n, i, a) == mdp.terminal_cost()[i])
        })
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// `max |self - other|` over every entry.
    pub fn sup_distance(&self, other: &QTable) -> Result<f64> {
        self.ensure_same_shape(other)?;
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .fold(0.0, |m, (a, b)| m.max((a - b).abs())))
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn scaled(&self, factor: f64) -> QTable {
        let mut q = self.clone();
        q.values.iter_mut().for_each(|v| *v *= factor);
        q
    }
}

/// Stage values `J_n(i)` for `n = 0..=horizon`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageValueFunction {
    horizon: usize,
    num_states: usize,
    values: Vec<f64>,
}

impl StageValueFunction {
    pub(crate) fn from_values(horizon: usize, num_states: usize, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), (horizon + 1) * num_states);
        Self {
            horizon,
            num_states,
            values,
        }
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn get(&self, n: usize, i: usize) -> f64 {
        self.values[n * self.num_states + i]
    }

    pub fn stage(&self, n: usize) -> &[f64] {
        &self.values[n * self.num_states..(n + 1) * self.num_states]
    }
}

/// A per-stage action map `π_n(i)` for `n = 0..horizon`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct NonstationaryPolicy {
    horizon: usize,
    num_states: usize,
    actions: Vec<usize>,
}

impl NonstationaryPolicy {
    pub fn from_fn(
        horizon: usize,
        num_states: usize,
        mut f: impl FnMut(usize, usize) -> usize,
    ) -> Self {
        let mut actions = Vec::with_capacity(horizon * num_states);
        for n in 0..horizon {
            for i in 0..num_states {
                actions.push(f(n, i));
            }
        }
        Self {
            horizon,
            num_states,
            actions,
        }
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn action(&self, n: usize, i: usize) -> usize {
        self.actions[n * self.num_states + i]
    }

    pub fn stage(&self, n: usize) -> &[usize] {
        &self.actions[n * self.num_states..(n + 1) * self.num_states]
    }

    /// Checks shape and `π_n(i) ∈ A(i)` for every `(n, i)`.
    pub fn ensure_feasible(&self, mdp: &FiniteHorizonMdp) -> Result<()> {
        if self.horizon != mdp.horizon() || self.num_states != mdp.num_states() {
            return Err(Error::Shape(format!(
                "policy is (N={}, S={}), MDP is (N={}, S={})",
                self.horizon,
                self.num_states,
                mdp.horizon(),
                mdp.num_states()
            )));
        }
        for n in 0..self.horizon {
            for i in 0..self.num_states {
                let a = self.action(n, i);
                if !mdp.is_feasible(i, a) {
                    return Err(Error::InfeasibleAction {
                        stage: n,
                        state: i,
                        action: a,
                    });
                }
            }
        }
        Ok(())
    }
}
