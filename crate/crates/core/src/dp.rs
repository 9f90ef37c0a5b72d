//! Exact backward induction in Q-values.
//!
//! `Q_N(i, a) = g_N(i)` and, for `k = N-1, …, 0`,
//! `Q_k(i, a) = Σ_j p_k(i, a, j) (g_k(i, a, j) + min_{b ∈ A(j)} Q_{k+1}(j, b))`.

use crate::{Execution, FiniteHorizonMdp, QTable, Result};

/// `min_{b ∈ A(j)} Q_n(j, b)` for every state `j`.
pub fn stage_min(mdp: &FiniteHorizonMdp, q: &QTable, n: usize) -> Vec<f64> {
    (0..mdp.num_states())
        .map(|j| q.min_over(n, j, mdp.feasible_actions(j)))
        .collect()
}

/// `Σ_j p_n(i, a, j) (cost_weight · g_n(i, a, j) + next_values[j])`.
#[inline]
pub(crate) fn expected_target(
    mdp: &FiniteHorizonMdp,
    n: usize,
    i: usize,
    a: usize,
    next_values: &[f64],
    cost_weight: f64,
) -> f64 {
    let p = mdp.transition_row(n, i, a);
    let g = mdp.cost_row(n, i, a);
    let mut acc = 0.0;
    for j in 0..p.len() {
        if p[j] != 0.0 {
            acc += p[j] * (cost_weight * g[j] + next_values[j]);
        }
    }
    acc
}

/// Fills stage `n` of `out` with the one-step backup of `next_values`.
fn backup_stage(
    mdp: &FiniteHorizonMdp,
    out: &mut QTable,
    n: usize,
    next_values: &[f64],
    cost_weight: f64,
    exec: Execution,
) {
    let s = mdp.num_states();
    let width = mdp.num_actions();
    let start = out.offset(n, 0);
    let stage = &mut out.as_mut_slice()[start..start + s * width];
    exec.chunks_max(stage, width, |i, row| {
        for &a in mdp.feasible_actions(i) {
            row[a] = expected_target(mdp, n, i, a, next_values, cost_weight);
        }
        0.0
    });
}

/// The exact Bellman backup of `q`: each stage `n < N` is recomputed from
/// `q`'s stage `n + 1`; the terminal layer becomes `g_N`.
pub fn backup(mdp: &FiniteHorizonMdp, q: &QTable) -> Result<QTable> {
    backup_weighted(mdp, q, 1.0, true)
}

/// Shared by [`backup`] and the cost-free limit field in diagnostics.
pub(crate) fn backup_weighted(
    mdp: &FiniteHorizonMdp,
    q: &QTable,
    cost_weight: f64,
    pin_terminal: bool,
) -> Result<QTable> {
    q.ensure_shape(mdp)?;
    let mut out = QTable::zeros_for(mdp);
    for n in 0..mdp.horizon() {
        let next = stage_min(mdp, q, n + 1);
        backup_stage(mdp, &mut out, n, &next, cost_weight, Execution::Sequential);
    }
    let horizon = mdp.horizon();
    for i in 0..mdp.num_states() {
        for &a in mdp.feasible_actions(i) {
            let v = if pin_terminal {
                mdp.terminal_cost()[i]
            } else {
                q.get(horizon, i, a)
            };
            out.set(horizon, i, a, v);
        }
    }
    Ok(out)
}

/// Optimal Q-values by a single backward sweep.
pub fn solve(mdp: &FiniteHorizonMdp) -> Result<QTable> {
    solve_with(mdp, Execution::default())
}

pub fn solve_with(mdp: &FiniteHorizonMdp, exec: Execution) -> Result<QTable> {
    mdp.ensure_valid()?;
    let mut q = QTable::initial(mdp);
    for n in (0..mdp.horizon()).rev() {
        let next = stage_min(mdp, &q, n + 1);
        backup_stage(mdp, &mut q, n, &next, 1.0, exec);
    }
    Ok(q)
}

/// `max |Q - backup(Q)|` over every feasible `(n, i, a)`, terminal layer
/// included. Zero exactly when `q` solves the recursion.
pub fn bellman_residual(mdp: &FiniteHorizonMdp, q: &QTable) -> Result<f64> {
    let b = backup(mdp, q)?;
    let mut worst: f64 = 0.0;
    for n in 0..=mdp.horizon() {
        for i in 0..mdp.num_states() {
            for &a in mdp.feasible_actions(i) {
                worst = worst.max((q.get(n, i, a) - b.get(n, i, a)).abs());
            }
        }
    }
    Ok(worst)
}
