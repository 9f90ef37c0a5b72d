//! Policies on Q-tables: greedy extraction, exact evaluation, and the
//! exhaustive optimum used to cross-check the DP solver.

use crate::dp::expected_target;
use crate::{Error, FiniteHorizonMdp, NonstationaryPolicy, QTable, Result, StageValueFunction};

/// Enumeration limit for [`brute_force_optimal_q`].
pub const MAX_ENUMERATED_POLICIES: u128 = 10_000_000;

/// `π_n(i) = argmin_{a ∈ A(i)} Q_n(i, a)`, ties to the lowest index.
pub fn greedy_policy(mdp: &FiniteHorizonMdp, q: &QTable) -> Result<NonstationaryPolicy> {
    q.ensure_shape(mdp)?;
    Ok(NonstationaryPolicy::from_fn(
        mdp.horizon(),
        mdp.num_states(),
        |n, i| q.argmin_over(n, i, mdp.feasible_actions(i)),
    ))
}

/// `J_n(i) = min_{a ∈ A(i)} Q_n(i, a)` for `n < N` and `J_N = g_N`.
pub fn q_to_value(mdp: &FiniteHorizonMdp, q: &QTable) -> Result<StageValueFunction> {
    q.ensure_shape(mdp)?;
    let (h, s) = (mdp.horizon(), mdp.num_states());
    let mut values = Vec::with_capacity((h + 1) * s);
    for n in 0..h {
        for i in 0..s {
            values.push(q.min_over(n, i, mdp.feasible_actions(i)));
        }
    }
    values.extend_from_slice(mdp.terminal_cost());
    Ok(StageValueFunction::from_values(h, s, values))
}

/// `Q_π`: the cost of taking action `a` in state `i` at stage `n`, then
/// following `π_{n+1}, …, π_{N-1}`.
///
/// `π_0` never enters the table: the first action is always the free one.
pub fn policy_q_evaluation(mdp: &FiniteHorizonMdp, pi: &NonstationaryPolicy) -> Result<QTable> {
    pi.ensure_feasible(mdp)?;
    let mut q = QTable::initial(mdp);
    let mut next: Vec<f64> = mdp.terminal_cost().to_vec();
    evaluate_into(mdp, &mut q, &mut next, |n, j| pi.action(n, j));
    Ok(q)
}

/// Backward pass shared with the brute-force enumerator. `next` must hold
/// the terminal cost on entry.
fn evaluate_into(
    mdp: &FiniteHorizonMdp,
    q: &mut QTable,
    next: &mut [f64],
    action: impl Fn(usize, usize) -> usize,
) {
    let s = mdp.num_states();
    for n in (0..mdp.horizon()).rev() {
        for i in 0..s {
            for &a in mdp.feasible_actions(i) {
                q.set(n, i, a, expected_target(mdp, n, i, a, next, 1.0));
            }
        }
        if n > 0 {
            for (j, v) in next.iter_mut().enumerate() {
                *v = q.get(n, j, action(n, j));
            }
        }
    }
}

/// Number of distinct policies that `Q_π` can tell apart: one choice per
/// `(n, i)` for stages `1..N`. Stage 0 choices leave `Q_π` unchanged.
pub fn distinguishable_policy_count(mdp: &FiniteHorizonMdp) -> u128 {
    let per_stage = (0..mdp.num_states())
        .try_fold(1u128, |acc, i| acc.checked_mul(mdp.feasible_actions(i).len() as u128));
    let stages = mdp.horizon().saturating_sub(1) as u32;
    per_stage
        .and_then(|p| p.checked_pow(stages))
        .unwrap_or(u128::MAX)
}

/// `Q*(n, i, a) = min_π Q_π(n, i, a)` by enumerating every deterministic
/// Markov policy. Exponential; only meant as an independent oracle.
pub fn brute_force_optimal_q(mdp: &FiniteHorizonMdp) -> Result<QTable> {
    mdp.ensure_valid()?;
    let count = distinguishable_policy_count(mdp);
    if count > MAX_ENUMERATED_POLICIES {
        return Err(Error::PolicySpaceTooLarge {
            count,
            limit: MAX_ENUMERATED_POLICIES,
        });
    }
    let (h, s) = (mdp.horizon(), mdp.num_states());

    // Odometer over (n, i) for n = 1..N; digit k indexes into A(i).
    let mut digits = vec![0usize; h.saturating_sub(1) * s];
    let choice = |digits: &[usize], n: usize, j: usize| {
        mdp.feasible_actions(j)[digits[(n - 1) * s + j]]
    };

    let mut best = QTable::zeros_for(mdp);
    best.as_mut_slice().fill(f64::INFINITY);
    let mut q = QTable::initial(mdp);
    let mut next = Vec::with_capacity(s);
    loop {
        next.clear();
        next.extend_from_slice(mdp.terminal_cost());
        evaluate_into(mdp, &mut q, &mut next, |n, j| choice(&digits, n, j));
        for n in 0..=h {
            for i in 0..s {
                for &a in mdp.feasible_actions(i) {
                    let v = q.get(n, i, a);
                    if v < best.get(n, i, a) {
                        best.set(n, i, a, v);
                    }
                }
            }
        }

        let mut k = 0;
        loop {
            if k == digits.len() {
                // infeasible entries were never touched
                best.as_mut_slice()
                    .iter_mut()
                    .filter(|v| v.is_infinite())
                    .for_each(|v| *v = 0.0);
                return Ok(best);
            }
            let j = k % s;
            digits[k] += 1;
            if digits[k] < mdp.feasible_actions(j).len() {
                break;
            }
            digits[k] = 0;
            k += 1;
        }
    }
}
