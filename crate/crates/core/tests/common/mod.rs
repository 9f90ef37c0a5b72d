//! Straightforward reference implementations, written against the public
//! accessors only, for cross-checking the optimised code paths.
#![allow(dead_code)]

use fhq_core::random_mdp::{generate, RandomMdpSpec};
use fhq_core::{FiniteHorizonMdp, QTable};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn instance(horizon: usize, states: usize, actions: usize, seed: u64) -> FiniteHorizonMdp {
    generate(&RandomMdpSpec::setting(horizon, states, actions, seed)).unwrap()
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Every feasible `(n, i, a)` with `n ≤ N`.
pub fn entries(mdp: &FiniteHorizonMdp) -> Vec<(usize, usize, usize)> {
    let mut out = Vec::new();
    for n in 0..=mdp.horizon() {
        for i in 0..mdp.num_states() {
            for &a in mdp.feasible_actions(i) {
                out.push((n, i, a));
            }
        }
    }
    out
}

pub fn min_next(mdp: &FiniteHorizonMdp, q: &QTable, n: usize, j: usize) -> f64 {
    let mut best = f64::INFINITY;
    for &b in mdp.feasible_actions(j) {
        if q.get(n, j, b) < best {
            best = q.get(n, j, b);
        }
    }
    best
}

/// `Σ_j p (g + min_b Q_{n+1}(j, b))`, summed term by term.
pub fn naive_target(mdp: &FiniteHorizonMdp, q: &QTable, n: usize, i: usize, a: usize) -> f64 {
    let mut total = 0.0;
    for j in 0..mdp.num_states() {
        total += mdp.p(n, i, a, j) * (mdp.g(n, i, a, j) + min_next(mdp, q, n + 1, j));
    }
    total
}

pub fn naive_sup(a: &QTable, b: &QTable) -> f64 {
    a.as_slice()
        .iter()
        .zip(b.as_slice())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

/// A table with every feasible entry uniform in `[-radius, radius]`.
pub fn random_table(mdp: &FiniteHorizonMdp, radius: f64, seed: u64) -> QTable {
    let mut r = rng(seed);
    let mut q = QTable::zeros_for(mdp);
    for (n, i, a) in entries(mdp) {
        q.set(n, i, a, r.random_range(-radius..=radius));
    }
    q
}

/// Linear-scan inverse CDF.
pub fn draw(row: &[f64], r: &mut impl Rng) -> usize {
    let u: f64 = r.random();
    let mut acc = 0.0;
    for (j, &p) in row.iter().enumerate() {
        acc += p;
        if u < acc {
            return j;
        }
    }
    row.iter().rposition(|&p| p > 0.0).unwrap()
}
