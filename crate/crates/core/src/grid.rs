//! Microgrid energy management as a finite-horizon MDP.
//!
//! State `(d, b, p)`: customer demand, battery charge and unit price, all
//! small integers. Action `(u1, u2)`: units bought from the main grid and
//! units drawn from the battery, with `u2 ≤ min(b, d)`. The stage cost is
//! `c (d − u2) + p u1`. After an action the battery becomes
//! `clamp(b + u1 − u2 + r, 0, b_max)` with `r` the renewable yield, while
//! demand and price move along their own Markov chains.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::rng::{self, domain};
use crate::{
    Error, Execution, FiniteHorizonMdp, NonstationaryPolicy, Result, StageLayer,
    ROW_SUM_TOLERANCE,
};

/// Largest grid that [`to_mdp`] will compile.
pub const MAX_GRID_STATES: usize = 100_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GridState {
    pub d: usize,
    pub b: usize,
    pub p: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GridAction {
    pub u1: usize,
    pub u2: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GridConfigDocument")]
pub struct GridConfig {
    pub horizon: usize,
    pub d_max: usize,
    pub b_max: usize,
    pub p_max: usize,
    pub r_max: usize,
    pub u1_max: usize,
    pub c: f64,
    pub demand_chain: Vec<Vec<f64>>,
    pub price_chain: Vec<Vec<f64>>,
    pub renewable_dist: Vec<f64>,
    pub renewables_enabled: bool,
    pub seed: u64,
}

/// Accepted JSON: everything but the sizes may be omitted.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct GridConfigDocument {
    horizon: usize,
    d_max: usize,
    b_max: usize,
    p_max: usize,
    #[serde(default = "default_r_max")]
    r_max: usize,
    u1_max: Option<usize>,
    #[serde(default = "default_c")]
    c: f64,
    demand_chain: Option<Vec<Vec<f64>>>,
    price_chain: Option<Vec<Vec<f64>>>,
    renewable_dist: Option<Vec<f64>>,
    #[serde(default)]
    renewables_enabled: bool,
    #[serde(default)]
    seed: u64,
}

fn default_r_max() -> usize {
    2
}

fn default_c() -> f64 {
    1.0
}

impl TryFrom<GridConfigDocument> for GridConfig {
    type Error = Error;

    fn try_from(doc: GridConfigDocument) -> Result<Self> {
        let config = GridConfig {
            horizon: doc.horizon,
            d_max: doc.d_max,
            b_max: doc.b_max,
            p_max: doc.p_max,
            r_max: doc.r_max,
            u1_max: doc.u1_max.unwrap_or(doc.d_max + doc.b_max),
            c: doc.c,
            demand_chain: doc.demand_chain.unwrap_or_else(|| lazy_random_walk(doc.d_max)),
            price_chain: doc.price_chain.unwrap_or_else(|| lazy_random_walk(doc.p_max)),
            renewable_dist: doc
                .renewable_dist
                .unwrap_or_else(|| vec![1.0 / (doc.r_max + 1) as f64; doc.r_max + 1]),
            renewables_enabled: doc.renewables_enabled,
            seed: doc.seed,
        };
        config.validate()?;
        Ok(config)
    }
}

/// Stay with probability 1/2, step ±1 with 1/4 each, reflecting at 0 and
/// `max`.
pub fn lazy_random_walk(max: usize) -> Vec<Vec<f64>> {
    let k = max + 1;
    let mut m = vec![vec![0.0; k]; k];
    if max == 0 {
        m[0][0] = 1.0;
        return m;
    }
    for x in 0..k {
        m[x][x] += 0.5;
        let up = if x == max { x - 1 } else { x + 1 };
        let down = if x == 0 { 1 } else { x - 1 };
        m[x][up] += 0.25;
        m[x][down] += 0.25;
    }
    m
}

impl GridConfig {
    /// Default dynamics for a `(horizon, d_max, b_max, p_max)` scenario:
    /// lazy random-walk demand and price, renewables uniform on `0..=2`
    /// (disabled), `c = 1`, `u1_max = d_max + b_max`.
    pub fn scenario(horizon: usize, d_max: usize, b_max: usize, p_max: usize) -> Self {
        let r_max = default_r_max();
        Self {
            horizon,
            d_max,
            b_max,
            p_max,
            r_max,
            u1_max: d_max + b_max,
            c: default_c(),
            demand_chain: lazy_random_walk(d_max),
            price_chain: lazy_random_walk(p_max),
            renewable_dist: vec![1.0 / (r_max + 1) as f64; r_max + 1],
            renewables_enabled: false,
            seed: 0,
        }
    }

    pub fn with_renewables(mut self, enabled: bool) -> Self {
        self.renewables_enabled = enabled;
        self
    }

    /// `"(h,d,b,p)"`.
    pub fn label(&self) -> String {
        format!("({},{},{},{})", self.horizon, self.d_max, self.b_max, self.p_max)
    }

    pub fn validate(&self) -> Result<()> {
        if self.horizon == 0 {
            return Err(Error::Config("grid horizon must be at least 1".into()));
        }
        if !(self.c.is_finite() && self.c >= 0.0) {
            return Err(Error::Config(format!("c must be finite and nonnegative, got {}", self.c)));
        }
        check_chain("demand_chain", &self.demand_chain, self.d_max + 1)?;
        check_chain("price_chain", &self.price_chain, self.p_max + 1)?;
        check_distribution("renewable_dist", &self.renewable_dist, self.r_max + 1)?;
        Ok(())
    }

    pub fn num_states(&self) -> usize {
        (self.d_max + 1) * (self.b_max + 1) * (self.p_max + 1)
    }

    fn u2_cap(&self) -> usize {
        self.d_max.min(self.b_max)
    }

    pub fn num_actions(&self) -> usize {
        (self.u1_max + 1) * (self.u2_cap() + 1)
    }

    pub fn state_index(&self, s: GridState) -> usize {
        (s.d * (self.b_max + 1) + s.b) * (self.p_max + 1) + s.p
    }

    pub fn state_at(&self, index: usize) -> GridState {
        let p = index % (self.p_max + 1);
        let rest = index / (self.p_max + 1);
        GridState {
            d: rest / (self.b_max + 1),
            b: rest % (self.b_max + 1),
            p,
        }
    }

    pub fn action_index(&self, a: GridAction) -> usize {
        a.u1 * (self.u2_cap() + 1) + a.u2
    }

    pub fn action_at(&self, index: usize) -> GridAction {
        GridAction {
            u1: index / (self.u2_cap() + 1),
            u2: index % (self.u2_cap() + 1),
        }
    }

    pub fn is_valid_state(&self, s: GridState) -> bool {
        s.d <= self.d_max && s.b <= self.b_max && s.p <= self.p_max
    }

    pub fn is_feasible(&self, s: GridState, a: GridAction) -> bool {
        a.u1 <= self.u1_max && a.u2 <= s.b.min(s.d)
    }
}

fn check_distribution(name: &str, probs: &[f64], len: usize) -> Result<()> {
    if probs.len() != len {
        return Err(Error::Config(format!("{name} has {} entries, expected {len}", probs.len())));
    }
    if probs.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
        return Err(Error::Config(format!("{name} has a negative or non-finite entry")));
    }
    let sum: f64 = probs.iter().sum();
    if (sum - 1.0).abs() > ROW_SUM_TOLERANCE {
        return Err(Error::Config(format!("{name} sums to {sum}")));
    }
    Ok(())
}

fn check_chain(name: &str, chain: &[Vec<f64>], len: usize) -> Result<()> {
    if chain.len() != len {
        return Err(Error::Config(format!("{name} has {} rows, expected {len}", chain.len())));
    }
    for (k, row) in chain.iter().enumerate() {
        check_distribution(&format!("{name} row {k}"), row, len)?;
    }
    Ok(())
}

/// `{(u1, u2) : u1 ≤ u1_max, u2 ≤ min(b, d)}`, in action-index order.
pub fn feasible_actions(config: &GridConfig, state: GridState) -> Vec<GridAction> {
    let cap = state.b.min(state.d);
    (0..=config.u1_max)
        .flat_map(|u1| (0..=cap).map(move |u2| GridAction { u1, u2 }))
        .collect()
}

/// `c (d − u2) + p u1`.
pub fn stage_cost(config: &GridConfig, state: GridState, action: GridAction) -> Result<f64> {
    if !config.is_feasible(state, action) {
        return Err(infeasible(config, 0, state, action));
    }
    Ok(config.c * (state.d - action.u2) as f64 + (state.p * action.u1) as f64)
}

fn infeasible(config: &GridConfig, stage: usize, state: GridState, action: GridAction) -> Error {
    Error::InfeasibleAction {
        stage,
        state: config.state_index(state),
        action: config.action_index(action),
    }
}

/// Battery update: add `u1`, remove `u2`, add `r`, cap at `b_max`, floor at 0.
pub fn next_battery(config: &GridConfig, b: usize, action: GridAction, r: usize) -> usize {
    let level = b as i64 + action.u1 as i64 - action.u2 as i64 + r as i64;
    level.min(config.b_max as i64).max(0) as usize
}

/// One environment step. Always consumes three uniforms (renewable yield,
/// demand, price) so that runs with and without renewables stay coupled.
pub fn transition<R: Rng>(
    config: &GridConfig,
    state: GridState,
    action: GridAction,
    rng: &mut R,
) -> GridState {
    debug_assert!(config.is_feasible(state, action));
    let r_draw = rng::inverse_cdf(&config.renewable_dist, rng::unit(rng));
    let r = if config.renewables_enabled { r_draw } else { 0 };
    let d = rng::inverse_cdf(&config.demand_chain[state.d], rng::unit(rng));
    let p = rng::inverse_cdf(&config.price_chain[state.p], rng::unit(rng));
    GridState {
        d,
        b: next_battery(config, state.b, action, r),
        p,
    }
}

/// Compiles the exact stationary kernel by marginalising renewables, demand
/// and price; `g_N ≡ 0`.
pub fn to_mdp(config: &GridConfig) -> Result<FiniteHorizonMdp> {
    config.validate()?;
    let s = config.num_states();
    if s > MAX_GRID_STATES {
        return Err(Error::StateSpaceTooLarge {
            count: s,
            limit: MAX_GRID_STATES,
        });
    }
    let width = config.num_actions();
    let renewables: Vec<(usize, f64)> = if config.renewables_enabled {
        config
            .renewable_dist
            .iter()
            .copied()
            .enumerate()
            .filter(|&(_, q)| q > 0.0)
            .collect()
    } else {
        vec![(0, 1.0)]
    };

    let mut layer = StageLayer::zeros(s, width);
    let mut feasible = Vec::with_capacity(s);
    for i in 0..s {
        let state = config.state_at(i);
        let actions = feasible_actions(config, state);
        for &action in &actions {
            let a = config.action_index(action);
            let cost = stage_cost(config, state, action)?;
            layer.cost_row_mut(i, a).fill(cost);
            let row = layer.transition_row_mut(i, a);
            for &(r, pr) in &renewables {
                let b = next_battery(config, state.b, action, r);
                for (d, &pd) in config.demand_chain[state.d].iter().enumerate() {
                    if pd == 0.0 {
                        continue;
                    }
                    for (p, &pp) in config.price_chain[state.p].iter().enumerate() {
                        if pp > 0.0 {
                            row[config.state_index(GridState { d, b, p })] += pr * pd * pp;
                        }
                    }
                }
            }
        }
        feasible.push(actions.iter().map(|&a| config.action_index(a)).collect());
    }
    FiniteHorizonMdp::stationary(config.horizon, s, width, feasible, layer, vec![0.0; s])
}

/// Buy the shortfall, serve what the battery can: `u1 = max(d − b, 0)`,
/// `u2 = min(d, b)`.
pub fn fill_demand_policy(config: &GridConfig, state: GridState) -> GridAction {
    GridAction {
        u1: state.d.saturating_sub(state.b).min(config.u1_max),
        u2: state.d.min(state.b),
    }
}

/// Buy the demand plus a full battery refill: `u1 = d + (b_max − b)`,
/// `u2 = min(d, b)`.
pub fn fill_battery_policy(config: &GridConfig, state: GridState) -> GridAction {
    GridAction {
        u1: (state.d + (config.b_max - state.b)).min(config.u1_max),
        u2: state.d.min(state.b),
    }
}

pub trait GridPolicy: Sync {
    fn action(&self, config: &GridConfig, stage: usize, state: GridState) -> GridAction;
}

pub struct FillDemand;

impl GridPolicy for FillDemand {
    fn action(&self, config: &GridConfig, _stage: usize, state: GridState) -> GridAction {
        fill_demand_policy(config, state)
    }
}

pub struct FillBattery;

impl GridPolicy for FillBattery {
    fn action(&self, config: &GridConfig, _stage: usize, state: GridState) -> GridAction {
        fill_battery_policy(config, state)
    }
}

/// A policy over the compiled MDP's state/action indices.
pub struct TabularGridPolicy<'a>(pub &'a NonstationaryPolicy);

impl GridPolicy for TabularGridPolicy<'_> {
    fn action(&self, config: &GridConfig, stage: usize, state: GridState) -> GridAction {
        config.action_at(self.0.action(stage, config.state_index(state)))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostEstimate {
    /// Mean cost per stage, `Σ costs / (episodes · N)`.
    pub mean: f64,
    pub std_err: f64,
    pub episodes: usize,
}

/// Simulates `episodes` episodes from uniformly drawn initial states.
///
/// Episode `e` runs on its own sub-stream of `seed`, so two policies
/// evaluated with the same seed face the same initial states and exogenous
/// draws.
pub fn evaluate_average_cost(
    config: &GridConfig,
    policy: &dyn GridPolicy,
    episodes: usize,
    seed: u64,
    exec: Execution,
) -> Result<CostEstimate> {
    config.validate()?;
    if episodes == 0 {
        return Err(Error::Config("need at least one evaluation episode".into()));
    }
    let per_episode = exec.map_indexed(episodes, |e| -> Result<f64> {
        let mut rng = rng::substream(seed, domain::GRID_EPISODES, e as u64, 0);
        let mut state = config.state_at(rng.random_range(0..config.num_states()));
        let mut total = 0.0;
        for n in 0..config.horizon {
            let action = policy.action(config, n, state);
            if !config.is_feasible(state, action) {
                return Err(infeasible(config, n, state, action));
            }
            total += stage_cost(config, state, action)?;
            state = transition(config, state, action, &mut rng);
        }
        Ok(total / config.horizon as f64)
    });
    let values = per_episode.into_iter().collect::<Result<Vec<f64>>>()?;
    let count = values.len() as f64;
    let mean = values.iter().sum::<f64>() / count;
    let std_err = if values.len() > 1 {
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (count - 1.0);
        (var / count).sqrt()
    } else {
        0.0
    };
    Ok(CostEstimate {
        mean,
        std_err,
        episodes,
    })
}
