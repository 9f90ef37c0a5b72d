use std::fmt;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Maximum allowed deviation of a kernel row sum from one.
pub const ROW_SUM_TOLERANCE: f64 = 1e-9;

/// Transition kernel and stage cost for one decision stage.
///
/// Both arrays are dense and indexed `[i][a][j]`. Rows of infeasible actions
/// are kept (all zero) so that indexing stays uniform.
#[derive(Debug, Clone, PartialEq)]
pub struct StageLayer {
    num_states: usize,
    num_actions: usize,
    transition: Vec<f64>,
    cost: Vec<f64>,
}

impl StageLayer {
    pub fn zeros(num_states: usize, num_actions: usize) -> Self {
        let len = num_states * num_actions * num_states;
        Self {
            num_states,
            num_actions,
            transition: vec![0.0; len],
            cost: vec![0.0; len],
        }
    }

    /// Builds a layer from `f(i, a, j) = (probability, cost)`.
    pub fn from_fn(
        num_states: usize,
        num_actions: usize,
        mut f: impl FnMut(usize, usize, usize) -> (f64, f64),
    ) -> Self {
        let mut layer = Self::zeros(num_states, num_actions);
        for i in 0..num_states {
            for a in 0..num_actions {
                for j in 0..num_states {
                    let (p, g) = f(i, a, j);
                    let k = layer.index(i, a, j);
                    layer.transition[k] = p;
                    layer.cost[k] = g;
                }
            }
        }
        layer
    }

    #[inline]
    fn index(&self, i: usize, a: usize, j: usize) -> usize {
        (i * self.num_actions + a) * self.num_states + j
    }

    #[inline]
    fn row_range(&self, i: usize, a: usize) -> std::ops::Range<usize> {
        let start = (i * self.num_actions + a) * self.num_states;
        start..start + self.num_states
    }

    pub fn set(&mut self, i: usize, a: usize, j: usize, probability: f64, cost: f64) {
        let k = self.index(i, a, j);
        self.transition[k] = probability;
        self.cost[k] = cost;
    }

    pub fn transition_row(&self, i: usize, a: usize) -> &[f64] {
        &self.transition[self.row_range(i, a)]
    }

    pub fn transition_row_mut(&mut self, i: usize, a: usize) -> &mut [f64] {
        let r = self.row_range(i, a);
        &mut self.transition[r]
    }

    pub fn cost_row(&self, i: usize, a: usize) -> &[f64] {
        &self.cost[self.row_range(i, a)]
    }

    /// Costs `g(i, ·, ·)` for all actions, laid out `[a][j]`.
    pub fn cost_block(&self, i: usize) -> &[f64] {
        let len = self.num_actions * self.num_states;
        &self.cost[i * len..(i + 1) * len]
    }

    pub fn cost_row_mut(&mut self, i: usize, a: usize) -> &mut [f64] {
        let r = self.row_range(i, a);
        &mut self.cost[r]
    }
}

/// A finite-horizon MDP with stage-dependent kernels and costs.
///
/// Stages `0..horizon` are decision stages; `horizon` itself is the terminal
/// instant, where only `terminal_cost` applies. Action sets depend on the
/// state but not on the stage. Stages may share a [`StageLayer`] (stationary
/// dynamics are stored once).
#[derive(Debug, Clone, PartialEq)]
pub struct FiniteHorizonMdp {
    num_states: usize,
    num_actions: usize,
    feasible: Vec<Vec<usize>>,
    layers: Vec<StageLayer>,
    stage_layer: Vec<usize>,
    terminal_cost: Vec<f64>,
}

impl FiniteHorizonMdp {
    /// One layer per stage; the horizon is `stages.len()`.
    ///
    /// Only structural consistency is checked here. Probabilistic invariants
    /// are reported by [`FiniteHorizonMdp::validate`].
    pub fn new(
        num_states: usize,
        num_actions: usize,
        feasible_actions: Vec<Vec<usize>>,
        stages: Vec<StageLayer>,
        terminal_cost: Vec<f64>,
    ) -> Result<Self> {
        let stage_layer = (0..stages.len()).collect();
        Self::assemble(
            num_states,
            num_actions,
            feasible_actions,
            stages,
            stage_layer,
            terminal_cost,
        )
    }

    /// The same layer at every stage.
    pub fn stationary(
        horizon: usize,
        num_states: usize,
        num_actions: usize,
        feasible_actions: Vec<Vec<usize>>,
        layer: StageLayer,
        terminal_cost: Vec<f64>,
    ) -> Result<Self> {
        Self::assemble(
            num_states,
            num_actions,
            feasible_actions,
            vec![layer],
            vec![0; horizon],
            terminal_cost,
        )
    }

    fn assemble(
        num_states: usize,
        num_actions: usize,
        mut feasible: Vec<Vec<usize>>,
        layers: Vec<StageLayer>,
        stage_layer: Vec<usize>,
        terminal_cost: Vec<f64>,
    ) -> Result<Self> {
        if num_states == 0 || num_actions == 0 {
            return Err(Error::Shape(format!(
                "need at least one state and one action, got {num_states} states and {num_actions} actions"
            )));
        }
        if feasible.len() != num_states {
            return Err(Error::Shape(format!(
                "feasible_actions has {} entries for {num_states} states",
                feasible.len()
            )));
        }
        for (i, set) in feasible.iter_mut().enumerate() {
            set.sort_unstable();
            set.dedup();
            if let Some(&a) = set.iter().find(|&&a| a >= num_actions) {
                return Err(Error::Shape(format!(
                    "state {i} lists action {a}, but there are only {num_actions} actions"
                )));
            }
        }
        if terminal_cost.len() != num_states {
            return Err(Error::Shape(format!(
                "terminal_cost has {} entries for {num_states} states",
                terminal_cost.len()
            )));
        }
        for (n, layer) in layers.iter().enumerate() {
            if layer.num_states != num_states || layer.num_actions != num_actions {
                return Err(Error::Shape(format!(
                    "layer {n} is {}x{}, expected {num_states}x{num_actions}",
                    layer.num_states, layer.num_actions
                )));
            }
        }
        Ok(Self {
            num_states,
            num_actions,
            feasible,
            layers,
            stage_layer,
            terminal_cost,
        })
    }

    pub fn horizon(&self) -> usize {
        self.stage_layer.len()
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    /// Size of the action index space (`max |A(i)|` when sets are prefixes).
    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    /// `A(i)`, sorted ascending.
    pub fn feasible_actions(&self, i: usize) -> &[usize] {
        &self.feasible[i]
    }

    pub fn is_feasible(&self, i: usize, a: usize) -> bool {
        self.feasible[i].binary_search(&a).is_ok()
    }

    pub fn layer(&self, n: usize) -> &StageLayer {
        &self.layers[self.stage_layer[n]]
    }

    /// Distinct layers and the stage → layer map.
    pub fn layers(&self) -> (&[StageLayer], &[usize]) {
        (&self.layers, &self.stage_layer)
    }

    pub fn transition_row(&self, n: usize, i: usize, a: usize) -> &[f64] {
        self.layer(n).transition_row(i, a)
    }

    pub fn cost_row(&self, n: usize, i: usize, a: usize) -> &[f64] {
        self.layer(n).cost_row(i, a)
    }

    pub(crate) fn cost_row_all(&self, n: usize, i: usize) -> &[f64] {
        self.layer(n).cost_block(i)
    }

    pub fn p(&self, n: usize, i: usize, a: usize, j: usize) -> f64 {
        self.transition_row(n, i, a)[j]
    }

    pub fn g(&self, n: usize, i: usize, a: usize, j: usize) -> f64 {
        self.cost_row(n, i, a)[j]
    }

    pub fn terminal_cost(&self) -> &[f64] {
        &self.terminal_cost
    }

    /// Largest absolute stage cost over feasible rows.
    pub fn max_abs_stage_cost(&self) -> f64 {
        let mut m: f64 = 0.0;
        for layer in &self.layers {
            for i in 0..self.num_states {
                for &a in &self.feasible[i] {
                    for &g in layer.cost_row(i, a) {
                        m = m.max(g.abs());
                    }
                }
            }
        }
        m
    }

    pub fn max_abs_terminal_cost(&self) -> f64 {
        self.terminal_cost.iter().fold(0.0, |m, g| m.max(g.abs()))
    }

    /// Total number of feasible `(i, a)` pairs in one stage.
    pub fn num_pairs(&self) -> usize {
        self.feasible.iter().map(Vec::len).sum()
    }

    /// Lists every invariant violation; an empty report means the MDP is valid.
    pub fn validate(&self) -> ValidationReport {
        let mut violations = Vec::new();
        if self.horizon() == 0 {
            violations.push(Violation::ZeroHorizon);
        }
        for (i, set) in self.feasible.iter().enumerate() {
            if set.is_empty() {
                violations.push(Violation::EmptyActionSet { state: i });
            }
        }
        for (i, &g) in self.terminal_cost.iter().enumerate() {
            if !g.is_finite() {
                violations.push(Violation::NonFiniteTerminalCost { state: i });
            }
        }
        // Shared layers are checked once, attributed to their first stage.
        for (l, layer) in self.layers.iter().enumerate() {
            let Some(stage) = self.stage_layer.iter().position(|&k| k == l) else {
                continue;
            };
            for i in 0..self.num_states {
                for &a in &self.feasible[i] {
                    let row = layer.transition_row(i, a);
                    let mut sum = 0.0;
                    for (j, &p) in row.iter().enumerate() {
                        if !p.is_finite() || p < 0.0 {
                            violations.push(Violation::BadProbability {
                                stage,
                                state: i,
                                action: a,
                                next: j,
                                value: p,
                            });
                        }
                        sum += p;
                    }
                    if !((sum - 1.0).abs() <= ROW_SUM_TOLERANCE) {
                        violations.push(Violation::RowSum {
                            stage,
                            state: i,
                            action: a,
                            sum,
                        });
                    }
                    for (j, &g) in layer.cost_row(i, a).iter().enumerate() {
                        if !g.is_finite() {
                            violations.push(Violation::NonFiniteCost {
                                stage,
                                state: i,
                                action: a,
                                next: j,
                            });
                        }
                    }
                }
            }
        }
        ValidationReport { violations }
    }

    pub(crate) fn ensure_valid(&self) -> Result<()> {
        let report = self.validate();
        if report.is_valid() {
            Ok(())
        } else {
            Err(Error::InvalidMdp(report))
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&MdpDocument::from(self))?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let doc: MdpDocument = serde_json::from_str(s)?;
        Self::try_from(doc)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Violation {
    ZeroHorizon,
    EmptyActionSet {
        state: usize,
    },
    RowSum {
        stage: usize,
        state: usize,
        action: usize,
        sum: f64,
    },
    BadProbability {
        stage: usize,
        state: usize,
        action: usize,
        next: usize,
        value: f64,
    },
    NonFiniteCost {
        stage: usize,
        state: usize,
        action: usize,
        next: usize,
    },
    NonFiniteTerminalCost {
        state: usize,
    },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::ZeroHorizon => write!(f, "horizon must be at least 1"),
            Violation::EmptyActionSet { state } => write!(f, "state {state} has no feasible action"),
            Violation::RowSum {
                stage,
                state,
                action,
                sum,
            } => write!(
                f,
                "kernel row (n={stage}, i={state}, a={action}) sums to {sum}"
            ),
            Violation::BadProbability {
                stage,
                state,
                action,
                next,
                value,
            } => write!(
                f,
                "p(n={stage}, i={state}, a={action}, j={next}) = {value} is not a probability"
            ),
            Violation::NonFiniteCost {
                stage,
                state,
                action,
                next,
            } => write!(
                f,
                "g(n={stage}, i={state}, a={action}, j={next}) is not finite"
            ),
            Violation::NonFiniteTerminalCost { state } => {
                write!(f, "terminal cost of state {state} is not finite")
            }
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.violations.as_slice() {
            [] => write!(f, "no violations"),
            [first, rest @ ..] => {
                write!(f, "{first}")?;
                if !rest.is_empty() {
                    write!(f, " (and {} more)", rest.len())?;
                }
                Ok(())
            }
        }
    }
}

/// JSON layout: `transition` and `stage_cost` nested as `[n][i][a][j]`.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct MdpDocument {
    horizon: usize,
    num_states: usize,
    feasible_actions: Vec<Vec<usize>>,
    transition: Vec<Vec<Vec<Vec<f64>>>>,
    stage_cost: Vec<Vec<Vec<Vec<f64>>>>,
    terminal_cost: Vec<f64>,
}

impl From<&FiniteHorizonMdp> for MdpDocument {
    fn from(mdp: &FiniteHorizonMdp) -> Self {
        let nest = |pick: fn(&StageLayer, usize, usize) -> &[f64]| {
            (0..mdp.horizon())
                .map(|n| {
                    let layer = mdp.layer(n);
                    (0..mdp.num_states)
                        .map(|i| {
                            (0..mdp.num_actions)
                                .map(|a| pick(layer, i, a).to_vec())
                                .collect()
                        })
                        .collect()
                })
                .collect()
        };
        MdpDocument {
            horizon: mdp.horizon(),
            num_states: mdp.num_states,
            feasible_actions: mdp.feasible.clone(),
            transition: nest(StageLayer::transition_row),
            stage_cost: nest(StageLayer::cost_row),
            terminal_cost: mdp.terminal_cost.clone(),
        }
    }
}

impl TryFrom<MdpDocument> for FiniteHorizonMdp {
    type Error = Error;

    fn try_from(doc: MdpDocument) -> Result<Self> {
        let s = doc.num_states;
        if doc.transition.len() != doc.horizon || doc.stage_cost.len() != doc.horizon {
            return Err(Error::Shape(format!(
                "horizon is {} but transition/stage_cost have {}/{} stages",
                doc.horizon,
                doc.transition.len(),
                doc.stage_cost.len()
            )));
        }
        let num_actions = match doc.transition.first().and_then(|t| t.first()) {
            Some(row) => row.len(),
            None => doc
                .feasible_actions
                .iter()
                .flatten()
                .max()
                .map_or(1, |a| a + 1),
        };
        let mut stage_layer = Vec::with_capacity(doc.horizon);
        let mut layers: Vec<StageLayer> = Vec::new();
        for (n, (tn, gn)) in doc.transition.iter().zip(&doc.stage_cost).enumerate() {
            let mut layer = StageLayer::zeros(s, num_actions);
            let bad = || Error::Shape(format!("stage {n} arrays are not {s}x{num_actions}x{s}"));
            if tn.len() != s || gn.len() != s {
                return Err(bad());
            }
            for i in 0..s {
                if tn[i].len() != num_actions || gn[i].len() != num_actions {
                    return Err(bad());
                }
                for a in 0..num_actions {
                    if tn[i][a].len() != s || gn[i][a].len() != s {
                        return Err(bad());
                    }
                    layer.transition_row_mut(i, a).copy_from_slice(&tn[i][a]);
                    layer.cost_row_mut(i, a).copy_from_slice(&gn[i][a]);
                }
            }
            // Consecutive identical stages share storage again.
            if layers.last() == Some(&layer) {
                stage_layer.push(layers.len() - 1);
            } else {
                layers.push(layer);
                stage_layer.push(layers.len() - 1);
            }
        }
        FiniteHorizonMdp::assemble(
            s,
            num_actions,
            doc.feasible_actions,
            layers,
            stage_layer,
            doc.terminal_cost,
        )
    }
}

impl Serialize for FiniteHorizonMdp {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        MdpDocument::from(self).serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for FiniteHorizonMdp {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let doc = MdpDocument::deserialize(deserializer)?;
        FiniteHorizonMdp::try_from(doc).map_err(serde::de::Error::custom)
    }
}
