use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use fhq_core::grid::{self, GridConfig};
use fhq_core::learner::LearnerConfig;
use fhq_core::random_mdp::{self, RandomMdpSpec};
use fhq_core::FiniteHorizonMdp;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    RandomMdp,
    SmartGrid,
    Diagnostics,
}

/// Where the MDP comes from. JSON: `{"random": {...}}`, `{"grid": {...}}` or
/// `{"file": "instance.json"}` (relative to the config file).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum InstanceSpec {
    Random(RandomMdpSpec),
    Grid(GridConfig),
    File(PathBuf),
}

impl InstanceSpec {
    /// `(N,|S|,|A|)` for MDPs, `(h,d,b,p)` for grids.
    pub fn label(&self, mdp: &FiniteHorizonMdp) -> String {
        match self {
            InstanceSpec::Grid(g) => g.label(),
            _ => format!("({},{},{})", mdp.horizon(), mdp.num_states(), mdp.num_actions()),
        }
    }

    /// Builds the instance. File instances are loaded as-is, without
    /// validation, so that the diagnostics can report what is wrong.
    pub fn build(&self) -> Result<FiniteHorizonMdp> {
        match self {
            InstanceSpec::Random(spec) => Ok(random_mdp::generate(spec)?),
            InstanceSpec::Grid(config) => Ok(grid::to_mdp(config)?),
            InstanceSpec::File(path) => {
                let text = fs::read_to_string(path)
                    .with_context(|| format!("reading instance {}", path.display()))?;
                FiniteHorizonMdp::from_json(&text)
                    .with_context(|| format!("parsing instance {}", path.display()))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluationConfig {
    pub episodes: usize,
    /// Run the grid scenario both with and without renewables.
    pub compare_renewables: bool,
}

impl Default for EvaluationConfig {
    fn default() -> Self {
        Self {
            episodes: 10_000,
            compare_renewables: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiagnosticsConfig {
    pub seed: u64,
    pub fixed_point_tolerance: f64,
    pub lipschitz_trials: usize,
    pub radius: f64,
    pub flow_starts: usize,
    pub flow_dt: f64,
    pub flow_steps: usize,
    pub flow_tolerance: f64,
    pub noise_samples: usize,
    pub schedule_terms: u64,
    pub schedule_tolerance: f64,
    pub schedule_min_sum: f64,
    pub gap_scales: Vec<f64>,
}

impl Default for DiagnosticsConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            fixed_point_tolerance: 1e-10,
            lipschitz_trials: 1000,
            radius: 10.0,
            flow_starts: 10,
            flow_dt: 0.1,
            flow_steps: 2000,
            flow_tolerance: 1e-4,
            noise_samples: 100_000,
            schedule_terms: 1_000_000,
            schedule_tolerance: 1e-3,
            schedule_min_sum: 100.0,
            gap_scales: vec![1.0, 10.0, 100.0, 1000.0],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Optional; when present it must agree with the subcommand.
    #[serde(default)]
    pub experiment_kind: Option<ExperimentKind>,
    pub instance: InstanceSpec,
    #[serde(default)]
    pub learner: LearnerConfig,
    /// Used when `--out` is not given.
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    /// Stages to dump value/policy snapshots for; defaults to first, middle
    /// and penultimate.
    #[serde(default)]
    pub emit_stage_snapshots: Option<Vec<usize>>,
    #[serde(default)]
    pub evaluation: EvaluationConfig,
    #[serde(default)]
    pub diagnostics: DiagnosticsConfig,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    /// Reads a config file; a relative `file` instance path is resolved
    /// against the file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text =
            fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let mut config =
            Self::from_json(&text).with_context(|| format!("parsing config {}", path.display()))?;
        if let InstanceSpec::File(file) = &mut config.instance {
            if file.is_relative() {
                if let Some(dir) = path.parent() {
                    *file = dir.join(&*file);
                }
            }
        }
        Ok(config)
    }

    /// One seed drives everything: instance generation, learning,
    /// evaluation and the diagnostic probes (each on its own RNG domain).
    pub fn with_seed(mut self, seed: u64) -> Self {
        match &mut self.instance {
            InstanceSpec::Random(spec) => spec.seed = seed,
            InstanceSpec::Grid(config) => config.seed = seed,
            InstanceSpec::File(_) => {}
        }
        self.learner.seed = seed;
        self.diagnostics.seed = seed;
        self
    }

    /// The seed a run reports; `--replicas` counts up from it.
    pub fn seed(&self) -> u64 {
        self.learner.seed
    }

    pub fn validate(&self) -> Result<()> {
        self.learner.validate()?;
        match &self.instance {
            InstanceSpec::Random(spec) => spec.validate()?,
            InstanceSpec::Grid(config) => config.validate()?,
            InstanceSpec::File(_) => {}
        }
        if self.evaluation.episodes == 0 {
            bail!("evaluation.episodes must be at least 1");
        }
        let d = &self.diagnostics;
        if d.lipschitz_trials == 0 || d.flow_starts == 0 || d.flow_steps == 0 {
            bail!("diagnostics trial, start and step counts must be positive");
        }
        if !(d.radius > 0.0) || !(d.flow_dt > 0.0 && d.flow_dt <= 1.0) {
            bail!("diagnostics needs radius > 0 and flow_dt in (0, 1]");
        }
        if d.schedule_terms == 0 || d.gap_scales.iter().any(|&r| !(r > 0.0)) {
            bail!("diagnostics needs schedule_terms ≥ 1 and positive gap scales");
        }
        Ok(())
    }

    pub fn snapshot_stages(&self, horizon: usize) -> Result<Vec<usize>> {
        let stages = match &self.emit_stage_snapshots {
            Some(stages) => stages.clone(),
            None => {
                let mut v = vec![0, horizon / 2, horizon - 1];
                v.dedup();
                v
            }
        };
        if let Some(&n) = stages.iter().find(|&&n| n >= horizon) {
            bail!("snapshot stage {n} is outside 0..{horizon}");
        }
        Ok(stages)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_configs_parse() {
        let c = ExperimentConfig::from_json(r#"{"instance": {"random": {"horizon": 3}}}"#).unwrap();
        match &c.instance {
            InstanceSpec::Random(spec) => assert_eq!((spec.horizon, spec.num_states), (3, 5)),
            other => panic!("{other:?}"),
        }
        assert_eq!(c.learner, LearnerConfig::default());

        let c = ExperimentConfig::from_json(
            r#"{"instance": {"grid": {"horizon": 4, "d_max": 1, "b_max": 1, "p_max": 1}}}"#,
        )
        .unwrap();
        assert!(matches!(c.instance, InstanceSpec::Grid(_)));
    }

    #[test]
    fn unknown_fields_are_config_errors() {
        assert!(ExperimentConfig::from_json(r#"{"instance": {"random": {}}, "lerner": {}}"#).is_err());
        assert!(ExperimentConfig::from_json(r#"{"instance": {"maze": {}}}"#).is_err());
    }

    #[test]
    fn seed_override_reaches_every_consumer() {
        let c = ExperimentConfig::from_json(r#"{"instance": {"random": {}}}"#).unwrap().with_seed(9);
        assert_eq!(c.seed(), 9);
        assert_eq!(c.diagnostics.seed, 9);
        assert!(matches!(c.instance, InstanceSpec::Random(RandomMdpSpec { seed: 9, .. })));
    }

    #[test]
    fn default_snapshots() {
        let c = ExperimentConfig::from_json(r#"{"instance": {"random": {}}}"#).unwrap();
        assert_eq!(c.snapshot_stages(10).unwrap(), vec![0, 5, 9]);
        assert_eq!(c.snapshot_stages(1).unwrap(), vec![0]);
        let c = ExperimentConfig {
            emit_stage_snapshots: Some(vec![10]),
            ..c
        };
        assert!(c.snapshot_stages(10).is_err());
    }
}
