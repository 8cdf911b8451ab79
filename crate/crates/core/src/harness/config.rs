//! TOML configuration files for `run`, `sweep` and `check-equivalence`.
//!
//! Unknown keys are rejected everywhere. `clip_norm = false` disables
//! clipping; a number sets the threshold (default 1.0).

use std::path::Path;

use serde::Deserialize;

use super::run::RunSpec;
use super::sweep::{log_grid, SweepSpec};
use super::{HarnessError, Result};
use crate::optim::AdamConfig;
use crate::problems::ProblemSpec;
use crate::schedules::{Schedule, ScheduleKind, DEFAULT_WARMUP_FRACTION};

#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum ClipSetting {
    Enabled(bool),
    Threshold(f64),
}

impl ClipSetting {
    fn resolve(self) -> Result<Option<f64>> {
        match self {
            ClipSetting::Enabled(false) => Ok(None),
            ClipSetting::Enabled(true) => Ok(Some(1.0)),
            ClipSetting::Threshold(t) => Ok(Some(t)),
        }
    }
}

fn default_clip() -> ClipSetting {
    ClipSetting::Threshold(1.0)
}

fn default_beta1() -> f64 {
    AdamConfig::default().beta1
}

fn default_beta2() -> f64 {
    AdamConfig::default().beta2
}

fn default_epsilon() -> f64 {
    AdamConfig::default().epsilon
}

fn default_true() -> bool {
    true
}

fn default_warmup() -> f64 {
    DEFAULT_WARMUP_FRACTION
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizerSection {
    #[serde(default = "default_beta1")]
    pub beta1: f64,
    #[serde(default = "default_beta2")]
    pub beta2: f64,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    #[serde(default)]
    pub weight_decay: f64,
    #[serde(default = "default_clip")]
    pub clip_norm: ClipSetting,
    #[serde(default = "default_true")]
    pub bias_correction: bool,
}

impl Default for OptimizerSection {
    fn default() -> Self {
        Self {
            beta1: default_beta1(),
            beta2: default_beta2(),
            epsilon: default_epsilon(),
            weight_decay: 0.0,
            clip_norm: default_clip(),
            bias_correction: true,
        }
    }
}

impl OptimizerSection {
    pub fn to_config(&self) -> Result<AdamConfig> {
        Ok(AdamConfig::new(
            self.beta1,
            self.beta2,
            self.epsilon,
            self.weight_decay,
            self.clip_norm.resolve()?,
            self.bias_correction,
        )?)
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleSection {
    pub kind: ScheduleKind,
    pub peak_lr: f64,
    #[serde(default = "default_warmup")]
    pub warmup_fraction: f64,
    /// Fold bias correction into the schedule using these betas.
    #[serde(default)]
    pub absorb: Option<[f64; 2]>,
}

impl ScheduleSection {
    pub fn build(&self, steps: u64) -> Result<Schedule> {
        let base = Schedule::from_kind(self.kind, self.peak_lr, steps, self.warmup_fraction)?;
        match self.absorb {
            Some([b1, b2]) => Ok(base.absorb(b1, b2)?),
            None => Ok(base),
        }
    }
}

/// Config for a single run.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunFile {
    pub problem: ProblemSpec,
    #[serde(default)]
    pub optimizer: OptimizerSection,
    pub schedule: ScheduleSection,
    pub steps: u64,
    #[serde(default)]
    pub seed: u64,
}

impl RunFile {
    pub fn to_spec(&self) -> Result<RunSpec> {
        let spec = RunSpec {
            problem: self.problem.clone(),
            config: self.optimizer.to_config()?,
            schedule: self.schedule.build(self.steps)?,
            seed: self.seed,
        };
        spec.problem.build()?;
        Ok(spec)
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LrGrid {
    pub min: f64,
    pub max: f64,
    pub points: usize,
}

/// Shared optimizer settings of a sweep; betas and the bias flag come from
/// the grid.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepOptimizerSection {
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    #[serde(default)]
    pub weight_decay: f64,
    #[serde(default = "default_clip")]
    pub clip_norm: ClipSetting,
}

impl Default for SweepOptimizerSection {
    fn default() -> Self {
        Self {
            epsilon: default_epsilon(),
            weight_decay: 0.0,
            clip_norm: default_clip(),
        }
    }
}

fn default_bias_flags() -> Vec<bool> {
    vec![true, false]
}

fn default_seeds() -> Vec<u64> {
    (0..5).collect()
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepFile {
    pub problem: ProblemSpec,
    #[serde(default)]
    pub optimizer: SweepOptimizerSection,
    pub steps: u64,
    #[serde(default)]
    pub learning_rates: Option<Vec<f64>>,
    #[serde(default)]
    pub lr_grid: Option<LrGrid>,
    pub beta_pairs: Vec<[f64; 2]>,
    #[serde(default = "default_bias_flags")]
    pub bias_correction: Vec<bool>,
    pub schedules: Vec<ScheduleKind>,
    #[serde(default = "default_warmup")]
    pub warmup_fraction: f64,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
}

impl SweepFile {
    pub fn to_spec(&self) -> Result<SweepSpec> {
        let learning_rates = match (&self.learning_rates, &self.lr_grid) {
            (Some(lrs), None) => lrs.clone(),
            (None, Some(g)) => log_grid(g.min, g.max, g.points)?,
            _ => {
                return Err(HarnessError::Config(
                    "give exactly one of `learning_rates` or `lr_grid`".into(),
                ))
            }
        };
        let base = AdamConfig::default()
            .with_epsilon(self.optimizer.epsilon)
            .with_weight_decay(self.optimizer.weight_decay)
            .with_clip_norm(self.optimizer.clip_norm.resolve()?);
        let spec = SweepSpec {
            problem: self.problem.clone(),
            learning_rates,
            beta_pairs: self.beta_pairs.iter().map(|p| (p[0], p[1])).collect(),
            bias_correction: self.bias_correction.clone(),
            schedules: self.schedules.clone(),
            seeds: self.seeds.clone(),
            steps: self.steps,
            warmup_fraction: self.warmup_fraction,
            base,
        };
        spec.validate()?;
        spec.problem.build()?;
        Ok(spec)
    }
}

/// Config for `check-equivalence`: a base schedule (never absorbed), the
/// optimizer settings, and the pass threshold.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EquivalenceFile {
    pub problem: ProblemSpec,
    #[serde(default)]
    pub optimizer: OptimizerSection,
    pub schedule: ScheduleSection,
    pub steps: u64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
}

fn default_tolerance() -> f64 {
    1e-9
}

pub fn parse_toml<T: for<'de> Deserialize<'de>>(text: &str) -> Result<T> {
    toml::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))
}

pub fn load<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| HarnessError::Config(format!("cannot read {}: {e}", path.display())))?;
    parse_toml(&text)
}
