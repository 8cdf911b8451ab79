//! Learning-rate laws and the bias-correction absorption transform.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::optim::{rho, AdamConfig, OptimError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScheduleError {
    #[error("step {t} outside [1, {total}]")]
    OutOfRange { t: u64, total: u64 },
    #[error("schedule is already absorbed")]
    DoubleAbsorption,
    #[error("invalid schedule: {0}")]
    Invalid(String),
    #[error(transparent)]
    Optim(#[from] OptimError),
}

pub type Result<T> = std::result::Result<T, ScheduleError>;

pub const DEFAULT_WARMUP_FRACTION: f64 = 0.10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScheduleKind {
    Constant,
    WarmupCosine,
}

impl ScheduleKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ScheduleKind::Constant => "constant",
            ScheduleKind::WarmupCosine => "warmup-cosine",
        }
    }
}

impl std::str::FromStr for ScheduleKind {
    type Err = ScheduleError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "constant" => Ok(ScheduleKind::Constant),
            "warmup-cosine" => Ok(ScheduleKind::WarmupCosine),
            other => Err(ScheduleError::Invalid(format!(
                "unknown schedule kind `{other}`"
            ))),
        }
    }
}

/// A learning-rate law over steps `1..=total_steps`.
#[derive(Debug, Clone, PartialEq)]
pub enum Schedule {
    Constant {
        peak_lr: f64,
        total_steps: u64,
    },
    WarmupCosine {
        peak_lr: f64,
        total_steps: u64,
        warmup_fraction: f64,
    },
    /// `inner` multiplied pointwise by `rho(t; beta1, beta2)`.
    Absorbed {
        inner: Box<Schedule>,
        beta1: f64,
        beta2: f64,
    },
}

fn check_common(peak_lr: f64, total_steps: u64) -> Result<()> {
    if !(peak_lr >= 0.0 && peak_lr.is_finite()) {
        return Err(ScheduleError::Invalid(format!(
            "peak_lr must be >= 0, got {peak_lr}"
        )));
    }
    if total_steps == 0 {
        return Err(ScheduleError::Invalid("total_steps must be >= 1".into()));
    }
    Ok(())
}

impl Schedule {
    pub fn constant(peak_lr: f64, total_steps: u64) -> Result<Self> {
        check_common(peak_lr, total_steps)?;
        Ok(Schedule::Constant {
            peak_lr,
            total_steps,
        })
    }

    pub fn warmup_cosine(peak_lr: f64, total_steps: u64, warmup_fraction: f64) -> Result<Self> {
        check_common(peak_lr, total_steps)?;
        if !(0.0..1.0).contains(&warmup_fraction) {
            return Err(ScheduleError::Invalid(format!(
                "warmup_fraction must lie in [0, 1), got {warmup_fraction}"
            )));
        }
        Ok(Schedule::WarmupCosine {
            peak_lr,
            total_steps,
            warmup_fraction,
        })
    }

    pub fn from_kind(
        kind: ScheduleKind,
        peak_lr: f64,
        total_steps: u64,
        warmup_fraction: f64,
    ) -> Result<Self> {
        match kind {
            ScheduleKind::Constant => Self::constant(peak_lr, total_steps),
            ScheduleKind::WarmupCosine => {
                Self::warmup_cosine(peak_lr, total_steps, warmup_fraction)
            }
        }
    }

    /// Kind of the base law (looking through absorption).
    pub fn kind(&self) -> ScheduleKind {
        match self {
            Schedule::Constant { .. } => ScheduleKind::Constant,
            Schedule::WarmupCosine { .. } => ScheduleKind::WarmupCosine,
            Schedule::Absorbed { inner, .. } => inner.kind(),
        }
    }

    pub fn total_steps(&self) -> u64 {
        match self {
            Schedule::Constant { total_steps, .. } | Schedule::WarmupCosine { total_steps, .. } => {
                *total_steps
            }
            Schedule::Absorbed { inner, .. } => inner.total_steps(),
        }
    }

    pub fn peak_lr(&self) -> f64 {
        match self {
            Schedule::Constant { peak_lr, .. } | Schedule::WarmupCosine { peak_lr, .. } => *peak_lr,
            Schedule::Absorbed { inner, .. } => inner.peak_lr(),
        }
    }

    /// Warmup fraction of the base law; 0 for constant schedules.
    pub fn warmup_fraction(&self) -> f64 {
        match self {
            Schedule::Constant { .. } => 0.0,
            Schedule::WarmupCosine {
                warmup_fraction, ..
            } => *warmup_fraction,
            Schedule::Absorbed { inner, .. } => inner.warmup_fraction(),
        }
    }

    pub fn is_absorbed(&self) -> bool {
        matches!(self, Schedule::Absorbed { .. })
    }

    /// Number of warmup steps, `ceil(warmup_fraction * T)`, capped at `T - 1`
    /// so the cosine phase always contains the final step.
    pub fn warmup_steps(&self) -> u64 {
        match self {
            Schedule::WarmupCosine {
                total_steps,
                warmup_fraction,
                ..
            } => warmup_steps(*warmup_fraction, *total_steps),
            Schedule::Absorbed { inner, .. } => inner.warmup_steps(),
            Schedule::Constant { .. } => 0,
        }
    }

    pub fn lr_at(&self, t: u64) -> Result<f64> {
        let total = self.total_steps();
        if t == 0 || t > total {
            return Err(ScheduleError::OutOfRange { t, total });
        }
        Ok(match self {
            Schedule::Constant { peak_lr, .. } => *peak_lr,
            Schedule::WarmupCosine {
                peak_lr,
                total_steps,
                warmup_fraction,
            } => {
                let w = warmup_steps(*warmup_fraction, *total_steps);
                if t <= w {
                    peak_lr * t as f64 / w as f64
                } else {
                    let progress = (t - w) as f64 / (total_steps - w) as f64;
                    if t == *total_steps {
                        0.0
                    } else {
                        peak_lr * 0.5 * (1.0 + (PI * progress).cos())
                    }
                }
            }
            Schedule::Absorbed {
                inner,
                beta1,
                beta2,
            } => inner.lr_at(t)? * rho(t, *beta1, *beta2)?,
        })
    }

    /// Folds bias correction into the schedule: the result's `lr_at(t)` is
    /// `self.lr_at(t) * rho(t; beta1, beta2)`.
    pub fn absorb(&self, beta1: f64, beta2: f64) -> Result<Schedule> {
        if self.is_absorbed() {
            return Err(ScheduleError::DoubleAbsorption);
        }
        // validates the betas
        rho(1, beta1, beta2)?;
        Ok(Schedule::Absorbed {
            inner: Box::new(self.clone()),
            beta1,
            beta2,
        })
    }
}

pub fn warmup_steps(warmup_fraction: f64, total_steps: u64) -> u64 {
    // tolerates products like 0.1 * 4800 = 480.00000000000006
    let raw = warmup_fraction * total_steps as f64;
    let w = (raw - 1e-9 * raw.max(1.0)).ceil().max(0.0) as u64;
    w.min(total_steps.saturating_sub(1))
}

/// One row of the effective learning-rate table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub step: u64,
    pub lr: f64,
    pub rho: f64,
    pub effective_lr: f64,
}

/// Tabulates `(t, lr_t, rho(t), lr_t * rho(t))` for `t = 1..=steps`.
///
/// When `config.bias_correction` is off the effective column is `lr_t`.
pub fn effective_lr_trace(
    schedule: &Schedule,
    config: &AdamConfig,
    steps: u64,
) -> Result<Vec<TraceRow>> {
    if steps == 0 {
        return Err(ScheduleError::Invalid("steps must be >= 1".into()));
    }
    (1..=steps)
        .map(|t| {
            let lr = schedule.lr_at(t)?;
            let r = rho(t, config.beta1, config.beta2)?;
            let effective_lr = if config.bias_correction { lr * r } else { lr };
            Ok(TraceRow {
                step: t,
                lr,
                rho: r,
                effective_lr,
            })
        })
        .collect()
}
