//! Training runs, sweeps, seed aggregation and CSV persistence.

pub mod config;
pub mod equivalence;
pub mod persist;
pub mod run;
pub mod summary;
pub mod sweep;

use thiserror::Error;

use crate::optim::OptimError;
use crate::problems::ProblemError;
use crate::schedules::{Schedule, ScheduleError, ScheduleKind};

pub use equivalence::{check_equivalence, EquivalenceReport};
pub use run::{run, RunOutcome, RunRecord, RunSpec};
pub use summary::{summarize, CurvePoint, SensitivityCurve};
pub use sweep::{log_grid, sweep, SweepSpec};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("config error: {0}")]
    Config(String),
    #[error(transparent)]
    Optim(#[from] OptimError),
    #[error(transparent)]
    Schedule(#[from] ScheduleError),
    #[error(transparent)]
    Problem(#[from] ProblemError),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("{0}")]
    Runtime(String),
}

impl HarnessError {
    /// Whether the error stems from invalid user input rather than I/O.
    pub fn is_config(&self) -> bool {
        matches!(
            self,
            HarnessError::Config(_)
                | HarnessError::Optim(_)
                | HarnessError::Schedule(_)
                | HarnessError::Problem(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, HarnessError>;

/// `schedule` column value: `constant`, `warmup-cosine`, or
/// `absorbed(<kind>;<beta1>;<beta2>)`.
pub fn schedule_label(schedule: &Schedule) -> String {
    match schedule {
        Schedule::Absorbed {
            inner,
            beta1,
            beta2,
        } => {
            format!("absorbed({};{beta1};{beta2})", schedule_label(inner))
        }
        other => other.kind().as_str().to_string(),
    }
}

/// Inverse of [`schedule_label`] given the remaining schedule columns.
pub fn parse_schedule(
    label: &str,
    peak_lr: f64,
    warmup_fraction: f64,
    steps: u64,
) -> Result<Schedule> {
    if let Some(body) = label
        .strip_prefix("absorbed(")
        .and_then(|s| s.strip_suffix(')'))
    {
        let parts: Vec<&str> = body.split(';').collect();
        let [kind, b1, b2] = parts[..] else {
            return Err(HarnessError::Config(format!(
                "bad schedule label `{label}`"
            )));
        };
        let parse = |s: &str| {
            s.parse::<f64>()
                .map_err(|_| HarnessError::Config(format!("bad schedule label `{label}`")))
        };
        let inner = parse_schedule(kind, peak_lr, warmup_fraction, steps)?;
        return Ok(inner.absorb(parse(b1)?, parse(b2)?)?);
    }
    let kind: ScheduleKind = label.parse()?;
    Ok(Schedule::from_kind(kind, peak_lr, steps, warmup_fraction)?)
}
