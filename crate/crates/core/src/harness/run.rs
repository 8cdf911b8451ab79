use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::{HarnessError, Result};
use crate::optim::{adam_step_in_place, AdamConfig, AdamState, OptimError, ParamVector};
use crate::problems::{Problem, ProblemSpec};
use crate::rng::derive_key;
use crate::schedules::{Schedule, ScheduleKind};

/// Everything needed to reproduce one training run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSpec {
    pub problem: ProblemSpec,
    pub config: AdamConfig,
    pub schedule: Schedule,
    pub seed: u64,
}

impl RunSpec {
    pub fn steps(&self) -> u64 {
        self.schedule.total_steps()
    }

    pub fn validate(&self) -> Result<()> {
        self.config.validate()?;
        Ok(())
    }
}

/// Outcome of one run. `final_loss == None` marks a diverged run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunOutcome {
    pub initial_loss: f64,
    pub final_loss: Option<f64>,
    pub diverged_at: Option<u64>,
    pub loss_trace: Vec<(u64, f64)>,
    pub final_params: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub spec: RunSpec,
    pub outcome: RunOutcome,
    pub wall_time_s: f64,
}

impl RunRecord {
    pub fn final_loss(&self) -> Option<f64> {
        self.outcome.final_loss
    }

    pub fn is_diverged(&self) -> bool {
        self.outcome.final_loss.is_none()
    }

    /// Copy with the wall-clock field zeroed, for determinism comparisons.
    pub fn without_timing(&self) -> Self {
        Self {
            wall_time_s: 0.0,
            ..self.clone()
        }
    }

    pub fn schedule_kind(&self) -> ScheduleKind {
        self.spec.schedule.kind()
    }
}

/// Loss-trace stride: `max(1, steps / 500)`.
pub fn trace_stride(steps: u64) -> u64 {
    (steps / 500).max(1)
}

pub(crate) fn batch_seed(seed: u64, t: u64) -> u64 {
    derive_key(seed, "batch", t)
}

pub(crate) fn init_seed(seed: u64) -> u64 {
    derive_key(seed, "init", 0)
}

/// Result of driving the optimizer loop.
pub(crate) struct Trained {
    pub params: ParamVector,
    pub diverged_at: Option<u64>,
}

/// Shared training loop. `step_config(t)` supplies the optimizer settings
/// and learning rate for step `t`; `observe(t, loss, params)` sees the
/// minibatch loss evaluated before the update and the parameters after it.
pub(crate) fn train<C, O>(
    problem: &dyn Problem,
    steps: u64,
    seed: u64,
    mut step_config: C,
    mut observe: O,
) -> Result<Trained>
where
    C: FnMut(u64) -> Result<(f64, AdamConfig)>,
    O: FnMut(u64, f64, &ParamVector),
{
    let mut params = problem.init(init_seed(seed));
    let mut state = AdamState::new(params.len());
    for t in 1..=steps {
        let (loss, grad) = problem.eval(params.as_slice(), batch_seed(seed, t));
        if !loss.is_finite() {
            return Ok(Trained {
                params,
                diverged_at: Some(t),
            });
        }
        let (lr, config) = step_config(t)?;
        match adam_step_in_place(&mut params, &mut state, &grad, lr, &config) {
            Ok(()) => observe(t, loss, &params),
            Err(OptimError::Diverged { step }) => {
                return Ok(Trained {
                    params,
                    diverged_at: Some(step),
                })
            }
            Err(e) => return Err(e.into()),
        }
    }
    Ok(Trained {
        params,
        diverged_at: None,
    })
}

/// Executes one run: init, then `steps` rounds of (minibatch, gradient,
/// AdamW step at `lr_at(t)`), then scores the final parameters.
pub fn run(spec: &RunSpec) -> Result<RunRecord> {
    spec.validate()?;
    let problem = spec.problem.build()?;
    run_with_problem(problem.as_ref(), spec)
}

pub fn run_with_problem(problem: &dyn Problem, spec: &RunSpec) -> Result<RunRecord> {
    spec.validate()?;
    let start = Instant::now();
    let steps = spec.steps();
    if steps == 0 {
        return Err(HarnessError::Config("steps must be >= 1".into()));
    }
    let stride = trace_stride(steps);
    let initial_loss = problem.eval_loss(problem.init(init_seed(spec.seed)).as_slice());

    let mut loss_trace = Vec::new();
    let trained = train(
        problem,
        steps,
        spec.seed,
        |t| Ok((spec.schedule.lr_at(t)?, spec.config)),
        |t, loss, _| {
            if t == 1 || t == steps || t % stride == 0 {
                loss_trace.push((t, loss));
            }
        },
    )?;

    let final_loss = match trained.diverged_at {
        Some(_) => None,
        None => Some(problem.eval_loss(trained.params.as_slice())).filter(|l| l.is_finite()),
    };
    let diverged_at = trained.diverged_at.or(if final_loss.is_none() {
        Some(steps)
    } else {
        None
    });

    Ok(RunRecord {
        spec: spec.clone(),
        outcome: RunOutcome {
            initial_loss,
            final_loss,
            diverged_at,
            loss_trace,
            final_params: trained.params.into_inner(),
        },
        wall_time_s: start.elapsed().as_secs_f64(),
    })
}
