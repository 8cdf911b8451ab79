//! Executed check of the absorption identity: bias-corrected AdamW under a
//! schedule `S` follows the same trajectory as uncorrected AdamW under
//! `t -> S(t) * rho(t)`.

use serde::Serialize;

use super::run::train;
use super::{HarnessError, Result};
use crate::optim::{pow_t, rho, AdamConfig};
use crate::problems::Problem;
use crate::schedules::Schedule;

/// Denominator floor for the per-coordinate relative gap.
pub const GAP_FLOOR: f64 = 1e-12;

/// `|a - b| / max(|a|, |b|, GAP_FLOOR)`.
pub fn relative_gap(a: f64, b: f64) -> f64 {
    if a == b {
        return 0.0;
    }
    (a - b).abs() / a.abs().max(b.abs()).max(GAP_FLOOR)
}

/// Parameter vectors after every step, or the step at which the run diverged.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub params: Vec<Vec<f64>>,
    pub diverged_at: Option<u64>,
}

/// Records the parameters after each step. `step_config(t)` returns the
/// learning rate and optimizer settings for step `t`.
pub fn trajectory<C>(
    problem: &dyn Problem,
    steps: u64,
    seed: u64,
    step_config: C,
) -> Result<Trajectory>
where
    C: FnMut(u64) -> Result<(f64, AdamConfig)>,
{
    let mut params = Vec::with_capacity(steps as usize);
    let trained = train(problem, steps, seed, step_config, |_, _, p| {
        params.push(p.as_slice().to_vec())
    })?;
    Ok(Trajectory {
        params,
        diverged_at: trained.diverged_at,
    })
}

/// Largest per-coordinate relative gap over two trajectories. A run that
/// diverges where the other does not counts as an infinite gap.
pub fn max_trajectory_gap(a: &Trajectory, b: &Trajectory) -> f64 {
    if a.diverged_at != b.diverged_at {
        return f64::INFINITY;
    }
    a.params
        .iter()
        .zip(&b.params)
        .flat_map(|(x, y)| x.iter().zip(y))
        .fold(0.0f64, |m, (&x, &y)| m.max(relative_gap(x, y)))
}

/// Bias-corrected run under `schedule` with the given config.
pub fn corrected_trajectory(
    problem: &dyn Problem,
    schedule: &Schedule,
    config: &AdamConfig,
    seed: u64,
) -> Result<Trajectory> {
    let config = config.with_bias_correction(true);
    trajectory(problem, schedule.total_steps(), seed, |t| {
        Ok((schedule.lr_at(t)?, config))
    })
}

/// Uncorrected run under `schedule.absorb(b1, b2)`.
///
/// To match the corrected run exactly, epsilon is replaced by
/// `eps * sqrt(1 - b2^t)` when `rescale_epsilon` is set, and weight decay by
/// `wd / rho(t)` so that the decoupled decay still uses the base schedule.
pub fn absorbed_trajectory(
    problem: &dyn Problem,
    schedule: &Schedule,
    config: &AdamConfig,
    seed: u64,
    rescale_epsilon: bool,
) -> Result<Trajectory> {
    let (b1, b2) = (config.beta1, config.beta2);
    let absorbed = schedule.absorb(b1, b2)?;
    let base = config.with_bias_correction(false);
    trajectory(problem, schedule.total_steps(), seed, |t| {
        let r = rho(t, b1, b2)?;
        let mut step = base;
        if rescale_epsilon {
            step.epsilon = base.epsilon * (1.0 - pow_t(b2, t)).sqrt();
        }
        step.weight_decay = base.weight_decay / r;
        Ok((absorbed.lr_at(t)?, step))
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct EquivalenceReport {
    pub beta1: f64,
    pub beta2: f64,
    pub steps: u64,
    pub seed: u64,
    pub tolerance: f64,
    /// Gap with epsilon = 0 in both runs.
    pub max_gap_zero_eps: f64,
    /// Gap with the configured epsilon, rescaled per step in the absorbed run.
    pub max_gap_rescaled_eps: f64,
    pub epsilon: f64,
    pub passed: bool,
}

/// Runs the corrected/absorbed pair twice (epsilon = 0, and epsilon =
/// `config.epsilon` with per-step rescaling) and reports the largest
/// per-coordinate relative gap seen along either trajectory.
pub fn check_equivalence(
    problem: &dyn Problem,
    schedule: &Schedule,
    config: &AdamConfig,
    seed: u64,
    tolerance: f64,
) -> Result<EquivalenceReport> {
    if tolerance.is_nan() || tolerance <= 0.0 {
        return Err(HarnessError::Config(format!(
            "tolerance must be > 0, got {tolerance}"
        )));
    }
    config.validate()?;
    if schedule.is_absorbed() {
        return Err(HarnessError::Config(
            "base schedule must not be absorbed".into(),
        ));
    }

    let zero = config.with_epsilon(0.0);
    let gap_zero = max_trajectory_gap(
        &corrected_trajectory(problem, schedule, &zero, seed)?,
        &absorbed_trajectory(problem, schedule, &zero, seed, false)?,
    );
    let gap_rescaled = max_trajectory_gap(
        &corrected_trajectory(problem, schedule, config, seed)?,
        &absorbed_trajectory(problem, schedule, config, seed, true)?,
    );

    Ok(EquivalenceReport {
        beta1: config.beta1,
        beta2: config.beta2,
        steps: schedule.total_steps(),
        seed,
        tolerance,
        max_gap_zero_eps: gap_zero,
        max_gap_rescaled_eps: gap_rescaled,
        epsilon: config.epsilon,
        passed: gap_zero < tolerance && gap_rescaled < tolerance,
    })
}
