//! AdamW state machine with optional bias correction.
//!
//! The update for step `t` (1-based) is
//!
//! ```text
//! m_t = b1 m_{t-1} + (1 - b1) g_t
//! v_t = b2 v_{t-1} + (1 - b2) g_t^2
//! theta_t = theta_{t-1} - lr * dir_t - lr * wd * theta_{t-1}
//! ```
//!
//! where `dir_t = m_hat / (sqrt(v_hat) + eps)` with bias correction and
//! `dir_t = m / (sqrt(v) + eps)` without. Bias correction is equivalent to
//! multiplying the uncorrected direction by [`rho`] (exactly when `eps = 0`).

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OptimError {
    #[error("invalid optimizer config: {0}")]
    InvalidConfig(String),
    #[error("step index must be >= 1, got {0}")]
    InvalidStep(u64),
    #[error("length mismatch: params {params}, grad {grad}, state {state}")]
    ShapeMismatch {
        params: usize,
        grad: usize,
        state: usize,
    },
    #[error("non-finite value encountered at step {step}")]
    Diverged { step: u64 },
    #[error("empty gradient sequence")]
    EmptySequence,
}

pub type Result<T> = std::result::Result<T, OptimError>;

fn check_beta(name: &str, beta: f64) -> Result<()> {
    if (0.0..1.0).contains(&beta) {
        Ok(())
    } else {
        Err(OptimError::InvalidConfig(format!(
            "{name} must lie in [0, 1), got {beta}"
        )))
    }
}

/// Hyperparameters of a single AdamW run.
///
/// `epsilon = 0` is accepted so that the exact absorption identity can be
/// exercised; every other bound is enforced by [`AdamConfig::validate`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub weight_decay: f64,
    pub clip_norm: Option<f64>,
    pub bias_correction: bool,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            weight_decay: 0.0,
            clip_norm: Some(1.0),
            bias_correction: true,
        }
    }
}

impl AdamConfig {
    pub fn new(
        beta1: f64,
        beta2: f64,
        epsilon: f64,
        weight_decay: f64,
        clip_norm: Option<f64>,
        bias_correction: bool,
    ) -> Result<Self> {
        let config = Self {
            beta1,
            beta2,
            epsilon,
            weight_decay,
            clip_norm,
            bias_correction,
        };
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        check_beta("beta1", self.beta1)?;
        check_beta("beta2", self.beta2)?;
        if !(self.epsilon >= 0.0 && self.epsilon.is_finite()) {
            return Err(OptimError::InvalidConfig(format!(
                "epsilon must be finite and >= 0, got {}",
                self.epsilon
            )));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return Err(OptimError::InvalidConfig(format!(
                "weight_decay must be finite and >= 0, got {}",
                self.weight_decay
            )));
        }
        if let Some(c) = self.clip_norm {
            if !(c > 0.0 && c.is_finite()) {
                return Err(OptimError::InvalidConfig(format!(
                    "clip_norm must be > 0, got {c}"
                )));
            }
        }
        Ok(())
    }

    pub fn with_bias_correction(mut self, on: bool) -> Self {
        self.bias_correction = on;
        self
    }

    pub fn with_betas(mut self, beta1: f64, beta2: f64) -> Self {
        self.beta1 = beta1;
        self.beta2 = beta2;
        self
    }

    pub fn with_epsilon(mut self, epsilon: f64) -> Self {
        self.epsilon = epsilon;
        self
    }

    pub fn with_weight_decay(mut self, weight_decay: f64) -> Self {
        self.weight_decay = weight_decay;
        self
    }

    pub fn with_clip_norm(mut self, clip_norm: Option<f64>) -> Self {
        self.clip_norm = clip_norm;
        self
    }
}

/// Flat parameter vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamVector(pub Vec<f64>);

impl ParamVector {
    pub fn new(values: Vec<f64>) -> Self {
        Self(values)
    }

    pub fn zeros(len: usize) -> Self {
        Self(vec![0.0; len])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|x| x.is_finite())
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl From<Vec<f64>> for ParamVector {
    fn from(values: Vec<f64>) -> Self {
        Self(values)
    }
}

/// First and second moments plus the count of applied steps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
}

impl AdamState {
    pub fn new(len: usize) -> Self {
        Self {
            m: vec![0.0; len],
            v: vec![0.0; len],
            t: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.m.len()
    }

    pub fn is_empty(&self) -> bool {
        self.m.is_empty()
    }
}

/// Bias-correction factor `sqrt(1 - b2^t) / (1 - b1^t)`.
///
/// With bias correction on, the Adam direction equals `rho * m / sqrt(v)`,
/// so `rho(t) * lr` is the learning rate actually applied.
pub fn rho(t: u64, beta1: f64, beta2: f64) -> Result<f64> {
    if t == 0 {
        return Err(OptimError::InvalidStep(t));
    }
    check_beta("beta1", beta1)?;
    check_beta("beta2", beta2)?;
    Ok((1.0 - pow_t(beta2, t)).sqrt() / (1.0 - pow_t(beta1, t)))
}

/// `beta^t` with an integer exponent; saturates to 0 for huge `t`.
pub(crate) fn pow_t(beta: f64, t: u64) -> f64 {
    match i32::try_from(t) {
        Ok(t) => beta.powi(t),
        Err(_) => beta.powf(t as f64),
    }
}

pub fn l2_norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Rescales `grad` so its global L2 norm does not exceed `threshold`.
pub fn clip_global_norm(grad: &[f64], threshold: f64) -> Result<Vec<f64>> {
    if !(threshold > 0.0 && threshold.is_finite()) {
        return Err(OptimError::InvalidConfig(format!(
            "clip threshold must be > 0, got {threshold}"
        )));
    }
    if grad.iter().any(|g| !g.is_finite()) {
        return Err(OptimError::Diverged { step: 0 });
    }
    let norm = l2_norm(grad);
    if norm <= threshold {
        return Ok(grad.to_vec());
    }
    let scale = threshold / norm;
    Ok(grad.iter().map(|g| g * scale).collect())
}

/// One AdamW step. Returns the new parameters and moments; the inputs are
/// left untouched.
pub fn adam_step(
    params: &ParamVector,
    state: &AdamState,
    grad: &[f64],
    lr: f64,
    config: &AdamConfig,
) -> Result<(ParamVector, AdamState)> {
    let mut params = params.clone();
    let mut state = state.clone();
    adam_step_in_place(&mut params, &mut state, grad, lr, config)?;
    Ok((params, state))
}

/// In-place variant of [`adam_step`] used by the training loop.
///
/// On error the inputs may be partially updated; callers treat an error as
/// the end of the run.
pub fn adam_step_in_place(
    params: &mut ParamVector,
    state: &mut AdamState,
    grad: &[f64],
    lr: f64,
    config: &AdamConfig,
) -> Result<()> {
    let n = params.len();
    if grad.len() != n || state.m.len() != n || state.v.len() != n {
        return Err(OptimError::ShapeMismatch {
            params: n,
            grad: grad.len(),
            state: state.m.len().min(state.v.len()),
        });
    }
    if !(lr >= 0.0 && lr.is_finite()) {
        return Err(OptimError::InvalidConfig(format!(
            "learning rate must be finite and >= 0, got {lr}"
        )));
    }
    let t = state.t + 1;
    if grad.iter().any(|g| !g.is_finite()) || !params.is_finite() {
        return Err(OptimError::Diverged { step: t });
    }

    let clipped;
    let grad = match config.clip_norm {
        Some(c) => {
            clipped = clip_global_norm(grad, c).map_err(|e| match e {
                OptimError::Diverged { .. } => OptimError::Diverged { step: t },
                other => other,
            })?;
            &clipped[..]
        }
        None => grad,
    };

    let (b1, b2) = (config.beta1, config.beta2);
    let (c1, c2) = if config.bias_correction {
        (1.0 - pow_t(b1, t), 1.0 - pow_t(b2, t))
    } else {
        (1.0, 1.0)
    };
    let eps = config.epsilon;
    let decay = lr * config.weight_decay;

    for (i, &g) in grad.iter().enumerate() {
        let m = b1 * state.m[i] + (1.0 - b1) * g;
        let v = b2 * state.v[i] + (1.0 - b2) * g * g;
        state.m[i] = m;
        state.v[i] = v;

        let denom = (v / c2).sqrt() + eps;
        let direction = if denom == 0.0 { 0.0 } else { (m / c1) / denom };
        let theta = params.0[i];
        params.0[i] = theta - lr * direction - decay * theta;
    }
    state.t = t;

    if !params.is_finite() {
        return Err(OptimError::Diverged { step: t });
    }
    Ok(())
}

/// Closed-form EMA `(1 - b) * sum_j b^(t-j) g_j` (or of `g_j^2` when
/// `square` is set). Test oracle for the recursive moment updates.
pub fn ema_closed_form(grads: &[Vec<f64>], beta: f64, square: bool) -> Result<Vec<f64>> {
    check_beta("beta", beta)?;
    let t = grads.len();
    let first = grads.first().ok_or(OptimError::EmptySequence)?;
    let n = first.len();
    let mut out = vec![0.0; n];
    for (j, g) in grads.iter().enumerate() {
        if g.len() != n {
            return Err(OptimError::ShapeMismatch {
                params: n,
                grad: g.len(),
                state: n,
            });
        }
        let weight = (1.0 - beta) * pow_t(beta, (t - 1 - j) as u64);
        for (o, &x) in out.iter_mut().zip(g) {
            *o += weight * if square { x * x } else { x };
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn cfg(bias: bool) -> AdamConfig {
        AdamConfig::new(0.9, 0.999, 1e-8, 0.0, None, bias).unwrap()
    }

    #[test]
    fn rho_reference_values() {
        for t in [1, 2, 10, 1000] {
            assert_eq!(rho(t, 0.0, 0.0).unwrap(), 1.0);
        }
        assert_relative_eq!(
            rho(1, 0.9, 0.999).unwrap(),
            0.316_227_766_016_837_93,
            max_relative = 1e-14
        );
        assert_relative_eq!(
            rho(1, 0.95, 0.95).unwrap(),
            4.472_135_954_999_579,
            max_relative = 1e-14
        );
        let r5 = rho(5, 0.9, 0.999).unwrap();
        assert_relative_eq!(r5, 0.172_498_846_904_528_3, max_relative = 1e-12);
        assert!(r5 < rho(1, 0.9, 0.999).unwrap());
    }

    #[test]
    fn rho_rejects_bad_input() {
        assert_eq!(rho(0, 0.9, 0.9), Err(OptimError::InvalidStep(0)));
        assert!(rho(1, 1.0, 0.9).is_err());
        assert!(rho(1, 0.9, -0.1).is_err());
    }

    #[test]
    fn config_validation() {
        assert!(AdamConfig::new(1.0, 0.9, 1e-8, 0.0, None, true).is_err());
        assert!(AdamConfig::new(0.9, 1.0, 1e-8, 0.0, None, true).is_err());
        assert!(AdamConfig::new(0.9, 0.9, -1e-8, 0.0, None, true).is_err());
        assert!(AdamConfig::new(0.9, 0.9, 1e-8, -0.1, None, true).is_err());
        assert!(AdamConfig::new(0.9, 0.9, 1e-8, 0.0, Some(0.0), true).is_err());
        assert!(AdamConfig::new(0.0, 0.0, 0.0, 0.0, Some(1.0), false).is_ok());
    }

    #[test]
    fn clipping() {
        let g = [0.3, 0.4];
        assert_eq!(clip_global_norm(&g, 1.0).unwrap(), g.to_vec());
        let c = clip_global_norm(&[3.0, 4.0], 1.0).unwrap();
        assert_relative_eq!(c[0], 0.6, epsilon = 1e-15);
        assert_relative_eq!(c[1], 0.8, epsilon = 1e-15);
        assert_eq!(clip_global_norm(&[0.0, 0.0], 0.5).unwrap(), vec![0.0, 0.0]);
        assert!(matches!(
            clip_global_norm(&[f64::NAN], 1.0),
            Err(OptimError::Diverged { .. })
        ));
    }

    #[test]
    fn zero_gradient_is_a_no_op() {
        let p = ParamVector::new(vec![1.0, -2.0, 3.0]);
        let s = AdamState::new(3);
        let (p2, s2) = adam_step(&p, &s, &[0.0; 3], 0.1, &cfg(true)).unwrap();
        assert_eq!(p2, p);
        assert_eq!(s2.t, 1);
        let zero_eps = cfg(false).with_epsilon(0.0);
        let (p3, _) = adam_step(&p, &s, &[0.0; 3], 0.1, &zero_eps).unwrap();
        assert_eq!(p3, p);
    }

    #[test]
    fn first_step_is_sign_like() {
        let c = cfg(true).with_epsilon(1e-12);
        let p = ParamVector::new(vec![0.5, 0.5, 0.5]);
        let (p2, _) = adam_step(&p, &AdamState::new(3), &[2.0, -1e-3, 7.5], 0.01, &c).unwrap();
        assert_relative_eq!(p2.0[0], 0.49, max_relative = 1e-9);
        assert_relative_eq!(p2.0[1], 0.51, max_relative = 1e-9);
        assert_relative_eq!(p2.0[2], 0.49, max_relative = 1e-9);
    }

    #[test]
    fn decoupled_decay_uses_pre_step_params() {
        let c = cfg(true).with_weight_decay(0.1);
        let p = ParamVector::new(vec![2.0]);
        let (p2, _) = adam_step(&p, &AdamState::new(1), &[0.0], 0.5, &c).unwrap();
        assert_relative_eq!(p2.0[0], 2.0 - 0.5 * 0.1 * 2.0, epsilon = 1e-15);
    }

    #[test]
    fn shape_and_divergence_errors() {
        let p = ParamVector::new(vec![1.0, 2.0]);
        let s = AdamState::new(2);
        assert!(matches!(
            adam_step(&p, &s, &[1.0], 0.1, &cfg(true)),
            Err(OptimError::ShapeMismatch { .. })
        ));
        assert_eq!(
            adam_step(&p, &s, &[f64::INFINITY, 0.0], 0.1, &cfg(true)).unwrap_err(),
            OptimError::Diverged { step: 1 }
        );
        let mut s5 = s.clone();
        s5.t = 4;
        assert_eq!(
            adam_step(
                &ParamVector::new(vec![f64::NAN, 0.0]),
                &s5,
                &[1.0, 1.0],
                0.1,
                &cfg(true)
            )
            .unwrap_err(),
            OptimError::Diverged { step: 5 }
        );
    }

    #[test]
    fn ema_closed_form_edge_cases() {
        assert_eq!(
            ema_closed_form(&[], 0.5, false),
            Err(OptimError::EmptySequence)
        );
        let g = vec![vec![2.0, -4.0]];
        assert_eq!(ema_closed_form(&g, 0.75, false).unwrap(), vec![0.5, -1.0]);
        assert_eq!(ema_closed_form(&g, 0.75, true).unwrap(), vec![1.0, 4.0]);
        let seq = vec![vec![1.0], vec![5.0], vec![-3.0]];
        assert_eq!(ema_closed_form(&seq, 0.0, false).unwrap(), vec![-3.0]);
    }

    #[test]
    fn clipping_happens_before_moments() {
        let c = cfg(false).with_clip_norm(Some(1.0));
        let (_, s) = adam_step(
            &ParamVector::zeros(2),
            &AdamState::new(2),
            &[3.0, 4.0],
            0.1,
            &c,
        )
        .unwrap();
        assert_relative_eq!(s.m[0], 0.1 * 0.6, epsilon = 1e-15);
        assert_relative_eq!(s.v[1], 0.001 * 0.64, epsilon = 1e-15);
    }
}
