//! AdamW with toggleable bias correction, the bias-correction factor
//! `rho(t; b1, b2)` as an explicit learning-rate modifier, and a harness for
//! learning-rate sensitivity sweeps on small differentiable problems.

pub mod harness;
pub mod optim;
pub mod problems;
pub mod rng;
pub mod schedules;

pub use optim::{
    adam_step, clip_global_norm, ema_closed_form, rho, AdamConfig, AdamState, OptimError,
    ParamVector,
};
pub use problems::{finite_diff_grad, Problem, ProblemSpec};
pub use schedules::{effective_lr_trace, Schedule, ScheduleKind};
