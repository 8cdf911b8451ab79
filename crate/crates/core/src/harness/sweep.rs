use rayon::prelude::*;

use super::run::{run_with_problem, RunRecord, RunSpec};
use super::{HarnessError, Result};
use crate::optim::AdamConfig;
use crate::problems::ProblemSpec;
use crate::schedules::{Schedule, ScheduleKind, DEFAULT_WARMUP_FRACTION};

/// Grid of runs. The Cartesian product of the list fields is the run set.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub problem: ProblemSpec,
    pub learning_rates: Vec<f64>,
    pub beta_pairs: Vec<(f64, f64)>,
    pub bias_correction: Vec<bool>,
    pub schedules: Vec<ScheduleKind>,
    pub seeds: Vec<u64>,
    pub steps: u64,
    pub warmup_fraction: f64,
    /// Source of epsilon, weight decay and clipping; betas and the bias
    /// flag are taken from the grid.
    pub base: AdamConfig,
}

impl SweepSpec {
    pub fn new(problem: ProblemSpec, steps: u64) -> Self {
        Self {
            problem,
            learning_rates: Vec::new(),
            beta_pairs: Vec::new(),
            bias_correction: vec![true, false],
            schedules: vec![ScheduleKind::WarmupCosine],
            seeds: (0..5).collect(),
            steps,
            warmup_fraction: DEFAULT_WARMUP_FRACTION,
            base: AdamConfig::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let empty = [
            ("learning_rates", self.learning_rates.is_empty()),
            ("beta_pairs", self.beta_pairs.is_empty()),
            ("bias_correction", self.bias_correction.is_empty()),
            ("schedules", self.schedules.is_empty()),
            ("seeds", self.seeds.is_empty()),
        ];
        if let Some((name, _)) = empty.iter().find(|(_, e)| *e) {
            return Err(HarnessError::Config(format!(
                "sweep grid `{name}` is empty"
            )));
        }
        if self.steps == 0 {
            return Err(HarnessError::Config("steps must be >= 1".into()));
        }
        if let Some(lr) = self
            .learning_rates
            .iter()
            .find(|lr| !(**lr > 0.0 && lr.is_finite()))
        {
            return Err(HarnessError::Config(format!(
                "learning rates must be > 0, got {lr}"
            )));
        }
        self.base.validate()?;
        for &(b1, b2) in &self.beta_pairs {
            self.base.with_betas(b1, b2).validate()?;
        }
        Ok(())
    }

    /// Number of runs in the product.
    pub fn len(&self) -> usize {
        self.learning_rates.len()
            * self.beta_pairs.len()
            * self.bias_correction.len()
            * self.schedules.len()
            * self.seeds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Runs in canonical grid order: schedule, beta pair, bias flag,
    /// learning rate, seed (outermost to innermost).
    pub fn runs(&self) -> Result<Vec<RunSpec>> {
        self.validate()?;
        let mut out = Vec::with_capacity(self.len());
        for &kind in &self.schedules {
            for &(b1, b2) in &self.beta_pairs {
                for &bias in &self.bias_correction {
                    for &lr in &self.learning_rates {
                        let schedule =
                            Schedule::from_kind(kind, lr, self.steps, self.warmup_fraction)?;
                        for &seed in &self.seeds {
                            out.push(RunSpec {
                                problem: self.problem.clone(),
                                config: self.base.with_betas(b1, b2).with_bias_correction(bias),
                                schedule: schedule.clone(),
                                seed,
                            });
                        }
                    }
                }
            }
        }
        Ok(out)
    }
}

/// `points` learning rates log-spaced over `[min, max]`.
pub fn log_grid(min: f64, max: f64, points: usize) -> Result<Vec<f64>> {
    if !(min > 0.0 && max >= min && points >= 1) {
        return Err(HarnessError::Config(format!(
            "invalid lr grid: min {min}, max {max}, points {points}"
        )));
    }
    if points == 1 {
        return Ok(vec![min]);
    }
    let (lo, hi) = (min.log10(), max.log10());
    Ok((0..points)
        .map(|i| match i {
            0 => min,
            i if i == points - 1 => max,
            i => 10f64.powf(lo + (hi - lo) * i as f64 / (points - 1) as f64),
        })
        .collect())
}

/// Executes every run of the grid on up to `parallelism` threads. The
/// output order is the canonical grid order for every parallelism level.
pub fn sweep(spec: &SweepSpec, parallelism: usize) -> Result<Vec<RunRecord>> {
    if parallelism == 0 {
        return Err(HarnessError::Config("parallelism must be >= 1".into()));
    }
    let runs = spec.runs()?;
    let problem = spec.problem.build()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(parallelism)
        .build()
        .map_err(|e| HarnessError::Runtime(e.to_string()))?;
    pool.install(|| {
        runs.par_iter()
            .map(|r| run_with_problem(problem.as_ref(), r))
            .collect()
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::run::run;

    fn small() -> SweepSpec {
        let mut s = SweepSpec::new(
            ProblemSpec::Quadratic {
                dim: 3,
                condition: 10.0,
                noise: 0.1,
                data_seed: 0,
            },
            50,
        );
        s.learning_rates = vec![0.01];
        s.beta_pairs = vec![(0.9, 0.999)];
        s.bias_correction = vec![true];
        s.seeds = vec![4];
        s
    }

    #[test]
    fn degenerate_grid_matches_single_run() {
        let s = small();
        let records = sweep(&s, 1).unwrap();
        assert_eq!(records.len(), 1);
        let single = run(&s.runs().unwrap()[0]).unwrap();
        assert_eq!(records[0].without_timing(), single.without_timing());
    }

    #[test]
    fn grid_count() {
        let mut s = small();
        s.learning_rates = log_grid(1e-3, 1e-1, 7).unwrap();
        s.bias_correction = vec![true, false];
        s.seeds = vec![0, 1, 2];
        assert_eq!(s.len(), 42);
        assert_eq!(sweep(&s, 4).unwrap().len(), 42);
    }

    #[test]
    fn empty_grids_are_rejected() {
        let mut s = small();
        s.seeds.clear();
        assert!(matches!(sweep(&s, 1), Err(HarnessError::Config(_))));
        assert!(sweep(&small(), 0).is_err());
    }

    #[test]
    fn log_grid_endpoints() {
        let g = log_grid(1e-4, 1e-1, 4).unwrap();
        assert_eq!(g[0], 1e-4);
        assert_eq!(g[3], 1e-1);
        assert!((g[1] / 1e-3 - 1.0).abs() < 1e-12);
        assert!(log_grid(0.0, 1.0, 3).is_err());
    }
}
