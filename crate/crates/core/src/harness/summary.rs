use std::collections::BTreeMap;

use serde::Serialize;

use super::run::RunRecord;
use super::schedule_label;

/// Seed aggregate at one learning rate. `mean`/`std` cover the
/// non-diverged seeds only; `n_seeds` counts those, `n_diverged` the rest.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CurvePoint {
    pub peak_lr: f64,
    pub mean_final_loss: Option<f64>,
    /// Sample standard deviation; `None` with fewer than two finite seeds.
    pub std_final_loss: Option<f64>,
    pub n_seeds: usize,
    pub n_diverged: usize,
}

/// Learning-rate sensitivity curve for one (problem, betas, bias flag,
/// schedule) group, points sorted by increasing learning rate.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SensitivityCurve {
    pub problem: String,
    pub beta1: f64,
    pub beta2: f64,
    pub bias_correction: bool,
    pub schedule: String,
    pub points: Vec<CurvePoint>,
}

impl SensitivityCurve {
    /// Point with the lowest mean final loss; ties go to the smaller lr.
    pub fn best(&self) -> Option<&CurvePoint> {
        self.points
            .iter()
            .filter(|p| p.mean_final_loss.is_some())
            .fold(None, |best: Option<&CurvePoint>, p| match best {
                Some(b) if b.mean_final_loss <= p.mean_final_loss => Some(b),
                _ => Some(p),
            })
    }
}

pub fn mean_std(values: &[f64]) -> (Option<f64>, Option<f64>) {
    if values.is_empty() {
        return (None, None);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (Some(mean), None);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (Some(mean), Some(var.sqrt()))
}

/// Groups records by (problem, betas, bias flag, schedule) and aggregates
/// final losses across seeds at each learning rate. Groups keep the order
/// in which they first appear.
pub fn summarize(records: &[RunRecord]) -> Vec<SensitivityCurve> {
    type Key = (String, u64, u64, bool, String);
    let mut order: Vec<Key> = Vec::new();
    let mut groups: BTreeMap<Key, BTreeMap<u64, Vec<Option<f64>>>> = BTreeMap::new();
    for r in records {
        let c = &r.spec.config;
        let key = (
            r.spec.problem.to_string(),
            c.beta1.to_bits(),
            c.beta2.to_bits(),
            c.bias_correction,
            schedule_label(&r.spec.schedule),
        );
        let by_lr = groups.entry(key.clone()).or_insert_with(|| {
            order.push(key);
            BTreeMap::new()
        });
        // positive floats order like their bit patterns
        by_lr
            .entry(r.spec.schedule.peak_lr().to_bits())
            .or_default()
            .push(r.final_loss());
    }

    order
        .into_iter()
        .map(|key| {
            let by_lr = &groups[&key];
            let points = by_lr
                .iter()
                .map(|(lr_bits, losses)| {
                    let finite: Vec<f64> = losses.iter().flatten().copied().collect();
                    let (mean, std) = mean_std(&finite);
                    CurvePoint {
                        peak_lr: f64::from_bits(*lr_bits),
                        mean_final_loss: mean,
                        std_final_loss: std,
                        n_seeds: finite.len(),
                        n_diverged: losses.len() - finite.len(),
                    }
                })
                .collect();
            let (problem, b1, b2, bias_correction, schedule) = key;
            SensitivityCurve {
                problem,
                beta1: f64::from_bits(b1),
                beta2: f64::from_bits(b2),
                bias_correction,
                schedule,
                points,
            }
        })
        .collect()
}
