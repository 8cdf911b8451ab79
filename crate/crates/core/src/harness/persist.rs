//! CSV files: `runs.csv`, `trace.csv`, `rho.csv`, `curves.csv`.
//!
//! Floats are written in Rust's shortest round-trip form, so every numeric
//! field reads back bit-for-bit.

use std::io::{Read, Write};

use super::run::{RunOutcome, RunRecord, RunSpec};
use super::summary::SensitivityCurve;
use super::{parse_schedule, schedule_label, HarnessError, Result};
use crate::optim::AdamConfig;
use crate::schedules::TraceRow;

pub const RUNS_HEADER: [&str; 14] = [
    "problem",
    "beta1",
    "beta2",
    "epsilon",
    "weight_decay",
    "clip_norm",
    "bias_correction",
    "schedule",
    "peak_lr",
    "warmup_fraction",
    "steps",
    "seed",
    "final_loss",
    "wall_time_s",
];
pub const TRACE_HEADER: [&str; 3] = ["run_id", "step", "loss"];
pub const RHO_HEADER: [&str; 4] = ["step", "lr", "rho", "effective_lr"];
pub const CURVES_HEADER: [&str; 10] = [
    "problem",
    "beta1",
    "beta2",
    "bias_correction",
    "schedule",
    "peak_lr",
    "mean_final_loss",
    "std_final_loss",
    "n_seeds",
    "n_diverged",
];

/// `final_loss` value of a diverged run.
pub const DIVERGED: &str = "diverged";

pub fn fmt_f64(x: f64) -> String {
    format!("{x:?}")
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map(fmt_f64).unwrap_or_default()
}

pub fn write_runs<W: Write>(out: W, records: &[RunRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(RUNS_HEADER)?;
    for r in records {
        let c = &r.spec.config;
        let s = &r.spec.schedule;
        w.write_record([
            r.spec.problem.to_string(),
            fmt_f64(c.beta1),
            fmt_f64(c.beta2),
            fmt_f64(c.epsilon),
            fmt_f64(c.weight_decay),
            fmt_opt(c.clip_norm),
            c.bias_correction.to_string(),
            schedule_label(s),
            fmt_f64(s.peak_lr()),
            fmt_f64(s.warmup_fraction()),
            s.total_steps().to_string(),
            r.spec.seed.to_string(),
            r.final_loss()
                .map(fmt_f64)
                .unwrap_or_else(|| DIVERGED.to_string()),
            fmt_f64(r.wall_time_s),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_traces<W: Write>(out: W, records: &[RunRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(TRACE_HEADER)?;
    for (id, r) in records.iter().enumerate() {
        for &(step, loss) in &r.outcome.loss_trace {
            w.write_record([id.to_string(), step.to_string(), fmt_f64(loss)])?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_rho<W: Write>(out: W, rows: &[TraceRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(RHO_HEADER)?;
    for r in rows {
        w.write_record([
            r.step.to_string(),
            fmt_f64(r.lr),
            fmt_f64(r.rho),
            fmt_f64(r.effective_lr),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_curves<W: Write>(out: W, curves: &[SensitivityCurve]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CURVES_HEADER)?;
    for c in curves {
        for p in &c.points {
            w.write_record([
                c.problem.clone(),
                fmt_f64(c.beta1),
                fmt_f64(c.beta2),
                c.bias_correction.to_string(),
                c.schedule.clone(),
                fmt_f64(p.peak_lr),
                fmt_opt(p.mean_final_loss),
                fmt_opt(p.std_final_loss),
                p.n_seeds.to_string(),
                p.n_diverged.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

fn field(rec: &csv::StringRecord, i: usize, line: usize) -> Result<&str> {
    rec.get(i).ok_or_else(|| {
        HarnessError::Config(format!(
            "runs.csv line {line}: missing column {}",
            RUNS_HEADER[i]
        ))
    })
}

fn num<T: std::str::FromStr>(rec: &csv::StringRecord, i: usize, line: usize) -> Result<T> {
    let s = field(rec, i, line)?;
    s.parse().map_err(|_| {
        HarnessError::Config(format!(
            "runs.csv line {line}: bad value `{s}` in column {}",
            RUNS_HEADER[i]
        ))
    })
}

/// Reads `runs.csv`. Loss traces and final parameters are not part of the
/// file and come back empty; the spec columns reproduce the run exactly.
pub fn read_runs<R: Read>(input: R) -> Result<Vec<RunRecord>> {
    let mut rdr = csv::Reader::from_reader(input);
    let header = rdr.headers()?.clone();
    if header.iter().ne(RUNS_HEADER.iter().copied()) {
        return Err(HarnessError::Config(format!(
            "runs.csv header mismatch: expected `{}`, found `{}`",
            RUNS_HEADER.join(","),
            header.iter().collect::<Vec<_>>().join(",")
        )));
    }
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let line = i + 2;
        let clip = field(&rec, 5, line)?;
        let config = AdamConfig {
            beta1: num(&rec, 1, line)?,
            beta2: num(&rec, 2, line)?,
            epsilon: num(&rec, 3, line)?,
            weight_decay: num(&rec, 4, line)?,
            clip_norm: if clip.is_empty() {
                None
            } else {
                Some(num(&rec, 5, line)?)
            },
            bias_correction: num(&rec, 6, line)?,
        };
        config.validate()?;
        let schedule = parse_schedule(
            field(&rec, 7, line)?,
            num(&rec, 8, line)?,
            num(&rec, 9, line)?,
            num(&rec, 10, line)?,
        )?;
        let final_loss = match field(&rec, 12, line)? {
            DIVERGED => None,
            _ => Some(num(&rec, 12, line)?),
        };
        out.push(RunRecord {
            spec: RunSpec {
                problem: field(&rec, 0, line)?.parse()?,
                config,
                schedule,
                seed: num(&rec, 11, line)?,
            },
            outcome: RunOutcome {
                initial_loss: f64::NAN,
                final_loss,
                diverged_at: None,
                loss_trace: Vec::new(),
                final_params: Vec::new(),
            },
            wall_time_s: num(&rec, 13, line)?,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn float_format_round_trips() {
        for x in [1e-8, 0.1, 3.0, 1e300, 0.31622776601683794, 5e-324] {
            assert_eq!(fmt_f64(x).parse::<f64>().unwrap().to_bits(), x.to_bits());
        }
    }

    #[test]
    fn header_mismatch_is_reported() {
        let bad = "problem,beta1\nrosenbrock:dim=2,0.9\n";
        let err = read_runs(bad.as_bytes()).unwrap_err();
        assert!(err.to_string().contains("header mismatch"));
    }
}
