use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use adam_rho::harness::config::{load, EquivalenceFile, RunFile, SweepFile};
use adam_rho::harness::persist::{read_runs, write_curves, write_rho, write_runs, write_traces};
use adam_rho::harness::{check_equivalence, run, summarize, sweep, HarnessError, RunRecord};
use adam_rho::{effective_lr_trace, AdamConfig, Schedule, ScheduleKind};

#[derive(Parser)]
#[command(
    name = "adam-rho",
    version,
    about = "AdamW bias-correction ablation harness"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Execute a single run from a TOML config; writes runs.csv and trace.csv.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value = ".")]
        out_dir: PathBuf,
    },
    /// Execute a sweep grid from a TOML config; writes runs.csv, trace.csv
    /// and curves.csv.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value = ".")]
        out_dir: PathBuf,
        #[arg(long, default_value_t = 1)]
        parallelism: usize,
    },
    /// Emit the effective learning-rate table lr_t * rho(t) as rho.csv.
    RhoTrace {
        #[arg(long, value_parser = parse_kind, default_value = "constant")]
        schedule: ScheduleKind,
        #[arg(long, default_value_t = 1.0)]
        peak_lr: f64,
        #[arg(long)]
        steps: u64,
        #[arg(long, default_value_t = 0.9)]
        beta1: f64,
        #[arg(long, default_value_t = 0.999)]
        beta2: f64,
        #[arg(long, default_value_t = 0.1)]
        warmup_fraction: f64,
        /// Report rho without applying it to the effective column.
        #[arg(long)]
        no_bias_correction: bool,
        /// Output path; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the corrected / absorbed-uncorrected pair and compare trajectories.
    /// Exits with status 2 when the gap exceeds the tolerance.
    CheckEquivalence {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the tolerance in the config file.
        #[arg(long)]
        tolerance: Option<f64>,
    },
    /// Aggregate runs.csv into curves.csv.
    Summarize {
        #[arg(long)]
        runs: PathBuf,
        /// Output path; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn parse_kind(s: &str) -> Result<ScheduleKind, String> {
    s.parse()
        .map_err(|e: adam_rho::schedules::ScheduleError| e.to_string())
}

fn create(path: &Path) -> Result<BufWriter<File>, HarnessError> {
    Ok(BufWriter::new(File::create(path)?))
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>, HarnessError> {
    Ok(match path {
        Some(p) => Box::new(create(p)?),
        None => Box::new(io::stdout().lock()),
    })
}

fn write_run_outputs(dir: &Path, records: &[RunRecord]) -> Result<(), HarnessError> {
    std::fs::create_dir_all(dir)?;
    write_runs(create(&dir.join("runs.csv"))?, records)?;
    write_traces(create(&dir.join("trace.csv"))?, records)?;
    Ok(())
}

enum Outcome {
    Ok,
    CheckFailed,
}

fn execute(cli: Cli) -> Result<Outcome, HarnessError> {
    match cli.command {
        Command::Run { config, out_dir } => {
            let spec = load::<RunFile>(&config)?.to_spec()?;
            let record = run(&spec)?;
            write_run_outputs(&out_dir, std::slice::from_ref(&record))?;
            match record.final_loss() {
                Some(l) => eprintln!("final loss {l:.6e} ({:.2}s)", record.wall_time_s),
                None => eprintln!("run diverged at step {:?}", record.outcome.diverged_at),
            }
        }
        Command::Sweep {
            config,
            out_dir,
            parallelism,
        } => {
            let spec = load::<SweepFile>(&config)?.to_spec()?;
            eprintln!("running {} runs on {parallelism} thread(s)", spec.len());
            let records = sweep(&spec, parallelism)?;
            write_run_outputs(&out_dir, &records)?;
            write_curves(create(&out_dir.join("curves.csv"))?, &summarize(&records))?;
            let diverged = records.iter().filter(|r| r.is_diverged()).count();
            eprintln!("done: {} runs, {diverged} diverged", records.len());
        }
        Command::RhoTrace {
            schedule,
            peak_lr,
            steps,
            beta1,
            beta2,
            warmup_fraction,
            no_bias_correction,
            out,
        } => {
            let config = AdamConfig::default()
                .with_betas(beta1, beta2)
                .with_bias_correction(!no_bias_correction);
            config.validate()?;
            let sched = Schedule::from_kind(schedule, peak_lr, steps, warmup_fraction)?;
            let rows = effective_lr_trace(&sched, &config, steps)?;
            write_rho(output(out.as_deref())?, &rows)?;
        }
        Command::CheckEquivalence { config, tolerance } => {
            let file = load::<EquivalenceFile>(&config)?;
            if file.schedule.absorb.is_some() {
                return Err(HarnessError::Config(
                    "check-equivalence takes the base schedule; drop `absorb`".into(),
                ));
            }
            let problem = file.problem.build()?;
            let schedule = file.schedule.build(file.steps)?;
            let opt = file.optimizer.to_config()?;
            let tol = tolerance.unwrap_or(file.tolerance);
            let report = check_equivalence(problem.as_ref(), &schedule, &opt, file.seed, tol)?;
            println!(
                "beta=({}, {}) steps={} seed={} eps=0 gap={:.3e} eps={:e}(rescaled) gap={:.3e} tol={:e} -> {}",
                report.beta1,
                report.beta2,
                report.steps,
                report.seed,
                report.max_gap_zero_eps,
                report.epsilon,
                report.max_gap_rescaled_eps,
                report.tolerance,
                if report.passed { "PASS" } else { "FAIL" }
            );
            if !report.passed {
                return Ok(Outcome::CheckFailed);
            }
        }
        Command::Summarize { runs, out } => {
            let records = read_runs(File::open(&runs)?)?;
            write_curves(output(out.as_deref())?, &summarize(&records))?;
        }
    }
    Ok(Outcome::Ok)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(Outcome::Ok) => ExitCode::SUCCESS,
        Ok(Outcome::CheckFailed) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
