//! `quasar-online`: runs online gradient descent experiments on single-neuron
//! models, evaluates the matching regret bounds and runs the verification
//! suites.
//!
//! Exit status: 0 on success, 1 on a usage or configuration error, 2 when a
//! verification check fails, 3 when a run diverges.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use quasar_core::experiment::{
    bounds_for_run, bounds_prior, regret_csv, run_suites, run_trial, run_trials, summary_csv,
    BoundStatus, ExperimentConfig, SuiteSettings, SuiteStatus,
};
use quasar_core::Error;

#[derive(Parser)]
#[command(
    name = "quasar-online",
    version,
    about = "Online gradient descent on drifting single-neuron models"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the configured experiment and write its CSV and bound report.
    Run {
        #[command(flatten)]
        source: ConfigSource,
        /// Output directory (created if missing).
        #[arg(long)]
        out: PathBuf,
    },
    /// Run verification suites; exits 2 if any applicable check fails.
    Verify {
        #[command(flatten)]
        source: ConfigSource,
        /// Comma-separated suite names; empty runs every suite.
        #[arg(long, value_delimiter = ',')]
        suite: Vec<String>,
        /// Also write every report to `<out>/checks.txt`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print constants, step-size ranges, the contraction factor and the
    /// regret bound for the configured run as JSON.
    Bounds {
        #[command(flatten)]
        source: ConfigSource,
    },
}

#[derive(Args)]
struct ConfigSource {
    /// JSON configuration file.
    #[arg(long, conflicts_with = "preset")]
    config: Option<PathBuf>,
    /// Start from a named preset instead of a file.
    #[arg(long)]
    preset: Option<String>,
    /// With --preset: enable label noise.
    #[arg(long, requires = "preset")]
    noisy: bool,
    /// Overrides the configured seed.
    #[arg(long, env = "QUASAR_SEED")]
    seed: Option<u64>,
}

enum Failure {
    Usage(String),
    Check,
    Divergence(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Divergence { .. } => Failure::Divergence(e.to_string()),
            other => Failure::Usage(other.to_string()),
        }
    }
}

fn io_failure(path: &Path, e: std::io::Error) -> Failure {
    Failure::Usage(format!("{}: {e}", path.display()))
}

impl ConfigSource {
    fn load(&self) -> Result<ExperimentConfig, Failure> {
        let mut cfg = match (&self.config, &self.preset) {
            (Some(path), _) => {
                let text = fs::read_to_string(path).map_err(|e| io_failure(path, e))?;
                ExperimentConfig::from_json(&text)?
            }
            (None, Some(name)) => ExperimentConfig::preset(name)?.with_noisy(self.noisy),
            (None, None) => ExperimentConfig::leaky_relu_default(),
        };
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        Ok(cfg)
    }
}

fn write(path: &Path, contents: &str) -> Result<(), Failure> {
    fs::write(path, contents).map_err(|e| io_failure(path, e))
}

fn to_json<T: serde::Serialize>(value: &T) -> Result<String, Failure> {
    serde_json::to_string_pretty(value)
        .map(|s| s + "\n")
        .map_err(|e| Failure::Usage(e.to_string()))
}

fn cmd_run(cfg: &ExperimentConfig, out: &Path) -> Result<(), Failure> {
    fs::create_dir_all(out).map_err(|e| io_failure(out, e))?;
    let records = run_trials(cfg)?;
    write(&out.join("config.json"), &to_json(cfg)?)?;
    let mut summaries = Vec::with_capacity(records.len());
    for rec in &records {
        summaries.push(bounds_for_run(cfg, rec)?);
    }
    if records.len() == 1 {
        write(&out.join("regret.csv"), &regret_csv(&records[0]))?;
        write(&out.join("bounds.json"), &to_json(&summaries[0])?)?;
    } else {
        for (i, rec) in records.iter().enumerate() {
            write(&out.join(format!("regret_trial_{i}.csv")), &regret_csv(rec))?;
        }
        write(&out.join("summary.csv"), &summary_csv(&records))?;
        write(&out.join("bounds.json"), &to_json(&summaries)?)?;
    }
    for (i, (rec, s)) in records.iter().zip(&summaries).enumerate() {
        let bound = s
            .bound
            .as_ref()
            .map_or_else(|| "-".to_string(), |b| format!("{:?}", b.bound_total));
        println!(
            "trial {i}: T={} cum_regret={:?} bound={bound} status={}",
            rec.horizon(),
            rec.final_regret(),
            s.status.as_str()
        );
    }
    Ok(())
}

fn cmd_verify(
    cfg: &ExperimentConfig,
    suites: &[String],
    out: Option<&Path>,
) -> Result<(), Failure> {
    let outcomes = run_suites(cfg, suites, SuiteSettings::default())?;
    let mut lines = String::new();
    let mut all_ok = true;
    for o in &outcomes {
        all_ok &= o.ok();
        let detail = match (&o.report, &o.status) {
            (Some(r), _) => r.summary_line(),
            (None, SuiteStatus::NotApplicable(msg)) => msg.clone(),
            _ => String::new(),
        };
        println!("{:<16} {:<44} {detail}", o.label(), o.name);
        if let Some(r) = &o.report {
            lines.push_str(&r.to_lines());
        }
    }
    if let Some(dir) = out {
        fs::create_dir_all(dir).map_err(|e| io_failure(dir, e))?;
        write(&dir.join("checks.txt"), &lines)?;
        write(&dir.join("config.json"), &to_json(cfg)?)?;
    }
    if all_ok {
        Ok(())
    } else {
        Err(Failure::Check)
    }
}

fn cmd_bounds(cfg: &ExperimentConfig) -> Result<(), Failure> {
    let prior = bounds_prior(cfg)?;
    if prior.status == BoundStatus::Inadmissible {
        println!(
            "{}",
            to_json(&serde_json::json!({ "prior": prior, "run": null }))?.trim_end()
        );
        return Err(Failure::Usage(prior.message.unwrap_or_default()));
    }
    let rec = run_trial(cfg, 0)?;
    let run = bounds_for_run(cfg, &rec)?;
    println!(
        "{}",
        to_json(&serde_json::json!({ "prior": prior, "run": run }))?.trim_end()
    );
    if run.status == BoundStatus::Inadmissible {
        return Err(Failure::Usage(run.message.unwrap_or_default()));
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match &cli.command {
        Command::Run { source, out } => source.load().and_then(|cfg| cmd_run(&cfg, out)),
        Command::Verify { source, suite, out } => source
            .load()
            .and_then(|cfg| cmd_verify(&cfg, suite, out.as_deref())),
        Command::Bounds { source } => source.load().and_then(|cfg| cmd_bounds(&cfg)),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Check) => {
            eprintln!("error: verification failed");
            ExitCode::from(2)
        }
        Err(Failure::Divergence(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(3)
        }
    }
}
