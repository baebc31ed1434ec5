//! Experiment configuration, runs, bound evaluation and verification suites,
//! as driven by the command-line harness.

mod bounds;
mod config;
mod run;
mod suite;

pub use bounds::{
    bounds_for_run, bounds_prior, constants_for, pilot_input_bound, BoundStatus, BoundsSummary,
    Measured, PILOT_SAMPLES,
};
pub use config::{ActivationKind, ExperimentConfig, PRESET_NAMES};
pub use run::{regret_csv, run_trial, run_trials, summary_csv, CSV_HEADER, SUMMARY_HEADER};
pub use suite::{
    resolve_suites, run_suites, SuiteOutcome, SuiteSettings, SuiteStatus, SUITE_NAMES,
};
