use std::fmt::Write as _;

use rayon::prelude::*;

use crate::error::Result;
use crate::runner::{run_online_with, RunOptions, RunRecord};

use super::ExperimentConfig;

pub const CSV_HEADER: &str =
    "t,instant_regret,cum_regret,dist_to_opt,path_var_cum,delta_est,in_basin";

pub const SUMMARY_HEADER: &str = "t,mean_cum_regret,q10_cum_regret,q50_cum_regret,q90_cum_regret";

/// Runs trial `trial` of the configured experiment.
pub fn run_trial(cfg: &ExperimentConfig, trial: usize) -> Result<RunRecord> {
    cfg.validate()?;
    let (p, env, mut rng) = cfg.build(trial)?;
    let opts = RunOptions {
        policy: cfg.policy()?,
        region: cfg.region()?,
        noisy: cfg.noisy,
        eval_m: cfg.eval_m,
        init: None,
    };
    run_online_with(&p, &env, &opts, &mut rng)
}

/// Runs every trial in parallel; results are in trial order.
pub fn run_trials(cfg: &ExperimentConfig) -> Result<Vec<RunRecord>> {
    (0..cfg.trials)
        .into_par_iter()
        .map(|i| run_trial(cfg, i))
        .collect()
}

/// One row per step. Floats use the shortest representation that parses
/// back to the same value; `in_basin` is 1 or 0.
pub fn regret_csv(rec: &RunRecord) -> String {
    let path = rec.env.path_var_prefix();
    let mut out = String::with_capacity(64 * (rec.horizon() + 1));
    out.push_str(CSV_HEADER);
    out.push('\n');
    for (i, path_var) in path.iter().enumerate().take(rec.horizon()) {
        let _ = writeln!(
            out,
            "{},{:?},{:?},{:?},{:?},{:?},{}",
            i + 1,
            rec.per_step_regret[i],
            rec.cum_regret[i],
            rec.dist_to_opt[i],
            path_var,
            rec.delta_estimates[i],
            u8::from(rec.basin_flags[i])
        );
    }
    out
}

/// Nearest-rank quantile of an ascending slice.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let rank = (q * sorted.len() as f64).ceil().max(1.0) as usize;
    sorted[rank.min(sorted.len()) - 1]
}

/// Mean and 10/50/90% quantiles of the cumulative regret across trials.
pub fn summary_csv(records: &[RunRecord]) -> String {
    let horizon = records.iter().map(RunRecord::horizon).min().unwrap_or(0);
    let mut out = String::new();
    out.push_str(SUMMARY_HEADER);
    out.push('\n');
    let mut col = Vec::with_capacity(records.len());
    for i in 0..horizon {
        col.clear();
        col.extend(records.iter().map(|r| r.cum_regret[i]));
        col.sort_by(f64::total_cmp);
        let mean = col.iter().sum::<f64>() / col.len() as f64;
        let _ = writeln!(
            out,
            "{},{:?},{:?},{:?},{:?}",
            i + 1,
            mean,
            quantile(&col, 0.1),
            quantile(&col, 0.5),
            quantile(&col, 0.9)
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> ExperimentConfig {
        ExperimentConfig {
            horizon: 30,
            n: 4,
            m: 20,
            eval_m: 20,
            ..ExperimentConfig::leaky_relu_default()
        }
    }

    #[test]
    fn csv_shape_and_round_trip() {
        let rec = run_trial(&small(), 0).unwrap();
        let csv = regret_csv(&rec);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], CSV_HEADER);
        assert_eq!(lines.len(), 31);
        for (i, line) in lines[1..].iter().enumerate() {
            let vals: Vec<f64> = line.split(',').map(|v| v.parse().unwrap()).collect();
            assert_eq!(vals.len(), 7);
            assert!(vals.iter().all(|v| v.is_finite()));
            assert_eq!(vals[2], rec.cum_regret[i]);
        }
    }

    #[test]
    fn single_step_run() {
        let cfg = ExperimentConfig {
            horizon: 1,
            ..small()
        };
        assert_eq!(regret_csv(&run_trial(&cfg, 0).unwrap()).lines().count(), 2);
    }

    #[test]
    fn trials_are_independent_and_ordered() {
        let cfg = ExperimentConfig {
            trials: 3,
            ..small()
        };
        let recs = run_trials(&cfg).unwrap();
        assert_eq!(
            regret_csv(&recs[2]),
            regret_csv(&run_trial(&cfg, 2).unwrap())
        );
        assert_ne!(regret_csv(&recs[0]), regret_csv(&recs[1]));
        let summary = summary_csv(&recs);
        assert_eq!(summary.lines().count(), 31);
    }

    #[test]
    fn quantiles() {
        let v = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 9.0, 10.0];
        assert_eq!(quantile(&v, 0.1), 1.0);
        assert_eq!(quantile(&v, 0.5), 5.0);
        assert_eq!(quantile(&v, 0.9), 9.0);
        assert_eq!(quantile(&[3.0], 0.5), 3.0);
    }
}
