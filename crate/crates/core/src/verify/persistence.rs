use rayon::prelude::*;

use crate::env::{sample_batch, EnvTrace};
use crate::error::{Error, Result};
use crate::glm::{derive_constants, Activation, GlmProblem, RegionHint};
use crate::numeric::SeededRng;
use crate::report::CheckReport;
use crate::runner::{run_online_with, train_stream, RunOptions, RunRecord, StepSizePolicy};
use crate::theory::{
    relu_drift_condition_distance, relu_max_drift, relu_min_norm, QuasarConstants,
};

/// Knobs for [`check_relu_basin_persistence`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PersistenceSettings {
    pub trials: usize,
    /// Allowed out-of-basin fraction; also the confidence level fed to
    /// [`relu_min_norm`].
    pub tau: f64,
    pub noisy: bool,
    /// Start at `(1 + init_offset)·w_1*`.
    pub init_offset: f64,
    pub eval_m: usize,
}

impl Default for PersistenceSettings {
    fn default() -> Self {
        PersistenceSettings {
            trials: 20,
            tau: 0.01,
            noisy: false,
            init_offset: 1e-8,
            eval_m: 10,
        }
    }
}

#[derive(Clone, Debug)]
pub struct PersistenceOutcome {
    pub report: CheckReport,
    /// Fraction of (trial, step) pairs with `w_t` in the basin.
    pub fraction: f64,
    pub constants: QuasarConstants,
    pub alpha_max: f64,
}

/// ReLU constants for the basin, with `c` taken as the largest `‖x‖²` over
/// every training batch the trials will draw, and the largest admissible
/// step size `ρ/(2c)`.
///
/// Trial `k` uses `rng.derive(k)`; inputs do not depend on the targets, so
/// the scan can run before the drift is chosen.
pub fn relu_persistence_constants(
    p: &GlmProblem,
    rng: &SeededRng,
    trials: usize,
    noisy: bool,
) -> Result<(QuasarConstants, f64)> {
    if *p.activation() != Activation::Relu {
        return Err(Error::invalid(
            "basin persistence applies to ReLU problems only",
        ));
    }
    let c = (0..trials as u64)
        .into_par_iter()
        .map(|k| {
            let trial = rng.derive(k);
            (1..=p.horizon()).try_fold(0.0f64, |acc, t| {
                let batch = sample_batch(p, t, &mut trial.derive(train_stream(t)), noisy)?;
                Ok::<_, Error>(acc.max(batch.max_input_norm_sq()))
            })
        })
        .try_reduce(|| 0.0, |a, b| Ok(a.max(b)))?;
    let scanned = p
        .clone()
        .with_inputs(p.inputs().clone().with_input_bound_c(c));
    let k = derive_constants(&scanned, RegionHint::ReluBasin)?;
    let alpha_max = k.rho() / (2.0 * c);
    Ok((k, alpha_max))
}

/// Runs `settings.trials` online trajectories from inside the first basin and
/// reports the fraction of (trial, step) pairs whose iterate lies in the basin
/// of that step. The single recorded row is `out-of-basin fraction ≤ τ`.
///
/// Returns a precondition error when `alpha` exceeds `ρ/(2c)`, when `c < ½`,
/// when some drift exceeds [`relu_max_drift`], or when some `‖w_t*‖` falls
/// below [`relu_min_norm`] at the measured gradient-noise level.
pub fn check_relu_basin_persistence(
    p: &GlmProblem,
    env: &EnvTrace,
    alpha: f64,
    rng: &SeededRng,
    settings: PersistenceSettings,
) -> Result<PersistenceOutcome> {
    if settings.trials == 0 {
        return Err(Error::invalid("trials must be >= 1"));
    }
    if !(settings.tau > 0.0 && settings.tau < 1.0) {
        return Err(Error::Range {
            name: "tau",
            value: settings.tau,
            bound: "0 < tau < 1".into(),
        });
    }
    let (k, alpha_max) = relu_persistence_constants(p, rng, settings.trials, settings.noisy)?;
    let c = k.req_input_bound_c()?;
    if c < 0.5 {
        return Err(Error::precondition(format!(
            "the basin guarantee needs c >= 1/2, got c = {c}"
        )));
    }
    if !(alpha > 0.0 && alpha <= alpha_max) {
        return Err(Error::precondition(format!(
            "alpha = {alpha:e} must lie in (0, rho/(2c)] = (0, {alpha_max:e}]"
        )));
    }
    let norms: Vec<f64> = env.true_params.iter().map(|w| w.norm()).collect();
    for (t, d) in env.per_step_drift.iter().enumerate() {
        let cap = relu_max_drift(alpha, &k, norms[t].min(norms[t + 1]))?;
        if *d > cap {
            return Err(Error::precondition(format!(
                "drift {d:e} at step {} exceeds the certified maximum {cap:e}",
                t + 1
            )));
        }
    }

    let w1 = &env.true_params[0];
    let opts = RunOptions {
        policy: StepSizePolicy::constant(alpha)?,
        region: None,
        noisy: settings.noisy,
        eval_m: settings.eval_m,
        init: Some(w1.scale(1.0 + settings.init_offset)),
    };
    let runs: Vec<RunRecord> = (0..settings.trials as u64)
        .into_par_iter()
        .map(|i| run_online_with(p, env, &opts, &mut rng.derive(i)))
        .collect::<Result<_>>()?;

    // The drift guarantee needs ‖w_t*‖ above the noise-dependent floor.
    let mut floor_max = 0.0f64;
    for run in &runs {
        for (t, d) in run.delta_estimates.iter().enumerate() {
            let floor = relu_min_norm(&k, *d, settings.tau)?;
            floor_max = floor_max.max(floor / norms[t]);
            if norms[t] < floor {
                return Err(Error::precondition(format!(
                    "‖w_{}*‖ = {} is below the certified minimum {floor} at the measured noise level {d:e}",
                    t + 1,
                    norms[t]
                )));
            }
        }
    }

    // Diagnostic only: the raw distance condition with δ̂ standing in for ‖e‖.
    let mut cond_fail = 0usize;
    let mut cond_min_slack = f64::INFINITY;
    for run in &runs {
        for (t, d) in env.per_step_drift.iter().enumerate() {
            let cond =
                relu_drift_condition_distance(alpha, k.rho(), norms[t], run.delta_estimates[t]);
            cond_min_slack = cond_min_slack.min(cond - d);
            if *d > cond {
                cond_fail += 1;
            }
        }
    }

    let total = settings.trials * env.horizon();
    let inside: usize = runs
        .iter()
        .map(|r| r.basin_flags.iter().filter(|b| **b).count())
        .sum();
    let fraction = inside as f64 / total as f64;

    let mut b = CheckReport::builder("relu_basin_persistence");
    b.record(0, &[], 1.0 - fraction, settings.tau, 0.0);
    b.note(format!(
        "trials={} steps={total} in_basin={inside} fraction={fraction:?} alpha={alpha:e} rho={:e} c={c:?}",
        settings.trials,
        k.rho()
    ));
    b.note(format!("max relu_min_norm/‖w_t*‖ = {floor_max:e}"));
    b.note(format!(
        "distance drift condition (e = delta_est): {cond_fail} violations, min slack {cond_min_slack:e}"
    ));
    let mut report = b.finish();
    report.points_tested = total;
    Ok(PersistenceOutcome {
        report,
        fraction,
        constants: k,
        alpha_max,
    })
}
