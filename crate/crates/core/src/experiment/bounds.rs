use serde::Serialize;

use crate::error::{Error, Result};
use crate::glm::{derive_constants, GlmProblem, InputModel, RegionHint};
use crate::numeric::{dot_slices, SeededRng};
use crate::runner::{RunRecord, StepSizePolicy};
use crate::theory::{
    bound_quasar_bounded_grad, bound_quasar_weak_smooth, bound_strong_quasar, gamma_contraction,
    step_size_max_strong, step_size_sufficient, BoundReport, QuasarConstants, SufficientRule,
};

use super::{ActivationKind, ExperimentConfig};

/// Size of the pilot sample used to estimate `c = max ‖x‖²` before a run.
pub const PILOT_SAMPLES: usize = 100_000;

const PILOT_STREAM: u64 = u64::MAX - 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundStatus {
    Ok,
    /// The step size lies outside the range the bound needs.
    Inadmissible,
    /// Some other hypothesis of the bound fails for this run.
    NotApplicable,
}

impl BoundStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            BoundStatus::Ok => "ok",
            BoundStatus::Inadmissible => "inadmissible",
            BoundStatus::NotApplicable => "not_applicable",
        }
    }
}

/// Quantities measured on a run that enter the bounds.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Measured {
    pub final_cum_regret: f64,
    #[serde(rename = "path_variation_VT")]
    pub path_variation_vt: f64,
    pub cum_delta: f64,
    pub cum_delta_sq: f64,
    pub init_dist: f64,
    pub max_input_norm_sq: f64,
    /// `R` as passed to the constants: the radius of the ball around each
    /// target containing the iterates (leaky ReLU) or the diameter of the
    /// feasible ball (logistic). Unused for ReLU.
    pub region_size: f64,
    pub basin_fraction: f64,
}

/// Constants, step-size ranges and the regret bound for a configuration.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BoundsSummary {
    pub activation: ActivationKind,
    pub status: BoundStatus,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub message: Option<String>,
    pub alpha: f64,
    pub constants: QuasarConstants,
    /// Largest step the bound admits (exclusive for the weakly smooth bound).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub step_size_max: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub step_size_sufficient: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub measured: Option<Measured>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bound: Option<BoundReport>,
}

/// Largest `‖x‖²` over `PILOT_SAMPLES` standard Gaussian inputs in dimension
/// `n`, seeded from the configuration.
pub fn pilot_input_bound(cfg: &ExperimentConfig) -> f64 {
    let mut rng = SeededRng::new(cfg.seed).derive(PILOT_STREAM);
    let mut x = vec![0.0; cfg.n];
    let mut c = 0.0f64;
    for _ in 0..PILOT_SAMPLES {
        rng.fill_standard_normal(&mut x);
        c = c.max(dot_slices(&x, &x));
    }
    c
}

/// Constants for the configured activation with input bound `c` and region
/// size `r` (see [`Measured::region_size`]).
pub fn constants_for(
    p: &GlmProblem,
    kind: ActivationKind,
    c: f64,
    r: f64,
) -> Result<QuasarConstants> {
    let p = p
        .clone()
        .with_inputs(InputModel::standard_gaussian().with_input_bound_c(c));
    let hint = match kind {
        ActivationKind::Relu => RegionHint::ReluBasin,
        _ => RegionHint::Ball { diameter: r },
    };
    derive_constants(&p, hint)
}

/// Step-size limits for the bound matching the activation.
fn step_limits(kind: ActivationKind, k: &QuasarConstants) -> (Option<f64>, Option<f64>) {
    match kind {
        ActivationKind::Logistic => (k.gamma_ws().map(|g| 2.0 * k.rho() / g), None),
        _ => (
            step_size_max_strong(k).ok(),
            step_size_sufficient(k, SufficientRule::Balanced).ok(),
        ),
    }
}

fn classify(e: Error) -> Result<(BoundStatus, String)> {
    match e {
        Error::Range { .. } => Ok((BoundStatus::Inadmissible, e.to_string())),
        Error::Precondition(_) => Ok((BoundStatus::NotApplicable, e.to_string())),
        other => Err(other),
    }
}

/// Evaluates the bound that fits the configuration on a finished run.
///
/// * leaky ReLU and ReLU: the strongly quasar-convex bound with `M` from the
///   constants, `Σδ̂_t` as the noise term
/// * logistic with a constant step: the weakly smooth bound with `Σδ̂_t²`
/// * logistic with `α = c/√T`: the bounded-gradient bound
///
/// `c` is the largest `‖x‖²` the run drew.
pub fn bounds_for_run(cfg: &ExperimentConfig, rec: &RunRecord) -> Result<BoundsSummary> {
    let p = GlmProblem::new(
        cfg.activation(),
        rec.env.true_params.clone(),
        cfg.m,
        cfg.noise_std,
    )?;
    let c = rec.max_input_norm_sq;
    let horizon = rec.horizon();
    let policy = cfg.policy()?;
    let alpha = policy.alpha(horizon);
    let w1 = &rec.iterates[0];
    let w1s = &rec.env.true_params[0];
    let init_dist = w1.dist(w1s)?;

    let max_norm = rec
        .iterates
        .iter()
        .chain(&rec.env.true_params)
        .map(|w| w.norm())
        .fold(0.0, f64::max);
    let max_target_norm = rec
        .env
        .true_params
        .iter()
        .map(|w| w.norm())
        .fold(0.0, f64::max);
    let region_size = match cfg.activation {
        ActivationKind::LeakyRelu => rec.max_dist_to_opt(),
        ActivationKind::Logistic => 2.0 * cfg.projection_radius.unwrap_or(max_norm),
        ActivationKind::Relu => 0.0,
    };
    // A zero-radius ball only arises for a run that sits on its target.
    let k = constants_for(&p, cfg.activation, c, region_size.max(f64::MIN_POSITIVE))?;
    let (step_size_max, step_size_sufficient) = step_limits(cfg.activation, &k);
    let measured = Measured {
        final_cum_regret: rec.final_regret(),
        path_variation_vt: rec.env.path_variation_vt,
        cum_delta: rec.cum_delta(),
        cum_delta_sq: rec.cum_delta_sq(),
        init_dist,
        max_input_norm_sq: c,
        region_size,
        basin_fraction: rec.basin_fraction(),
    };
    let mut summary = BoundsSummary {
        activation: cfg.activation,
        status: BoundStatus::Ok,
        message: None,
        alpha,
        constants: k.clone(),
        step_size_max,
        step_size_sufficient,
        gamma: None,
        measured: None,
        bound: None,
    };

    let result = match cfg.activation {
        ActivationKind::LeakyRelu | ActivationKind::Relu => {
            if cfg.activation == ActivationKind::Relu && measured.basin_fraction < 1.0 {
                Err(Error::precondition(format!(
                    "iterates left the basin in {:.4} of the steps",
                    1.0 - measured.basin_fraction
                )))
            } else {
                gamma_contraction(alpha, &k).and_then(|g| {
                    summary.gamma = Some(g);
                    bound_strong_quasar(
                        alpha,
                        &k,
                        init_dist,
                        measured.path_variation_vt,
                        measured.cum_delta,
                    )
                })
            }
        }
        ActivationKind::Logistic => {
            if cfg.projection_radius.is_some_and(|r| max_target_norm > r) {
                Err(Error::precondition(format!(
                    "a target of norm {max_target_norm} lies outside the projection ball"
                )))
            } else {
                match policy {
                    StepSizePolicy::Constant { alpha } => bound_quasar_weak_smooth(
                        alpha,
                        &k,
                        init_dist * init_dist,
                        region_size,
                        measured.path_variation_vt,
                        measured.cum_delta_sq,
                    ),
                    StepSizePolicy::InverseSqrtT { c_scalar } => bound_quasar_bounded_grad(
                        c_scalar,
                        horizon,
                        &k,
                        init_dist * init_dist,
                        region_size,
                        measured.path_variation_vt,
                        measured.cum_delta_sq,
                    ),
                }
            }
        }
    };
    match result {
        Ok(b) => summary.bound = Some(b),
        Err(e) => {
            let (status, msg) = classify(e)?;
            summary.status = status;
            summary.message = Some(msg);
        }
    }
    summary.measured = Some(measured);
    Ok(summary)
}

/// Constants and step-size ranges before any run, with `c` from a pilot
/// sample and `R` from the configuration alone: twice the projection radius
/// for logistic losses, and `1` (a unit ball around each target) for leaky
/// ReLU. No bound is evaluated, but an inadmissible step is reported.
pub fn bounds_prior(cfg: &ExperimentConfig) -> Result<BoundsSummary> {
    cfg.validate()?;
    let (p, _, _) = cfg.build(0)?;
    let c = pilot_input_bound(cfg);
    let r = match cfg.activation {
        ActivationKind::Logistic => {
            let max_norm = p.true_params().iter().map(|w| w.norm()).fold(0.0, f64::max);
            2.0 * cfg.projection_radius.unwrap_or(max_norm)
        }
        _ => 1.0,
    };
    let k = constants_for(&p, cfg.activation, c, r)?;
    let alpha = cfg.policy()?.alpha(cfg.horizon);
    let (step_size_max, step_size_sufficient) = step_limits(cfg.activation, &k);
    let mut summary = BoundsSummary {
        activation: cfg.activation,
        status: BoundStatus::Ok,
        message: None,
        alpha,
        constants: k.clone(),
        step_size_max,
        step_size_sufficient,
        gamma: None,
        measured: None,
        bound: None,
    };
    let check = match cfg.activation {
        ActivationKind::Logistic => {
            let limit = step_size_max.unwrap_or(0.0);
            if alpha < limit {
                Ok(())
            } else {
                Err(Error::Range {
                    name: "alpha",
                    value: alpha,
                    bound: format!("0 < alpha < 2*rho/Gamma = {limit}"),
                })
            }
        }
        _ => gamma_contraction(alpha, &k).map(|g| summary.gamma = Some(g)),
    };
    if let Err(e) = check {
        let (status, msg) = classify(e)?;
        summary.status = status;
        summary.message = Some(msg);
    }
    Ok(summary)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiment::run_trial;

    #[test]
    fn preset_step_is_inadmissible_for_the_strong_bound() {
        let cfg = ExperimentConfig {
            horizon: 20,
            n: 10,
            m: 50,
            eval_m: 50,
            ..ExperimentConfig::leaky_relu_default()
        };
        let rec = run_trial(&cfg, 0).unwrap();
        let s = bounds_for_run(&cfg, &rec).unwrap();
        assert_eq!(s.status, BoundStatus::Inadmissible);
        assert!(s.message.unwrap().contains("alpha"));
        assert!(s.bound.is_none());
        assert_eq!(s.constants.rho(), 0.1);
        assert_eq!(s.constants.mu(), Some(0.1));
    }

    #[test]
    fn admissible_step_gives_a_bound() {
        let base = ExperimentConfig {
            horizon: 20,
            n: 10,
            m: 50,
            eval_m: 50,
            ..ExperimentConfig::leaky_relu_default()
        };
        let prior = bounds_prior(&base).unwrap();
        let cfg = ExperimentConfig {
            alpha: Some(0.25 * prior.step_size_max.unwrap()),
            ..base
        };
        let rec = run_trial(&cfg, 0).unwrap();
        let s = bounds_for_run(&cfg, &rec).unwrap();
        assert_eq!(s.status, BoundStatus::Ok, "{:?}", s.message);
        let b = s.bound.unwrap();
        assert!(b.bound_total >= rec.final_regret());
        assert!(s.gamma.unwrap() < 1.0);
    }

    #[test]
    fn logistic_prior_uses_the_projection_diameter() {
        let cfg = ExperimentConfig {
            horizon: 10,
            n: 5,
            ..ExperimentConfig::logistic_default()
        };
        let s = bounds_prior(&cfg).unwrap();
        assert!((s.constants.rho() - 2.0 * (-20.0f64).exp()).abs() < 1e-20);
        assert_eq!(s.status, BoundStatus::Inadmissible);
    }
}
