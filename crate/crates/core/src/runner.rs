//! The online loop: (projected) gradient steps against a drifting target,
//! with regret measured on fresh noiseless samples.

use serde::{Deserialize, Serialize};

use crate::env::{estimate_delta, sample_batch, sample_batch_sized, EnvTrace};
use crate::error::{Error, Result};
use crate::glm::{empirical_gradient, loss_on_batch, relu_basin_contains, GlmProblem};
use crate::numeric::{gaussian_vector, project_ball, BallRegion, SeededRng, Vector};

/// Step-size schedule.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StepSizePolicy {
    Constant {
        alpha: f64,
    },
    /// `α = c/sqrt(T)` for the whole run.
    InverseSqrtT {
        c_scalar: f64,
    },
}

impl StepSizePolicy {
    pub fn constant(alpha: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(Error::invalid(format!("alpha must be > 0, got {alpha}")));
        }
        Ok(StepSizePolicy::Constant { alpha })
    }

    pub fn inverse_sqrt_t(c_scalar: f64) -> Result<Self> {
        if !(c_scalar > 0.0 && c_scalar.is_finite()) {
            return Err(Error::invalid(format!(
                "c_scalar must be > 0, got {c_scalar}"
            )));
        }
        Ok(StepSizePolicy::InverseSqrtT { c_scalar })
    }

    /// The step size used on a horizon of `horizon` rounds.
    pub fn alpha(&self, horizon: usize) -> f64 {
        match *self {
            StepSizePolicy::Constant { alpha } => alpha,
            StepSizePolicy::InverseSqrtT { c_scalar } => c_scalar / (horizon as f64).sqrt(),
        }
    }
}

/// `w − α·grad`.
pub fn ogd_step(w: &Vector, grad_est: &Vector, alpha: f64) -> Result<Vector> {
    if alpha.is_nan() || alpha <= 0.0 {
        return Err(Error::invalid(format!("alpha must be > 0, got {alpha}")));
    }
    w.axpy(-alpha, grad_est)
}

/// `proj_region(w − α·grad)`.
pub fn projected_ogd_step(
    w: &Vector,
    grad_est: &Vector,
    alpha: f64,
    region: &BallRegion,
) -> Result<Vector> {
    let raw = ogd_step(w, grad_est, alpha)?;
    project_ball(&raw, region)
}

/// Settings for [`run_online_with`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunOptions {
    pub policy: StepSizePolicy,
    pub region: Option<BallRegion>,
    pub noisy: bool,
    pub eval_m: usize,
    /// Starting point; `None` draws `w_1 = 0.01·ζ`, `ζ ~ N(0, I)`.
    pub init: Option<Vector>,
}

/// Everything needed to reproduce a run, stored alongside its results.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunEcho {
    pub activation: crate::glm::Activation,
    pub dim: usize,
    pub horizon: usize,
    pub sample_count: usize,
    pub eval_m: usize,
    pub label_noise_std: f64,
    pub noisy: bool,
    pub policy: StepSizePolicy,
    pub alpha: f64,
    pub region: Option<BallRegion>,
    pub seed: u64,
}

/// Trajectory of one online run. Per-step vectors are indexed by `t − 1`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub iterates: Vec<Vector>,
    pub per_step_regret: Vec<f64>,
    pub cum_regret: Vec<f64>,
    pub dist_to_opt: Vec<f64>,
    pub delta_estimates: Vec<f64>,
    pub basin_flags: Vec<bool>,
    pub env: EnvTrace,
    pub config_echo: RunEcho,
    /// Largest `‖x‖²` seen in any training or evaluation batch.
    pub max_input_norm_sq: f64,
}

impl RunRecord {
    pub fn horizon(&self) -> usize {
        self.per_step_regret.len()
    }

    pub fn final_regret(&self) -> f64 {
        *self.cum_regret.last().unwrap_or(&0.0)
    }

    /// `Σ δ̂_t`.
    pub fn cum_delta(&self) -> f64 {
        self.delta_estimates.iter().sum()
    }

    /// `Σ δ̂_t²`.
    pub fn cum_delta_sq(&self) -> f64 {
        self.delta_estimates.iter().map(|d| d * d).sum()
    }

    /// `max_t ‖w_t − w_t*‖`.
    pub fn max_dist_to_opt(&self) -> f64 {
        self.dist_to_opt.iter().copied().fold(0.0, f64::max)
    }

    /// Fraction of steps whose iterate was inside the ReLU basin.
    pub fn basin_fraction(&self) -> f64 {
        let inside = self.basin_flags.iter().filter(|b| **b).count();
        inside as f64 / self.basin_flags.len().max(1) as f64
    }
}

pub(crate) const INIT_STREAM: u64 = 0;

pub(crate) fn train_stream(t: usize) -> u64 {
    2 * t as u64
}

fn eval_stream(t: usize) -> u64 {
    2 * t as u64 + 1
}

/// Runs online gradient descent for the environment's horizon.
#[allow(clippy::too_many_arguments)]
pub fn run_online(
    p: &GlmProblem,
    env: &EnvTrace,
    policy: StepSizePolicy,
    region: Option<&BallRegion>,
    rng: &mut SeededRng,
    noisy: bool,
    eval_m: usize,
) -> Result<RunRecord> {
    let opts = RunOptions {
        policy,
        region: region.cloned(),
        noisy,
        eval_m,
        init: None,
    };
    run_online_with(p, env, &opts, rng)
}

/// Runs online gradient descent.
///
/// Round `t` draws its training batch and its evaluation batch from
/// sub-streams of `rng` keyed by `t`, so every round's randomness is fixed by
/// the seed alone. Per-step regret is `f̂_t(w_t) − f̂_t(w_t*)` on the fresh
/// noiseless evaluation batch; it can dip below zero by sampling noise.
pub fn run_online_with(
    p: &GlmProblem,
    env: &EnvTrace,
    opts: &RunOptions,
    rng: &mut SeededRng,
) -> Result<RunRecord> {
    let horizon = env.horizon();
    if p.horizon() != horizon {
        return Err(Error::invalid(format!(
            "problem horizon {} differs from environment horizon {horizon}",
            p.horizon()
        )));
    }
    if opts.eval_m == 0 {
        return Err(Error::invalid("eval_m must be >= 1"));
    }
    if let Some(r) = &opts.region {
        if r.dim() != p.dim() {
            return Err(Error::invalid("projection region dimension mismatch"));
        }
    }
    let alpha = opts.policy.alpha(horizon);
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(Error::invalid(format!(
            "step size must be > 0, got {alpha}"
        )));
    }

    let mut w = match &opts.init {
        Some(w0) => {
            if w0.len() != p.dim() {
                return Err(Error::invalid("initial point dimension mismatch"));
            }
            w0.clone()
        }
        None => gaussian_vector(&mut rng.derive(INIT_STREAM), p.dim(), 0.0, 0.01)?,
    };
    let scale = w.norm().max(p.wstar(1)?.norm()).max(f64::MIN_POSITIVE);
    let blowup = 1e6 * scale;

    let mut rec = RunRecord {
        iterates: Vec::with_capacity(horizon),
        per_step_regret: Vec::with_capacity(horizon),
        cum_regret: Vec::with_capacity(horizon),
        dist_to_opt: Vec::with_capacity(horizon),
        delta_estimates: Vec::with_capacity(horizon),
        basin_flags: Vec::with_capacity(horizon),
        env: env.clone(),
        config_echo: RunEcho {
            activation: *p.activation(),
            dim: p.dim(),
            horizon,
            sample_count: p.sample_count(),
            eval_m: opts.eval_m,
            label_noise_std: p.label_noise_std(),
            noisy: opts.noisy,
            policy: opts.policy,
            alpha,
            region: opts.region.clone(),
            seed: rng.seed(),
        },
        max_input_norm_sq: 0.0,
    };

    let mut cum = 0.0;
    for t in 1..=horizon {
        let wstar = p.wstar(t)?;
        let train = sample_batch(p, t, &mut rng.derive(train_stream(t)), opts.noisy)?;
        let eval = sample_batch_sized(p, t, &mut rng.derive(eval_stream(t)), false, opts.eval_m)?;
        rec.max_input_norm_sq = rec
            .max_input_norm_sq
            .max(train.max_input_norm_sq())
            .max(eval.max_input_norm_sq());

        let grad = empirical_gradient(p, t, &w, &train)?;
        let delta = if train.len() >= 2 {
            estimate_delta(p, t, &w, &train)?
        } else {
            0.0
        };
        let a = p.activation();
        let regret =
            loss_on_batch(a, w.as_slice(), &eval) - loss_on_batch(a, wstar.as_slice(), &eval);
        cum += regret;

        rec.per_step_regret.push(regret);
        rec.cum_regret.push(cum);
        rec.dist_to_opt.push(w.dist(wstar)?);
        rec.delta_estimates.push(delta);
        rec.basin_flags.push(relu_basin_contains(wstar, &w)?);

        let next = ogd_step(&w, &grad, alpha)?;
        if !next.is_finite() {
            return Err(Error::Divergence {
                step: t,
                reason: "iterate has non-finite entries".into(),
            });
        }
        let next = match &opts.region {
            Some(r) => project_ball(&next, r)?,
            None => next,
        };
        let norm = next.norm();
        if norm > blowup {
            return Err(Error::Divergence {
                step: t,
                reason: format!("‖w‖ = {norm:e} exceeds 1e6 × initial scale {scale:e}"),
            });
        }
        rec.iterates.push(std::mem::replace(&mut w, next));
    }
    Ok(rec)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{generate_env, DriftConfig};
    use crate::glm::Activation;
    use crate::theory::{gamma_contraction, QuasarConstants};

    fn v(x: &[f64]) -> Vector {
        Vector::new(x.to_vec()).unwrap()
    }

    #[test]
    fn step_examples() {
        assert_eq!(ogd_step(&v(&[0.0]), &v(&[2.0]), 0.1).unwrap(), v(&[-0.2]));
        assert_eq!(
            ogd_step(&v(&[1.5, 2.0]), &Vector::zeros(2), 0.3).unwrap(),
            v(&[1.5, 2.0])
        );
        let g = v(&[0.5, -1.0]);
        let w0 = v(&[1.0, 1.0]);
        let two = ogd_step(&ogd_step(&w0, &g, 0.1).unwrap(), &g, 0.1).unwrap();
        let direct = w0.axpy(-0.2, &g).unwrap();
        for j in 0..2 {
            assert!((two[j] - direct[j]).abs() < 1e-15);
        }
        assert!(ogd_step(&w0, &v(&[1.0]), 0.1).is_err());
        assert!(ogd_step(&w0, &g, 0.0).is_err());
    }

    #[test]
    fn projected_step_examples() {
        let ball = BallRegion::origin(1, 1.0).unwrap();
        let p = projected_ogd_step(&v(&[0.9]), &v(&[-2.0]), 0.1, &ball).unwrap();
        assert_eq!(p, v(&[1.0]));
        let inside = projected_ogd_step(&v(&[0.1]), &v(&[1.0]), 0.1, &ball).unwrap();
        assert_eq!(inside, ogd_step(&v(&[0.1]), &v(&[1.0]), 0.1).unwrap());
        let open = BallRegion::unbounded(1);
        let far = projected_ogd_step(&v(&[0.9]), &v(&[-200.0]), 0.1, &open).unwrap();
        assert_eq!(far, ogd_step(&v(&[0.9]), &v(&[-200.0]), 0.1).unwrap());
    }

    fn drift_problem(
        a: Activation,
        t: usize,
        n: usize,
        scale: f64,
        seed: u64,
    ) -> (GlmProblem, EnvTrace) {
        let mut cfg = DriftConfig::new(t, n, seed);
        cfg.drift_scale = scale;
        let env = generate_env(&cfg, &mut SeededRng::new(seed)).unwrap();
        let p = GlmProblem::new(a, env.true_params.clone(), 40, 0.1).unwrap();
        (p, env)
    }

    #[test]
    fn start_at_static_target_stays_put() {
        let (p, env) = drift_problem(Activation::leaky_relu(0.1).unwrap(), 30, 4, 0.0, 5);
        let opts = RunOptions {
            policy: StepSizePolicy::constant(0.1).unwrap(),
            region: None,
            noisy: false,
            eval_m: 30,
            init: Some(env.true_params[0].clone()),
        };
        let rec = run_online_with(&p, &env, &opts, &mut SeededRng::new(1)).unwrap();
        assert!(rec.cum_regret.iter().all(|c| *c == 0.0));
        assert!(rec.iterates.iter().all(|w| *w == env.true_params[0]));
    }

    #[test]
    fn single_round() {
        let (p, env) = drift_problem(Activation::Logistic, 1, 3, 0.01, 2);
        let rec = run_online(
            &p,
            &env,
            StepSizePolicy::constant(0.1).unwrap(),
            None,
            &mut SeededRng::new(3),
            true,
            20,
        )
        .unwrap();
        assert_eq!(rec.horizon(), 1);
        assert_eq!(rec.cum_regret[0], rec.per_step_regret[0]);
    }

    #[test]
    fn deterministic_and_prefix_sums() {
        let (p, env) = drift_problem(Activation::Relu, 60, 5, 0.01, 8);
        let run = |seed| {
            run_online(
                &p,
                &env,
                StepSizePolicy::constant(0.05).unwrap(),
                None,
                &mut SeededRng::new(seed),
                true,
                25,
            )
            .unwrap()
        };
        let a = run(4);
        let b = run(4);
        assert_eq!(a, b);
        let mut acc = 0.0;
        for (c, r) in a.cum_regret.iter().zip(&a.per_step_regret) {
            acc += r;
            assert_eq!(*c, acc);
        }
        assert_ne!(a, run(5));
    }

    #[test]
    fn projected_iterates_stay_in_region() {
        let (p, env) = drift_problem(Activation::Logistic, 80, 6, 0.05, 3);
        let ball = BallRegion::origin(6, 0.5).unwrap();
        let opts = RunOptions {
            policy: StepSizePolicy::constant(5.0).unwrap(),
            region: Some(ball.clone()),
            noisy: true,
            eval_m: 10,
            init: None,
        };
        let rec = run_online_with(&p, &env, &opts, &mut SeededRng::new(6)).unwrap();
        assert!(rec.iterates.iter().all(|w| ball.contains(w)));
    }

    #[test]
    fn divergence_is_reported_with_step() {
        let (p, env) = drift_problem(Activation::leaky_relu(1.0).unwrap(), 200, 3, 0.0, 1);
        let err = run_online(
            &p,
            &env,
            StepSizePolicy::constant(50.0).unwrap(),
            None,
            &mut SeededRng::new(1),
            false,
            5,
        )
        .unwrap_err();
        assert!(matches!(err, Error::Divergence { .. }), "{err}");
    }

    #[test]
    fn linear_model_contracts_geometrically() {
        // κ = 1: f(w) = ½‖w − w*‖² for Gaussian inputs, so ρ = μ = 1 and Γ = 2c.
        let n = 3;
        let a = Activation::leaky_relu(1.0).unwrap();
        let wstar = v(&[1.0, -0.5, 0.3]);
        let env = EnvTrace::constant(wstar.clone(), 40).unwrap();
        let p = GlmProblem::new(a, env.true_params.clone(), 5000, 0.0).unwrap();
        let alpha = 0.1;
        let opts = RunOptions {
            policy: StepSizePolicy::constant(alpha).unwrap(),
            region: None,
            noisy: false,
            eval_m: 10,
            init: Some(Vector::zeros(n)),
        };
        let rec = run_online_with(&p, &env, &opts, &mut SeededRng::new(12)).unwrap();
        // Γ = 2 is the population value for standard Gaussian inputs.
        let k = QuasarConstants::new(1.0)
            .unwrap()
            .with_mu(1.0)
            .unwrap()
            .with_gamma_ws(2.0)
            .unwrap();
        let gamma = gamma_contraction(alpha, &k).unwrap();
        let d = &rec.dist_to_opt;
        let steps = 30;
        let ratio = (d[steps] / d[0]).powi(2).powf(1.0 / steps as f64);
        // Sample covariance of 5000 inputs deviates from I by about sqrt(n/m).
        assert!(ratio <= gamma + 0.02, "ratio {ratio}, gamma {gamma}");
        for w in d.windows(2).skip(1) {
            assert!(w[1] <= w[0]);
        }
    }
}
