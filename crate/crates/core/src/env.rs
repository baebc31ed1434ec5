//! Drifting-target environment: the sequence `w_t*`, per-step sample
//! batches, and gradient-noise estimates.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::glm::{residual_terms, GlmProblem, SampleBatch};
use crate::numeric::{dot_slices, gaussian_vector, SeededRng, Vector};

/// Random-walk schedule `w_{t+1}* = w_t* + (drift_scale / t^drift_exponent)·u_t`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DriftConfig {
    pub horizon: usize,
    pub dim: usize,
    pub drift_scale: f64,
    pub drift_exponent: f64,
    pub seed: u64,
}

impl DriftConfig {
    /// Defaults: scale 0.01, exponent 0.5.
    pub fn new(horizon: usize, dim: usize, seed: u64) -> Self {
        DriftConfig {
            horizon,
            dim,
            drift_scale: 0.01,
            drift_exponent: 0.5,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.horizon == 0 {
            return Err(Error::invalid("horizon T must be >= 1"));
        }
        if self.dim == 0 {
            return Err(Error::invalid("dimension n must be >= 1"));
        }
        if !(self.drift_scale >= 0.0 && self.drift_scale.is_finite()) {
            return Err(Error::Range {
                name: "drift_scale",
                value: self.drift_scale,
                bound: "must be finite and >= 0".into(),
            });
        }
        if !self.drift_exponent.is_finite() {
            return Err(Error::invalid("drift_exponent must be finite"));
        }
        Ok(())
    }

    /// Drift multiplier applied between steps `t` and `t + 1`.
    pub fn scale_at(&self, t: usize) -> f64 {
        self.drift_scale / (t as f64).powf(self.drift_exponent)
    }
}

/// A realized target sequence.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnvTrace {
    pub true_params: Vec<Vector>,
    #[serde(rename = "path_variation_VT")]
    pub path_variation_vt: f64,
    /// `‖w_t* − w_{t+1}*‖` for `t = 1..T−1`.
    pub per_step_drift: Vec<f64>,
}

impl EnvTrace {
    /// Builds a trace from an explicit sequence, computing the drift terms.
    pub fn from_params(true_params: Vec<Vector>) -> Result<Self> {
        if true_params.is_empty() {
            return Err(Error::invalid("a trace needs at least one step"));
        }
        let per_step_drift = true_params
            .windows(2)
            .map(|w| w[0].dist(&w[1]))
            .collect::<Result<Vec<_>>>()?;
        let path_variation_vt = per_step_drift.iter().sum();
        Ok(EnvTrace {
            true_params,
            path_variation_vt,
            per_step_drift,
        })
    }

    /// Static environment: the same target at every step.
    pub fn constant(wstar: Vector, horizon: usize) -> Result<Self> {
        if horizon == 0 {
            return Err(Error::invalid("horizon T must be >= 1"));
        }
        Self::from_params(vec![wstar; horizon])
    }

    pub fn horizon(&self) -> usize {
        self.true_params.len()
    }

    /// Path variation accumulated up to step `t` (1-based): `Σ_{τ<t} drift_τ`.
    pub fn path_var_prefix(&self) -> Vec<f64> {
        let mut acc = 0.0;
        let mut out = Vec::with_capacity(self.horizon());
        out.push(0.0);
        for d in &self.per_step_drift {
            acc += d;
            out.push(acc);
        }
        out
    }
}

/// Draws `w_1* ~ N(0, I)` and then the random walk.
pub fn generate_env(cfg: &DriftConfig, rng: &mut SeededRng) -> Result<EnvTrace> {
    cfg.validate()?;
    let mut params = Vec::with_capacity(cfg.horizon);
    params.push(gaussian_vector(rng, cfg.dim, 0.0, 1.0)?);
    let mut u = vec![0.0; cfg.dim];
    for t in 1..cfg.horizon {
        rng.fill_standard_normal(&mut u);
        let s = cfg.scale_at(t);
        let prev = params[t - 1].as_slice();
        let next: Vec<f64> = prev.iter().zip(&u).map(|(w, ui)| w + s * ui).collect();
        params.push(Vector::new(next)?);
    }
    EnvTrace::from_params(params)
}

/// Draws `m` Gaussian inputs at step `t` with labels `σ⟨w_t*, x⟩`, plus
/// `N(0, label_noise_std²)` noise when `noisy` is set.
pub fn sample_batch(
    p: &GlmProblem,
    t: usize,
    rng: &mut SeededRng,
    noisy: bool,
) -> Result<SampleBatch> {
    sample_batch_sized(p, t, rng, noisy, p.sample_count())
}

/// [`sample_batch`] with an explicit batch size (used for evaluation batches).
pub fn sample_batch_sized(
    p: &GlmProblem,
    t: usize,
    rng: &mut SeededRng,
    noisy: bool,
    m: usize,
) -> Result<SampleBatch> {
    if m == 0 {
        return Err(Error::invalid("batch size must be >= 1"));
    }
    let wstar = p.wstar(t)?.as_slice();
    let n = p.dim();
    let a = p.activation();
    let mut inputs = vec![0.0; m * n];
    rng.fill_standard_normal(&mut inputs);
    let mut labels: Vec<f64> = inputs
        .chunks_exact(n)
        .map(|x| a.eval(dot_slices(wstar, x)))
        .collect();
    if noisy && p.label_noise_std() > 0.0 {
        let std = p.label_noise_std();
        for y in &mut labels {
            *y += std * rng.standard_normal();
        }
    }
    Ok(SampleBatch::from_flat(n, inputs, labels))
}

/// Standard-error estimate of the stochastic gradient: `sqrt(tr Cov / m)`
/// where `Cov` is the unbiased sample covariance of the per-sample gradients
/// `(σ⟨w,x_i⟩ − y_i)·g(⟨w,x_i⟩)·x_i`.
pub fn estimate_delta(p: &GlmProblem, t: usize, w: &Vector, batch: &SampleBatch) -> Result<f64> {
    p.wstar(t)?;
    if w.len() != p.dim() || batch.dim() != p.dim() {
        return Err(Error::invalid("dimension mismatch in estimate_delta"));
    }
    if batch.len() < 2 {
        return Err(Error::invalid("estimate_delta needs m >= 2"));
    }
    let (_, coefs) = residual_terms(p.activation(), w.as_slice(), batch);
    Ok(delta_from_coefs(batch, &coefs))
}

/// Two-pass covariance trace of `coef_i · x_i`.
pub(crate) fn delta_from_coefs(batch: &SampleBatch, coefs: &[f64]) -> f64 {
    let m = coefs.len();
    let n = batch.dim();
    let mut mean = vec![0.0; n];
    for (i, c) in coefs.iter().enumerate() {
        for (mj, xj) in mean.iter_mut().zip(batch.input(i)) {
            *mj += c * xj;
        }
    }
    for mj in &mut mean {
        *mj /= m as f64;
    }
    let mut ss = 0.0;
    for (i, c) in coefs.iter().enumerate() {
        for (mj, xj) in mean.iter().zip(batch.input(i)) {
            let d = c * xj - mj;
            ss += d * d;
        }
    }
    let trace = ss / (m - 1) as f64;
    (trace / m as f64).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::glm::Activation;

    #[test]
    fn static_environment() {
        let mut cfg = DriftConfig::new(50, 4, 1);
        cfg.drift_scale = 0.0;
        let env = generate_env(&cfg, &mut SeededRng::new(1)).unwrap();
        assert_eq!(env.path_variation_vt, 0.0);
        assert!(env.true_params.iter().all(|w| *w == env.true_params[0]));
    }

    #[test]
    fn drift_schedule() {
        let cfg = DriftConfig::new(10, 3, 0);
        assert!((cfg.scale_at(3) - 0.01 / 3f64.sqrt()).abs() < 1e-15);
        assert!((cfg.scale_at(3) - 0.005774).abs() < 1e-6);
        let mut bad = cfg.clone();
        bad.drift_scale = -1.0;
        assert!(bad.validate().is_err());
    }

    #[test]
    fn first_drift_second_moment() {
        let n = 5;
        let trials = 10_000;
        let cfg = DriftConfig::new(2, n, 0);
        let mut rng = SeededRng::new(77);
        let mean_sq: f64 = (0..trials)
            .map(|_| generate_env(&cfg, &mut rng).unwrap().per_step_drift[0].powi(2))
            .sum::<f64>()
            / trials as f64;
        let expect = 0.01f64.powi(2) * n as f64;
        assert!(
            (mean_sq / expect - 1.0).abs() < 0.05,
            "{mean_sq} vs {expect}"
        );
    }

    #[test]
    fn path_variation_is_sum_of_drifts() {
        let cfg = DriftConfig::new(300, 7, 0);
        let env = generate_env(&cfg, &mut SeededRng::new(9)).unwrap();
        let recomputed: f64 = env
            .true_params
            .windows(2)
            .map(|w| {
                w[0].iter()
                    .zip(w[1].iter())
                    .map(|(a, b)| (a - b).powi(2))
                    .sum::<f64>()
                    .sqrt()
            })
            .sum();
        assert!((env.path_variation_vt - recomputed).abs() <= 1e-12 * recomputed);
        assert_eq!(env.per_step_drift.len(), 299);
        assert_eq!(
            *env.path_var_prefix().last().unwrap(),
            env.path_variation_vt
        );
    }

    fn problem(a: Activation, wstar: Vector, m: usize) -> GlmProblem {
        GlmProblem::new(a, vec![wstar], m, 0.1).unwrap()
    }

    #[test]
    fn batches() {
        let w = Vector::new(vec![0.5, -1.0, 2.0]).unwrap();
        let p = problem(Activation::Logistic, w.clone(), 8);
        let b = sample_batch(&p, 1, &mut SeededRng::new(2), false).unwrap();
        for i in 0..b.len() {
            let z = dot_slices(w.as_slice(), b.input(i));
            assert_eq!(b.labels()[i], Activation::Logistic.eval(z));
        }
        let b2 = sample_batch(&p, 1, &mut SeededRng::new(2), false).unwrap();
        assert_eq!(b, b2);

        // Zero target under ReLU: labels are pure noise.
        let p = problem(Activation::Relu, Vector::zeros(3), 20_000);
        let b = sample_batch(&p, 1, &mut SeededRng::new(3), true).unwrap();
        let mean = b.labels().iter().sum::<f64>() / b.len() as f64;
        let var = b.labels().iter().map(|y| (y - mean).powi(2)).sum::<f64>() / (b.len() - 1) as f64;
        assert!(mean.abs() < 5.0 * 0.1 / (b.len() as f64).sqrt());
        assert!((var - 0.01).abs() < 0.001);
        assert!(sample_batch(&p, 2, &mut SeededRng::new(3), true).is_err());
    }

    #[test]
    fn delta_toy_pair() {
        // Per-sample gradients (0·1 − y)·1·1 with y = ∓1 are +1 and −1.
        let a = Activation::leaky_relu(1.0).unwrap();
        let p = GlmProblem::new(a, vec![Vector::zeros(1)], 2, 0.0).unwrap();
        let x = Vector::new(vec![1.0]).unwrap();
        let batch = SampleBatch::new(vec![x.clone(), x], vec![-1.0, 1.0]).unwrap();
        let d = estimate_delta(&p, 1, &Vector::zeros(1), &batch).unwrap();
        // mean 0, Σ‖g − ḡ‖² = 2, unbiased trace 2/(2 − 1) = 2, sqrt(2/2) = 1.
        assert_eq!(d, 1.0);
    }

    #[test]
    fn delta_zero_and_small_batch() {
        let a = Activation::leaky_relu(1.0).unwrap();
        let p = GlmProblem::new(a, vec![Vector::zeros(2)], 3, 0.0).unwrap();
        let x = Vector::new(vec![1.0, 2.0]).unwrap();
        let same = SampleBatch::new(vec![x.clone(), x.clone(), x.clone()], vec![1.0; 3]).unwrap();
        assert_eq!(
            estimate_delta(&p, 1, &Vector::zeros(2), &same).unwrap(),
            0.0
        );
        let one = SampleBatch::new(vec![x], vec![1.0]).unwrap();
        assert!(estimate_delta(&p, 1, &Vector::zeros(2), &one).is_err());
    }

    #[test]
    fn delta_scales_like_inverse_sqrt_m() {
        let a = Activation::leaky_relu(0.1).unwrap();
        let wstar = Vector::new(vec![1.0, -1.0, 0.5]).unwrap();
        let w = Vector::new(vec![0.0, 0.3, 0.0]).unwrap();
        let small = GlmProblem::new(a, vec![wstar.clone()], 50, 0.1).unwrap();
        let large = GlmProblem::new(a, vec![wstar], 200, 0.1).unwrap();
        let mut rng = SeededRng::new(21);
        let mut s = 0.0;
        let mut l = 0.0;
        for _ in 0..100 {
            let b = sample_batch(&small, 1, &mut rng, true).unwrap();
            s += estimate_delta(&small, 1, &w, &b).unwrap();
            let b = sample_batch(&large, 1, &mut rng, true).unwrap();
            l += estimate_delta(&large, 1, &w, &b).unwrap();
        }
        let ratio = l / s;
        assert!((ratio - 0.5).abs() < 0.05, "ratio {ratio}");
    }

    #[test]
    fn static_noiseless_batches_identically_distributed() {
        // Same stream consumed at different t yields the same batch when the target is constant.
        let w = Vector::new(vec![0.2, 0.4]).unwrap();
        let p = GlmProblem::new(Activation::Relu, vec![w; 5], 6, 0.1).unwrap();
        let b1 = sample_batch(&p, 1, &mut SeededRng::new(8), false).unwrap();
        let b5 = sample_batch(&p, 5, &mut SeededRng::new(8), false).unwrap();
        assert_eq!(b1, b5);
    }
}
