use serde::{Deserialize, Serialize};

use crate::env::{generate_env, DriftConfig, EnvTrace};
use crate::error::{Error, Result};
use crate::glm::{Activation, GlmProblem};
use crate::numeric::{mix_seed, BallRegion, SeededRng};
use crate::runner::StepSizePolicy;

/// Stream of a trial's generator reserved for the environment; the runner
/// only uses small stream indices.
const ENV_STREAM: u64 = u64::MAX;

pub const PRESET_NAMES: [&str; 3] = ["leaky_relu_default", "logistic_default", "relu_default"];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActivationKind {
    LeakyRelu,
    Logistic,
    Relu,
}

/// A complete, validated experiment description.
///
/// Exactly one of `alpha` and `c_scalar` is set. Label noise with standard
/// deviation `noise_std` is added only when `noisy` is set.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExperimentConfig {
    pub activation: ActivationKind,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kappa: Option<f64>,
    #[serde(rename = "T")]
    pub horizon: usize,
    pub n: usize,
    pub m: usize,
    pub eval_m: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub c_scalar: Option<f64>,
    pub drift_scale: f64,
    pub drift_exponent: f64,
    pub noise_std: f64,
    pub noisy: bool,
    pub seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub projection_radius: Option<f64>,
    pub trials: usize,
}

/// The JSON document as written. Every key is optional; missing keys come
/// from the preset (named, or implied by `activation`).
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    preset: Option<String>,
    activation: Option<ActivationKind>,
    kappa: Option<f64>,
    #[serde(rename = "T")]
    horizon: Option<usize>,
    n: Option<usize>,
    m: Option<usize>,
    eval_m: Option<usize>,
    alpha: Option<f64>,
    c_scalar: Option<f64>,
    drift_scale: Option<f64>,
    drift_exponent: Option<f64>,
    noise_std: Option<f64>,
    noisy: Option<bool>,
    seed: Option<u64>,
    projection_radius: Option<f64>,
    trials: Option<usize>,
}

impl ExperimentConfig {
    /// Leaky ReLU with `κ = 0.1`, `T = 1000`, `n = 50`, `m = 1000`,
    /// `α = 0.1`, drift `0.01/√t` and label noise variance `0.01`.
    pub fn leaky_relu_default() -> Self {
        ExperimentConfig {
            activation: ActivationKind::LeakyRelu,
            kappa: Some(0.1),
            horizon: 1000,
            n: 50,
            m: 1000,
            eval_m: 1000,
            alpha: Some(0.1),
            c_scalar: None,
            drift_scale: 0.01,
            drift_exponent: 0.5,
            noise_std: 0.1,
            noisy: false,
            seed: 0,
            projection_radius: None,
            trials: 1,
        }
    }

    /// As [`Self::leaky_relu_default`] with the logistic activation and
    /// projection onto the origin ball of radius 10.
    pub fn logistic_default() -> Self {
        ExperimentConfig {
            activation: ActivationKind::Logistic,
            kappa: None,
            projection_radius: Some(10.0),
            ..Self::leaky_relu_default()
        }
    }

    pub fn relu_default() -> Self {
        ExperimentConfig {
            activation: ActivationKind::Relu,
            kappa: None,
            ..Self::leaky_relu_default()
        }
    }

    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "leaky_relu_default" => Ok(Self::leaky_relu_default()),
            "logistic_default" => Ok(Self::logistic_default()),
            "relu_default" => Ok(Self::relu_default()),
            other => Err(Error::config(
                "preset",
                format!(
                    "unknown preset `{other}`; expected one of {}",
                    PRESET_NAMES.join(", ")
                ),
            )),
        }
    }

    fn preset_for(kind: ActivationKind) -> Self {
        match kind {
            ActivationKind::LeakyRelu => Self::leaky_relu_default(),
            ActivationKind::Logistic => Self::logistic_default(),
            ActivationKind::Relu => Self::relu_default(),
        }
    }

    pub fn with_noisy(mut self, noisy: bool) -> Self {
        self.noisy = noisy;
        self
    }

    /// Parses a JSON document. Unknown keys are rejected.
    pub fn from_json(text: &str) -> Result<Self> {
        let raw: RawConfig = serde_json::from_str(text).map_err(|e| {
            let msg = e.to_string();
            let field = msg
                .split('`')
                .nth(1)
                .filter(|_| msg.starts_with("unknown field") || msg.starts_with("invalid type"))
                .unwrap_or("<document>")
                .to_string();
            Error::config(field, msg)
        })?;
        Self::from_raw(raw)
    }

    fn from_raw(raw: RawConfig) -> Result<Self> {
        let mut cfg = match (&raw.preset, raw.activation) {
            (Some(name), _) => Self::preset(name)?,
            (None, Some(kind)) => Self::preset_for(kind),
            (None, None) => Self::leaky_relu_default(),
        };
        if let Some(kind) = raw.activation {
            if kind != cfg.activation {
                cfg.activation = kind;
                cfg.kappa = (kind == ActivationKind::LeakyRelu).then_some(0.1);
            }
        }
        if raw.kappa.is_some() {
            cfg.kappa = raw.kappa;
        }
        match (raw.alpha, raw.c_scalar) {
            (Some(_), Some(_)) => {
                return Err(Error::config(
                    "alpha",
                    "set exactly one of `alpha` and `c_scalar`",
                ));
            }
            (Some(a), None) => {
                cfg.alpha = Some(a);
                cfg.c_scalar = None;
            }
            (None, Some(c)) => {
                cfg.alpha = None;
                cfg.c_scalar = Some(c);
            }
            (None, None) => {}
        }
        macro_rules! overlay {
            ($($f:ident),*) => { $( if let Some(v) = raw.$f { cfg.$f = v; } )* };
        }
        overlay!(
            horizon,
            n,
            m,
            eval_m,
            drift_scale,
            drift_exponent,
            noise_std,
            noisy,
            seed,
            trials
        );
        if raw.projection_radius.is_some() {
            cfg.projection_radius = raw.projection_radius;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let count = |name: &str, v: usize| {
            if v == 0 {
                Err(Error::config(name, "must be >= 1"))
            } else {
                Ok(())
            }
        };
        count("T", self.horizon)?;
        count("n", self.n)?;
        count("m", self.m)?;
        count("eval_m", self.eval_m)?;
        count("trials", self.trials)?;
        match (self.activation, self.kappa) {
            (ActivationKind::LeakyRelu, Some(k)) if k > 0.0 && k <= 1.0 => {}
            (ActivationKind::LeakyRelu, Some(k)) => {
                return Err(Error::config(
                    "kappa",
                    format!("must lie in (0, 1], got {k}"),
                ));
            }
            (ActivationKind::LeakyRelu, None) => {
                return Err(Error::config("kappa", "required for leaky_relu"));
            }
            (_, Some(_)) => return Err(Error::config("kappa", "only applies to leaky_relu")),
            (_, None) => {}
        }
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::config(
                    name,
                    format!("must be finite and > 0, got {v}"),
                ))
            }
        };
        match (self.alpha, self.c_scalar) {
            (Some(a), None) => positive("alpha", a)?,
            (None, Some(c)) => positive("c_scalar", c)?,
            _ => {
                return Err(Error::config(
                    "alpha",
                    "set exactly one of `alpha` and `c_scalar`",
                ))
            }
        }
        if !(self.drift_scale >= 0.0 && self.drift_scale.is_finite()) {
            return Err(Error::config("drift_scale", "must be finite and >= 0"));
        }
        if !self.drift_exponent.is_finite() {
            return Err(Error::config("drift_exponent", "must be finite"));
        }
        if !(self.noise_std >= 0.0 && self.noise_std.is_finite()) {
            return Err(Error::config("noise_std", "must be finite and >= 0"));
        }
        if let Some(r) = self.projection_radius {
            positive("projection_radius", r)?;
        }
        Ok(())
    }

    pub fn activation(&self) -> Activation {
        match self.activation {
            ActivationKind::LeakyRelu => Activation::LeakyRelu {
                kappa: self.kappa.unwrap_or(0.1),
            },
            ActivationKind::Logistic => Activation::Logistic,
            ActivationKind::Relu => Activation::Relu,
        }
    }

    pub fn policy(&self) -> Result<StepSizePolicy> {
        match (self.alpha, self.c_scalar) {
            (Some(a), None) => StepSizePolicy::constant(a),
            (None, Some(c)) => StepSizePolicy::inverse_sqrt_t(c),
            _ => Err(Error::config(
                "alpha",
                "set exactly one of `alpha` and `c_scalar`",
            )),
        }
    }

    pub fn region(&self) -> Result<Option<BallRegion>> {
        self.projection_radius
            .map(|r| BallRegion::origin(self.n, r))
            .transpose()
    }

    /// Seed of trial `i`.
    pub fn trial_seed(&self, trial: usize) -> u64 {
        mix_seed(self.seed, trial as u64)
    }

    /// The problem, its environment and the generator driving the run of one
    /// trial.
    pub fn build(&self, trial: usize) -> Result<(GlmProblem, EnvTrace, SeededRng)> {
        let seed = self.trial_seed(trial);
        let rng = SeededRng::new(seed);
        let drift = DriftConfig {
            horizon: self.horizon,
            dim: self.n,
            drift_scale: self.drift_scale,
            drift_exponent: self.drift_exponent,
            seed,
        };
        let env = generate_env(&drift, &mut rng.derive(ENV_STREAM))?;
        let p = GlmProblem::new(
            self.activation(),
            env.true_params.clone(),
            self.m,
            self.noise_std,
        )?;
        Ok((p, env, rng))
    }
}
