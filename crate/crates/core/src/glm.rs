//! Single-neuron regression losses `½(σ⟨w,x⟩ − σ⟨w*,x⟩)²` with leaky ReLU,
//! logistic and ReLU activations.
//!
//! Provides activation values and Clarke subgradient selections, empirical
//! and Monte-Carlo population oracles, and the constants each activation
//! certifies.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::{dot_slices, SeededRng, Vector};
use crate::report::CheckReport;
use crate::theory::QuasarConstants;

/// Activation function of the neuron.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Activation {
    /// `max{κz, z}` with `κ ∈ (0, 1]`.
    LeakyRelu { kappa: f64 },
    /// `1/(1 + e^{−z})`.
    Logistic,
    /// `max{0, z}`.
    Relu,
}

impl Activation {
    pub fn leaky_relu(kappa: f64) -> Result<Self> {
        if !(kappa > 0.0 && kappa <= 1.0) {
            return Err(Error::Range {
                name: "kappa",
                value: kappa,
                bound: "kappa must lie in (0, 1]".into(),
            });
        }
        Ok(Activation::LeakyRelu { kappa })
    }

    pub fn name(&self) -> &'static str {
        match self {
            Activation::LeakyRelu { .. } => "leaky_relu",
            Activation::Logistic => "logistic",
            Activation::Relu => "relu",
        }
    }

    #[inline]
    pub fn eval(&self, z: f64) -> f64 {
        match *self {
            Activation::LeakyRelu { kappa } => {
                if z >= 0.0 {
                    z
                } else {
                    kappa * z
                }
            }
            Activation::Logistic => {
                if z >= 0.0 {
                    1.0 / (1.0 + (-z).exp())
                } else {
                    let e = z.exp();
                    e / (1.0 + e)
                }
            }
            Activation::Relu => z.max(0.0),
        }
    }

    /// Derivative where it exists. At `z = 0` leaky ReLU selects 1 and ReLU
    /// selects 0 from their Clarke subdifferentials.
    #[inline]
    pub fn clarke_subgrad(&self, z: f64) -> f64 {
        match *self {
            Activation::LeakyRelu { kappa } => {
                if z >= 0.0 {
                    1.0
                } else {
                    kappa
                }
            }
            Activation::Logistic => {
                // Even function; e^{−|z|} never overflows. Near z = 0 rounding
                // can overshoot the exact supremum 1/4 by an ulp.
                let e = (-z.abs()).exp();
                (e / ((1.0 + e) * (1.0 + e))).min(0.25)
            }
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    /// Points where the activation is not differentiable.
    pub fn kinks(&self) -> &'static [f64] {
        match self {
            Activation::Logistic => &[],
            _ => &[0.0],
        }
    }

    /// Distance from `z` to the nearest kink (infinite for smooth activations).
    pub fn kink_distance(&self, z: f64) -> f64 {
        self.kinks()
            .iter()
            .map(|k| (z - k).abs())
            .fold(f64::INFINITY, f64::min)
    }
}

pub fn activation_eval(a: &Activation, z: f64) -> f64 {
    a.eval(z)
}

pub fn clarke_subgrad(a: &Activation, z: f64) -> f64 {
    a.clarke_subgrad(z)
}

/// `inf` of the 2-D standard Gaussian density over the `ε`-ball.
pub fn gaussian_beta(epsilon: f64) -> f64 {
    (-epsilon * epsilon / 2.0).exp() / (2.0 * PI)
}

/// Facts about the input distribution that the constants depend on.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InputModel {
    /// Smallest eigenvalue of `E[xxᵀ]`.
    pub eig_lambda: Option<f64>,
    /// Bound on `‖x‖²`.
    pub input_bound_c: Option<f64>,
    /// Radius and density floor of the 2-D marginal density condition used
    /// for ReLU.
    pub epsilon: Option<f64>,
    pub beta: Option<f64>,
}

impl InputModel {
    /// Standard Gaussian inputs: `λ = 1`, `ε = 1`, `β = e^{−1/2}/(2π)`.
    /// The Gaussian is unbounded, so `c` has to be supplied separately
    /// (usually as the largest `‖x‖²` actually observed).
    pub fn standard_gaussian() -> Self {
        InputModel {
            eig_lambda: Some(1.0),
            input_bound_c: None,
            epsilon: Some(1.0),
            beta: Some(gaussian_beta(1.0)),
        }
    }

    pub fn with_input_bound_c(mut self, c: f64) -> Self {
        self.input_bound_c = Some(c);
        self
    }

    pub fn with_epsilon(mut self, epsilon: f64) -> Self {
        self.epsilon = Some(epsilon);
        self.beta = Some(gaussian_beta(epsilon));
        self
    }
}

/// A single-neuron regression problem with a drifting target.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GlmProblem {
    activation: Activation,
    dim: usize,
    true_params: Vec<Vector>,
    sample_count: usize,
    label_noise_std: f64,
    inputs: InputModel,
}

impl GlmProblem {
    /// `true_params[t − 1]` is the target at step `t`.
    pub fn new(
        activation: Activation,
        true_params: Vec<Vector>,
        sample_count: usize,
        label_noise_std: f64,
    ) -> Result<Self> {
        let dim = true_params
            .first()
            .ok_or_else(|| Error::invalid("at least one true parameter is required"))?
            .len();
        if dim == 0 {
            return Err(Error::invalid("dimension must be >= 1"));
        }
        if true_params.iter().any(|w| w.len() != dim) {
            return Err(Error::invalid(
                "all true parameters must share one dimension",
            ));
        }
        if sample_count == 0 {
            return Err(Error::invalid("sample count m must be >= 1"));
        }
        if !(label_noise_std >= 0.0 && label_noise_std.is_finite()) {
            return Err(Error::Range {
                name: "label_noise_std",
                value: label_noise_std,
                bound: "must be finite and >= 0".into(),
            });
        }
        Ok(GlmProblem {
            activation,
            dim,
            true_params,
            sample_count,
            label_noise_std,
            inputs: InputModel::standard_gaussian(),
        })
    }

    pub fn with_inputs(mut self, inputs: InputModel) -> Self {
        self.inputs = inputs;
        self
    }

    pub fn activation(&self) -> &Activation {
        &self.activation
    }
    pub fn dim(&self) -> usize {
        self.dim
    }
    pub fn horizon(&self) -> usize {
        self.true_params.len()
    }
    pub fn sample_count(&self) -> usize {
        self.sample_count
    }
    pub fn label_noise_std(&self) -> f64 {
        self.label_noise_std
    }
    pub fn inputs(&self) -> &InputModel {
        &self.inputs
    }
    pub fn true_params(&self) -> &[Vector] {
        &self.true_params
    }

    /// Target at step `t` (1-based).
    pub fn wstar(&self, t: usize) -> Result<&Vector> {
        if t == 0 || t > self.true_params.len() {
            return Err(Error::invalid(format!(
                "step {t} outside 1..={}",
                self.true_params.len()
            )));
        }
        Ok(&self.true_params[t - 1])
    }

    fn check_dim(&self, w: &Vector) -> Result<()> {
        if w.len() != self.dim {
            return Err(Error::invalid(format!(
                "dimension mismatch: w has {} entries, problem has {}",
                w.len(),
                self.dim
            )));
        }
        Ok(())
    }
}

/// `m` input/label pairs, inputs stored row-major.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleBatch {
    dim: usize,
    inputs: Vec<f64>,
    labels: Vec<f64>,
}

impl SampleBatch {
    pub fn new(inputs: Vec<Vector>, labels: Vec<f64>) -> Result<Self> {
        if inputs.len() != labels.len() {
            return Err(Error::invalid(format!(
                "{} inputs but {} labels",
                inputs.len(),
                labels.len()
            )));
        }
        if inputs.is_empty() {
            return Err(Error::invalid("a batch needs at least one sample"));
        }
        if labels.iter().any(|y| !y.is_finite()) {
            return Err(Error::invalid("labels must be finite"));
        }
        let dim = inputs[0].len();
        if inputs.iter().any(|x| x.len() != dim) {
            return Err(Error::invalid("inputs must share one dimension"));
        }
        let flat = inputs.iter().flat_map(|x| x.iter().copied()).collect();
        Ok(SampleBatch {
            dim,
            inputs: flat,
            labels,
        })
    }

    pub(crate) fn from_flat(dim: usize, inputs: Vec<f64>, labels: Vec<f64>) -> Self {
        debug_assert_eq!(inputs.len(), dim * labels.len());
        SampleBatch {
            dim,
            inputs,
            labels,
        }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn input(&self, i: usize) -> &[f64] {
        &self.inputs[i * self.dim..(i + 1) * self.dim]
    }

    pub fn labels(&self) -> &[f64] {
        &self.labels
    }

    pub fn inputs_flat(&self) -> &[f64] {
        &self.inputs
    }

    /// Largest `‖x‖²` in the batch.
    pub fn max_input_norm_sq(&self) -> f64 {
        self.inputs
            .chunks_exact(self.dim)
            .map(|x| dot_slices(x, x))
            .fold(0.0, f64::max)
    }

    /// The same batch with the samples in the order given by `perm`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        if perm.len() != self.len() {
            return Err(Error::invalid("permutation length must equal batch size"));
        }
        let mut inputs = Vec::with_capacity(self.inputs.len());
        let mut labels = Vec::with_capacity(self.len());
        for &i in perm {
            inputs.extend_from_slice(self.input(i));
            labels.push(self.labels[i]);
        }
        Ok(SampleBatch::from_flat(self.dim, inputs, labels))
    }
}

/// Per-sample residual `σ⟨w,x_i⟩ − y_i` and its product with `g(⟨w,x_i⟩)`.
/// Returns `(Σ residual², coefficients)`.
pub(crate) fn residual_terms(a: &Activation, w: &[f64], batch: &SampleBatch) -> (f64, Vec<f64>) {
    let mut sq = 0.0;
    let coefs = batch
        .inputs
        .chunks_exact(batch.dim)
        .zip(&batch.labels)
        .map(|(x, y)| {
            let z = dot_slices(w, x);
            let r = a.eval(z) - y;
            sq += r * r;
            r * a.clarke_subgrad(z)
        })
        .collect();
    (sq, coefs)
}

/// `(1/m) Σ coef_i x_i`.
pub(crate) fn weighted_input_mean(batch: &SampleBatch, coefs: &[f64]) -> Vec<f64> {
    let mut g = vec![0.0; batch.dim];
    for (x, c) in batch.inputs.chunks_exact(batch.dim).zip(coefs) {
        if *c != 0.0 {
            for (gj, xj) in g.iter_mut().zip(x) {
                *gj += c * xj;
            }
        }
    }
    let inv = 1.0 / coefs.len() as f64;
    for gj in &mut g {
        *gj *= inv;
    }
    g
}

fn check_batch(p: &GlmProblem, t: usize, w: &Vector, batch: &SampleBatch) -> Result<()> {
    p.wstar(t)?;
    p.check_dim(w)?;
    if batch.dim() != p.dim() {
        return Err(Error::invalid(format!(
            "batch dimension {} does not match problem dimension {}",
            batch.dim(),
            p.dim()
        )));
    }
    Ok(())
}

/// `(1/2m) Σ (σ⟨w,x_i⟩ − y_i)²`.
pub fn empirical_loss(p: &GlmProblem, t: usize, w: &Vector, batch: &SampleBatch) -> Result<f64> {
    check_batch(p, t, w, batch)?;
    Ok(loss_on_batch(p.activation(), w.as_slice(), batch))
}

pub(crate) fn loss_on_batch(a: &Activation, w: &[f64], batch: &SampleBatch) -> f64 {
    let sq: f64 = batch
        .inputs
        .chunks_exact(batch.dim)
        .zip(&batch.labels)
        .map(|(x, y)| {
            let r = a.eval(dot_slices(w, x)) - y;
            r * r
        })
        .sum();
    sq / (2.0 * batch.len() as f64)
}

/// `(1/m) Σ (σ⟨w,x_i⟩ − y_i)·g(⟨w,x_i⟩)·x_i` with `g` the Clarke selection.
pub fn empirical_gradient(
    p: &GlmProblem,
    t: usize,
    w: &Vector,
    batch: &SampleBatch,
) -> Result<Vector> {
    check_batch(p, t, w, batch)?;
    let (_, coefs) = residual_terms(p.activation(), w.as_slice(), batch);
    Ok(Vector::from_raw(weighted_input_mean(batch, &coefs)))
}

/// Draws `n` standard Gaussian inputs with noiseless labels `σ⟨w*,x⟩`.
pub(crate) fn noiseless_gaussian_batch(
    a: &Activation,
    wstar: &[f64],
    n: usize,
    rng: &mut SeededRng,
) -> SampleBatch {
    let dim = wstar.len();
    let mut inputs = vec![0.0; n * dim];
    rng.fill_standard_normal(&mut inputs);
    let labels = inputs
        .chunks_exact(dim)
        .map(|x| a.eval(dot_slices(wstar, x)))
        .collect();
    SampleBatch::from_flat(dim, inputs, labels)
}

/// Monte-Carlo estimate of the population gradient at step `t` from `n_mc`
/// fresh noiseless Gaussian samples.
pub fn population_gradient_mc(
    p: &GlmProblem,
    t: usize,
    w: &Vector,
    rng: &mut SeededRng,
    n_mc: usize,
) -> Result<Vector> {
    let (g, _) = population_gradient_mc_with_se(p, t, w, rng, n_mc)?;
    Ok(g)
}

/// As [`population_gradient_mc`], also returning the per-coordinate standard
/// errors of the estimate.
pub fn population_gradient_mc_with_se(
    p: &GlmProblem,
    t: usize,
    w: &Vector,
    rng: &mut SeededRng,
    n_mc: usize,
) -> Result<(Vector, Vec<f64>)> {
    if n_mc == 0 {
        return Err(Error::invalid("n_mc must be >= 1"));
    }
    let wstar = p.wstar(t)?;
    p.check_dim(w)?;
    let batch = noiseless_gaussian_batch(p.activation(), wstar.as_slice(), n_mc, rng);
    let (_, coefs) = residual_terms(p.activation(), w.as_slice(), &batch);
    let mean = weighted_input_mean(&batch, &coefs);
    let mut var = vec![0.0; p.dim()];
    if n_mc > 1 {
        for (x, c) in batch.inputs.chunks_exact(batch.dim).zip(&coefs) {
            for ((v, xj), mj) in var.iter_mut().zip(x).zip(&mean) {
                let d = c * xj - mj;
                *v += d * d;
            }
        }
    }
    let denom = (n_mc.max(2) - 1) as f64 * n_mc as f64;
    let se = var.iter().map(|v| (v / denom).sqrt()).collect();
    Ok((Vector::from_raw(mean), se))
}

/// What is known about the region the iterates are confined to.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RegionHint {
    /// A ball of diameter `diameter` containing both the iterates and `w_t*`.
    Ball { diameter: f64 },
    /// The ReLU basin around each `w_t*`.
    ReluBasin,
}

/// Constants certified for the problem's activation on the hinted region.
///
/// * leaky ReLU: `ρ = κ`, `μ = κλ`, `Γ = 2c`, `K = 1`, `M = cR`
/// * logistic (needs `‖x‖ ≤ 1`): `ρ = min(1, 2e^{−R})`, `Γ = 1/8`, `K = 1/4`,
///   and `M = K²c` as a bound on the squared gradient norm
/// * ReLU: `ρ = ε⁴β sin³(π/8)/(8√2 c)`, `μ = c`, `Γ = 2c`, `K = 1`,
///   `M = max_t c‖w_t*‖`
///
/// For logistic, `ρ` is capped at 1 when `R < ln 2`; a smaller `ρ` is always
/// a weaker, still valid, certificate.
pub fn derive_constants(p: &GlmProblem, hint: RegionHint) -> Result<QuasarConstants> {
    let need = |v: Option<f64>, name: &str| {
        v.ok_or_else(|| Error::invalid(format!("input model is missing `{name}`")))
    };
    let c = need(p.inputs.input_bound_c, "input_bound_c")?;
    match (p.activation, hint) {
        (Activation::LeakyRelu { kappa }, RegionHint::Ball { diameter }) => {
            let lambda = need(p.inputs.eig_lambda, "eig_lambda")?;
            QuasarConstants::new(kappa)?
                .with_mu(kappa * lambda)?
                .with_gamma_ws(2.0 * c)?
                .with_lip_k(1.0)?
                .with_grad_bound_m(c * diameter)?
                .with_eig_lambda(lambda)?
                .with_input_bound_c(c)
        }
        (Activation::Logistic, RegionHint::Ball { diameter }) => {
            if diameter.is_nan() || diameter <= 0.0 {
                return Err(Error::invalid("logistic constants need a diameter R > 0"));
            }
            let k = 0.25;
            QuasarConstants::new((2.0 * (-diameter).exp()).min(1.0))?
                .with_gamma_ws(0.125)?
                .with_lip_k(k)?
                .with_grad_bound_m(k * k * c)?
                .with_input_bound_c(c)
        }
        (Activation::Relu, RegionHint::ReluBasin) => {
            let eps = need(p.inputs.epsilon, "epsilon")?;
            let beta = need(p.inputs.beta, "beta")?;
            let rho = relu_rho(eps, beta, c);
            let m = p
                .true_params
                .iter()
                .map(|w| c * w.norm())
                .fold(0.0, f64::max);
            QuasarConstants::new(rho)?
                .with_mu(c)?
                .with_gamma_ws(2.0 * c)?
                .with_lip_k(1.0)?
                .with_grad_bound_m(m)?
                .with_input_bound_c(c)
        }
        (a, h) => Err(Error::invalid(format!(
            "region hint {h:?} does not fit activation {}",
            a.name()
        ))),
    }
}

/// `ε⁴β sin³(π/8)/(8√2 c)`.
pub fn relu_rho(epsilon: f64, beta: f64, c: f64) -> f64 {
    epsilon.powi(4) * beta * (PI / 8.0).sin().powi(3) / (8.0 * 2f64.sqrt() * c)
}

/// Whether `w` lies in the basin `‖w − w*‖² ≤ ‖w*‖²` and `‖w‖ ≤ 2‖w*‖`.
pub fn relu_basin_contains(wstar: &Vector, w: &Vector) -> Result<bool> {
    if w.len() != wstar.len() {
        return Err(Error::invalid("basin test dimension mismatch"));
    }
    let d2: f64 = w
        .iter()
        .zip(wstar.iter())
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    let s2 = wstar.norm_sq();
    Ok(d2 <= s2 && w.norm() <= 2.0 * s2.sqrt())
}

/// Scans `n_samples` points (plus kink neighborhoods) for `|g(z)| > K`, and
/// random pairs for `|σ(z) − σ(z′)| > K|z − z′|`.
pub fn subgrad_bound_check(
    a: &Activation,
    k: f64,
    n_samples: usize,
    rng: &mut SeededRng,
) -> Result<CheckReport> {
    if k.is_nan() || k <= 0.0 {
        return Err(Error::invalid(format!("K must be > 0, got {k}")));
    }
    let mut report = CheckReport::builder(format!("subgrad_bound[{}]", a.name()));
    // Rounding slack for the Lipschitz difference quotients.
    let slack = 1e-12;
    let mut zs: Vec<f64> = Vec::with_capacity(n_samples + 64);
    for kink in a.kinks().iter().chain([0.0].iter()) {
        zs.push(*kink);
        for e in 1..=12 {
            let h = 10f64.powi(-e);
            zs.push(kink + h);
            zs.push(kink - h);
        }
    }
    for _ in 0..n_samples {
        zs.push(40.0 * rng.uniform() - 20.0);
    }
    for (i, &z) in zs.iter().enumerate() {
        report.record(i, &[z], a.clarke_subgrad(z).abs(), k, 0.0);
    }
    let offset = zs.len();
    for i in 0..n_samples {
        let z = zs[rng.uniform_index(zs.len())];
        let z2 = z + (rng.uniform() - 0.5) * 10f64.powi(-(rng.uniform_index(8) as i32));
        if z2 == z {
            continue;
        }
        let lhs = (a.eval(z) - a.eval(z2)).abs();
        let rhs = k * (z - z2).abs();
        report.record(
            offset + i,
            &[z, z2],
            lhs,
            rhs,
            slack * (1.0 + a.eval(z).abs()),
        );
    }
    Ok(report.finish())
}
