//! Closed-form constants, step-size ranges, contraction factors and regret
//! bounds for online gradient descent on quasar-convex losses.
//!
//! Every function is pure. Out-of-range inputs produce [`Error::Range`] or
//! [`Error::Precondition`] instead of being clamped, because a violated step-size
//! condition voids the guarantee the number is supposed to represent.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Constants consumed by the step-size rules and regret bounds.
///
/// `rho` is always present. The rest are optional because each activation
/// certifies a different subset (logistic losses have no `mu`, for example).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuasarConstants {
    rho: f64,
    mu: Option<f64>,
    gamma_ws: Option<f64>,
    smooth_l: Option<f64>,
    lip_k: Option<f64>,
    grad_bound_m: Option<f64>,
    eig_lambda: Option<f64>,
    input_bound_c: Option<f64>,
}

fn positive(name: &'static str, value: f64) -> Result<f64> {
    if value.is_finite() && value > 0.0 {
        Ok(value)
    } else {
        Err(Error::Range {
            name,
            value,
            bound: "must be finite and > 0".into(),
        })
    }
}

impl QuasarConstants {
    /// Starts a constant set from `rho`, which must lie in `(0, 1]`.
    pub fn new(rho: f64) -> Result<Self> {
        if !(rho > 0.0 && rho <= 1.0) {
            return Err(Error::Range {
                name: "rho",
                value: rho,
                bound: "rho must lie in (0, 1]".into(),
            });
        }
        Ok(QuasarConstants {
            rho,
            mu: None,
            gamma_ws: None,
            smooth_l: None,
            lip_k: None,
            grad_bound_m: None,
            eig_lambda: None,
            input_bound_c: None,
        })
    }

    pub fn with_mu(mut self, mu: f64) -> Result<Self> {
        self.mu = Some(positive("mu", mu)?);
        Ok(self)
    }

    pub fn with_gamma_ws(mut self, gamma: f64) -> Result<Self> {
        self.gamma_ws = Some(positive("gamma_ws", gamma)?);
        Ok(self)
    }

    pub fn with_smooth_l(mut self, l: f64) -> Result<Self> {
        self.smooth_l = Some(positive("smooth_L", l)?);
        Ok(self)
    }

    pub fn with_lip_k(mut self, k: f64) -> Result<Self> {
        self.lip_k = Some(positive("lip_K", k)?);
        Ok(self)
    }

    pub fn with_grad_bound_m(mut self, m: f64) -> Result<Self> {
        self.grad_bound_m = Some(positive("grad_bound_M", m)?);
        Ok(self)
    }

    pub fn with_eig_lambda(mut self, lambda: f64) -> Result<Self> {
        self.eig_lambda = Some(positive("eig_lambda", lambda)?);
        Ok(self)
    }

    pub fn with_input_bound_c(mut self, c: f64) -> Result<Self> {
        self.input_bound_c = Some(positive("input_bound_c", c)?);
        Ok(self)
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }
    pub fn mu(&self) -> Option<f64> {
        self.mu
    }
    pub fn gamma_ws(&self) -> Option<f64> {
        self.gamma_ws
    }
    pub fn smooth_l(&self) -> Option<f64> {
        self.smooth_l
    }
    pub fn lip_k(&self) -> Option<f64> {
        self.lip_k
    }
    pub fn grad_bound_m(&self) -> Option<f64> {
        self.grad_bound_m
    }
    pub fn eig_lambda(&self) -> Option<f64> {
        self.eig_lambda
    }
    pub fn input_bound_c(&self) -> Option<f64> {
        self.input_bound_c
    }

    fn require(value: Option<f64>, name: &str) -> Result<f64> {
        value.ok_or_else(|| Error::invalid(format!("constant `{name}` is required but absent")))
    }

    pub(crate) fn req_mu(&self) -> Result<f64> {
        Self::require(self.mu, "mu")
    }
    pub(crate) fn req_gamma_ws(&self) -> Result<f64> {
        Self::require(self.gamma_ws, "gamma_ws")
    }
    pub(crate) fn req_grad_bound_m(&self) -> Result<f64> {
        Self::require(self.grad_bound_m, "grad_bound_M")
    }
    pub(crate) fn req_input_bound_c(&self) -> Result<f64> {
        Self::require(self.input_bound_c, "input_bound_c")
    }
}

/// Which bound a [`BoundReport`] evaluates.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundKind {
    /// Quasar-convex + weakly smooth, constant step.
    QuasarWeakSmooth,
    /// Quasar-convex with bounded gradients, step `c/sqrt(T)`.
    QuasarBoundedGrad,
    /// Strongly quasar-convex + weakly smooth, constant step.
    StrongQuasar,
}

/// A regret bound split into its additive terms.
///
/// `inputs_echo` records every argument plus any auxiliary value worth
/// reporting (for example the contraction factor), keyed by name.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub kind: BoundKind,
    pub bound_total: f64,
    pub term_init: f64,
    pub term_path: f64,
    pub term_noise: f64,
    #[serde(rename = "term_sqrtT")]
    pub term_sqrt_t: Option<f64>,
    pub inputs_echo: BTreeMap<String, f64>,
}

impl BoundReport {
    fn assemble(
        kind: BoundKind,
        term_init: f64,
        term_path: f64,
        term_noise: f64,
        term_sqrt_t: Option<f64>,
        inputs_echo: BTreeMap<String, f64>,
    ) -> Self {
        let bound_total = term_init + term_path + term_noise + term_sqrt_t.unwrap_or(0.0);
        BoundReport {
            kind,
            bound_total,
            term_init,
            term_path,
            term_noise,
            term_sqrt_t,
            inputs_echo,
        }
    }
}

fn echo(pairs: &[(&str, f64)]) -> BTreeMap<String, f64> {
    pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect()
}

fn nonnegative(name: &'static str, value: f64) -> Result<f64> {
    if value.is_finite() && value >= 0.0 {
        Ok(value)
    } else {
        Err(Error::Range {
            name,
            value,
            bound: "must be finite and >= 0".into(),
        })
    }
}

/// Upper limit of the constant step sizes for which the contraction factor
/// lies in `(0, 1)`:
/// `min(2ρ/Γ, (2Γ + ρ²μ − sqrt(4Γρ²μ + ρ⁴μ²)) / (Γρμ))`.
pub fn step_size_max_strong(k: &QuasarConstants) -> Result<f64> {
    let (first, second) = strong_branches(k)?;
    Ok(first.min(second))
}

/// The two branches of [`step_size_max_strong`] in order.
pub fn strong_branches(k: &QuasarConstants) -> Result<(f64, f64)> {
    let rho = k.rho();
    let mu = k.req_mu()?;
    let g = k.req_gamma_ws()?;
    let first = 2.0 * rho / g;
    // (a − √b) rewritten as (a² − b)/(a + √b) = 4Γ²/(a + √b) to avoid cancellation.
    let a = 2.0 * g + rho * rho * mu;
    let b = 4.0 * g * rho * rho * mu + rho.powi(4) * mu * mu;
    let second = 4.0 * g / (rho * mu * (a + b.sqrt()));
    Ok((first, second))
}

/// Contraction factor `γ = 1 − αρμ − (2αρ − α²Γ)ρ²μ²/(4Γ)` of one exact
/// gradient step. Requires `0 < α < step_size_max_strong(k)`.
pub fn gamma_contraction(alpha: f64, k: &QuasarConstants) -> Result<f64> {
    let (first, second) = strong_branches(k)?;
    if alpha.is_nan() || alpha <= 0.0 {
        return Err(Error::Range {
            name: "alpha",
            value: alpha,
            bound: "alpha must be > 0".into(),
        });
    }
    if alpha >= first {
        return Err(Error::Range {
            name: "alpha",
            value: alpha,
            bound: format!("alpha < 2*rho/Gamma = {first}"),
        });
    }
    if alpha >= second {
        return Err(Error::Range {
            name: "alpha",
            value: alpha,
            bound: format!(
                "alpha < (2*Gamma + rho^2*mu - sqrt(4*Gamma*rho^2*mu + rho^4*mu^2))/(Gamma*rho*mu) = {second}"
            ),
        });
    }
    Ok(gamma_formula(
        alpha,
        k.rho(),
        k.req_mu()?,
        k.req_gamma_ws()?,
    ))
}

/// The contraction formula without range checks.
pub fn gamma_formula(alpha: f64, rho: f64, mu: f64, gamma_ws: f64) -> f64 {
    1.0 - alpha * rho * mu
        - (2.0 * alpha * rho - alpha * alpha * gamma_ws) * rho * rho * mu * mu / (4.0 * gamma_ws)
}

/// Simpler sufficient step-size rules, each inside the
/// [`step_size_max_strong`] range.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SufficientRule {
    /// `min(2ρ/Γ, 2Γ/((Γ + μ + sqrt(Γμ))ρμ))`.
    Balanced,
    /// `ρ/(2L)` for `L`-smooth losses with `ρ < 1/2`.
    Smooth,
}

pub fn step_size_sufficient(k: &QuasarConstants, rule: SufficientRule) -> Result<f64> {
    let rho = k.rho();
    match rule {
        SufficientRule::Balanced => {
            let mu = k.req_mu()?;
            let g = k.req_gamma_ws()?;
            let second = 2.0 * g / ((g + mu + (g * mu).sqrt()) * rho * mu);
            Ok((2.0 * rho / g).min(second))
        }
        SufficientRule::Smooth => {
            if rho >= 0.5 {
                return Err(Error::precondition(format!(
                    "the rho/(2L) step rule needs rho < 1/2, got rho = {rho}"
                )));
            }
            let l = QuasarConstants::require(k.smooth_l(), "smooth_L")?;
            Ok(rho / (2.0 * l))
        }
    }
}

/// Regret bound for quasar-convex, `Γ`-weakly smooth losses with constant
/// step `0 < α < 2ρ/Γ`:
/// `init/(2αρ − α²Γ) + 3R·V_T/(2αρ − α²Γ) + α·Σδ²/(2ρ − αΓ)`.
pub fn bound_quasar_weak_smooth(
    alpha: f64,
    k: &QuasarConstants,
    init_dist_sq: f64,
    r: f64,
    path_var_vt: f64,
    cum_noise_var: f64,
) -> Result<BoundReport> {
    let rho = k.rho();
    let g = k.req_gamma_ws()?;
    let limit = 2.0 * rho / g;
    if !(alpha > 0.0 && alpha < limit) {
        return Err(Error::Range {
            name: "alpha",
            value: alpha,
            bound: format!("0 < alpha < 2*rho/Gamma = {limit}"),
        });
    }
    nonnegative("init_dist_sq", init_dist_sq)?;
    nonnegative("R", r)?;
    nonnegative("path_var_VT", path_var_vt)?;
    nonnegative("cum_noise_var", cum_noise_var)?;

    let denom = 2.0 * alpha * rho - alpha * alpha * g;
    let term_init = init_dist_sq / denom;
    let term_path = 3.0 * r * path_var_vt / denom;
    let term_noise = alpha * cum_noise_var / (2.0 * rho - alpha * g);
    Ok(BoundReport::assemble(
        BoundKind::QuasarWeakSmooth,
        term_init,
        term_path,
        term_noise,
        None,
        echo(&[
            ("alpha", alpha),
            ("rho", rho),
            ("gamma_ws", g),
            ("init_dist_sq", init_dist_sq),
            ("R", r),
            ("path_var_VT", path_var_vt),
            ("cum_noise_var", cum_noise_var),
        ]),
    ))
}

/// Regret bound with step `α = c/sqrt(T)` for quasar-convex losses whose
/// squared gradient norm is bounded by `M`.
///
/// `term_sqrtT = (init/(2cρ) + cM/(2ρ))·sqrt(T)`,
/// `term_path = (3R/(2ρc))·sqrt(T)·V_T`, `term_noise = (α/(2ρ))·Σδ²`.
/// The initial-distance contribution lives inside `term_sqrtT`, so
/// `term_init` is zero here.
#[allow(clippy::too_many_arguments)]
pub fn bound_quasar_bounded_grad(
    c_scalar: f64,
    horizon: usize,
    k: &QuasarConstants,
    init_dist_sq: f64,
    r: f64,
    path_var_vt: f64,
    cum_noise_var: f64,
) -> Result<BoundReport> {
    positive("c_scalar", c_scalar)?;
    if horizon == 0 {
        return Err(Error::invalid("horizon T must be >= 1"));
    }
    let m = k.req_grad_bound_m()?;
    nonnegative("init_dist_sq", init_dist_sq)?;
    nonnegative("R", r)?;
    nonnegative("path_var_VT", path_var_vt)?;
    nonnegative("cum_noise_var", cum_noise_var)?;

    let rho = k.rho();
    let sqrt_t = (horizon as f64).sqrt();
    let alpha = c_scalar / sqrt_t;
    let term_sqrt_t = (init_dist_sq / (2.0 * c_scalar * rho) + c_scalar * m / (2.0 * rho)) * sqrt_t;
    let term_path = 3.0 * r / (2.0 * rho * c_scalar) * sqrt_t * path_var_vt;
    let term_noise = alpha / (2.0 * rho) * cum_noise_var;
    Ok(BoundReport::assemble(
        BoundKind::QuasarBoundedGrad,
        0.0,
        term_path,
        term_noise,
        Some(term_sqrt_t),
        echo(&[
            ("c_scalar", c_scalar),
            ("T", horizon as f64),
            ("alpha", alpha),
            ("rho", rho),
            ("grad_bound_M", m),
            ("init_dist_sq", init_dist_sq),
            ("R", r),
            ("path_var_VT", path_var_vt),
            ("cum_noise_var", cum_noise_var),
        ]),
    ))
}

/// The `c` minimizing the bounded-gradient bound for a prior path-variation
/// guess: `sqrt((R² + 3R·Ṽ_T)/M)`.
pub fn optimal_c_scalar(r: f64, vt_prior: f64, m: f64) -> Result<f64> {
    positive("R", r)?;
    positive("M", m)?;
    // A zero prior is the static case and is allowed.
    nonnegative("VT_prior", vt_prior)?;
    Ok(((r * r + 3.0 * r * vt_prior) / m).sqrt())
}

/// Regret bound for strongly quasar-convex, weakly smooth losses with a
/// constant step inside the [`step_size_max_strong`] range.
///
/// `M·init/(1−γ) + γM·V_T/(1−γ) + αM·Σδ`. The echo also carries
/// `noise_term_without_M = α·Σδ` for comparison.
pub fn bound_strong_quasar(
    alpha: f64,
    k: &QuasarConstants,
    init_dist: f64,
    path_var_vt: f64,
    cum_noise: f64,
) -> Result<BoundReport> {
    let gamma = gamma_contraction(alpha, k)?;
    let m = k.req_grad_bound_m()?;
    let mut report = strong_quasar_from_gamma(gamma, alpha, m, init_dist, path_var_vt, cum_noise)?;
    report.inputs_echo.insert("rho".into(), k.rho());
    report.inputs_echo.insert("mu".into(), k.req_mu()?);
    report
        .inputs_echo
        .insert("gamma_ws".into(), k.req_gamma_ws()?);
    Ok(report)
}

/// [`bound_strong_quasar`] with the contraction factor supplied directly.
pub fn strong_quasar_from_gamma(
    gamma: f64,
    alpha: f64,
    m: f64,
    init_dist: f64,
    path_var_vt: f64,
    cum_noise: f64,
) -> Result<BoundReport> {
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(Error::Range {
            name: "gamma",
            value: gamma,
            bound: "0 < gamma < 1".into(),
        });
    }
    positive("alpha", alpha)?;
    positive("M", m)?;
    nonnegative("init_dist", init_dist)?;
    nonnegative("path_var_VT", path_var_vt)?;
    nonnegative("cum_noise", cum_noise)?;

    let term_init = m * init_dist / (1.0 - gamma);
    let term_path = gamma * m * path_var_vt / (1.0 - gamma);
    let term_noise = alpha * m * cum_noise;
    Ok(BoundReport::assemble(
        BoundKind::StrongQuasar,
        term_init,
        term_path,
        term_noise,
        None,
        echo(&[
            ("alpha", alpha),
            ("gamma", gamma),
            ("grad_bound_M", m),
            ("init_dist", init_dist),
            ("path_var_VT", path_var_vt),
            ("cum_noise", cum_noise),
            ("noise_term_without_M", alpha * cum_noise),
        ]),
    ))
}

/// Coefficient `4/(ρμ)²` of the error bound `‖w* − w‖² ≤ coeff·‖∇f(w)‖²`.
pub fn error_bound_coeff(k: &QuasarConstants) -> Result<f64> {
    let rm = k.rho() * k.req_mu()?;
    Ok(4.0 / (rm * rm))
}

/// Coefficient `ρ²μ²/(4Γ)` of the growth bound `f(w) − f* ≥ coeff·‖w − w*‖²`.
pub fn quadratic_growth_coeff(k: &QuasarConstants) -> Result<f64> {
    let rm = k.rho() * k.req_mu()?;
    Ok(rm * rm / (4.0 * k.req_gamma_ws()?))
}

fn relu_inner(rho: f64, c: f64) -> f64 {
    // −8c + sqrt(64c² + 2ρ²c), rationalized.
    2.0 * rho * rho * c / (8.0 * c + (64.0 * c * c + 2.0 * rho * rho * c).sqrt())
}

/// Smallest `‖w_t*‖` for which the ReLU basin survives gradient noise of size
/// `δ_t` with probability `1 − τ`:
/// `2ρδ / (sqrt(τ)·(−8c + sqrt(64c² + 2ρ²c)))`.
pub fn relu_min_norm(k: &QuasarConstants, delta_t: f64, tau: f64) -> Result<f64> {
    let c = k.req_input_bound_c()?;
    if c < 0.5 {
        return Err(Error::precondition(format!(
            "the ReLU basin guarantee needs c >= 1/2, got c = {c}"
        )));
    }
    if !(tau > 0.0 && tau < 1.0) {
        return Err(Error::Range {
            name: "tau",
            value: tau,
            bound: "0 < tau < 1".into(),
        });
    }
    nonnegative("delta_t", delta_t)?;
    let rho = k.rho();
    Ok(2.0 * rho * delta_t / (tau.sqrt() * relu_inner(rho, c)))
}

/// Largest per-step drift `αρ‖w_t*‖/32` the ReLU basin guarantee tolerates.
pub fn relu_max_drift(alpha: f64, k: &QuasarConstants, wstar_norm: f64) -> Result<f64> {
    positive("alpha", alpha)?;
    nonnegative("wstar_norm", wstar_norm)?;
    Ok(alpha * k.rho() * wstar_norm / 32.0)
}

/// Right-hand side of the sufficient drift condition that keeps
/// `‖w_{t+1} − w_{t+1}*‖² ≤ ‖w_{t+1}*‖²`, with `γ = 1 − αρ/2` and `e_norm`
/// the realized gradient error. Reported for diagnostics only.
pub fn relu_drift_condition_distance(alpha: f64, rho: f64, wstar_norm: f64, e_norm: f64) -> f64 {
    let gamma = 1.0 - alpha * rho / 2.0;
    let sg = gamma.sqrt();
    let num = (1.0 - gamma) * wstar_norm * wstar_norm
        - 2.0 * alpha * sg * wstar_norm * e_norm
        - alpha * alpha * e_norm * e_norm;
    let den = 2.0 * (sg + 1.0) * wstar_norm + 2.0 * alpha * e_norm;
    num / den
}

/// Right-hand side of the sufficient drift condition that keeps
/// `‖w_{t+1}‖ ≤ 2‖w_{t+1}*‖`. Diagnostic companion of
/// [`relu_drift_condition_distance`].
pub fn relu_drift_condition_norm(alpha: f64, rho: f64, wstar_norm: f64, e_norm: f64) -> f64 {
    let gamma = 1.0 - alpha * rho / 2.0;
    let sg = gamma.sqrt();
    let num = (3.0 - gamma - 2.0 * sg) * wstar_norm * wstar_norm
        - 2.0 * alpha * (1.0 + sg) * wstar_norm * e_norm
        - alpha * alpha * e_norm * e_norm;
    num / (8.0 * wstar_norm)
}
