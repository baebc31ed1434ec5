//! Numerical verification of the inequalities behind the regret bounds.
//!
//! Checks run against an [`Oracle`]: either an exact analytic function or a
//! Monte-Carlo estimate of a GLM population loss. Each inequality is stored as
//! `lhs ≤ rhs` and a point fails when `lhs − rhs` exceeds its tolerance.
//! For Monte-Carlo oracles the tolerance is `absolute + k·SE`, where `SE` is
//! the standard error of the margin itself (linearized through the sample
//! mean), so statistical noise is not mistaken for a violation.

mod checks;
mod fd;
mod oracles;
mod persistence;

pub use checks::{
    check_error_bound_and_qg, check_offline_contraction, check_one_point_convexity, check_quasar,
    check_strong_quasar, check_weak_smoothness, controls,
};
pub use fd::{fd_gradient_check, fd_gradient_check_glm, kink_free_points};
pub use oracles::{McGlmOracle, QuadraticOracle};
pub use persistence::{
    check_relu_basin_persistence, relu_persistence_constants, PersistenceOutcome,
    PersistenceSettings,
};

use crate::numeric::{uniform_in_ball, BallRegion, SeededRng, Vector};
use crate::theory::QuasarConstants;

/// A loss function with known minimizer.
pub trait Oracle: Sync {
    fn dim(&self) -> usize;
    fn value(&self, w: &[f64]) -> f64;
    fn gradient(&self, w: &[f64]) -> Vec<f64>;
    fn minimizer(&self) -> &Vector;
    /// Constants the oracle is claimed to satisfy, if any.
    fn constants(&self) -> Option<&QuasarConstants>;

    fn min_value(&self) -> f64 {
        self.value(self.minimizer().as_slice())
    }

    /// Standard error of the estimate of `a·(f(w) − f*) + ⟨∇f(w), d⟩`.
    /// Zero for exact oracles.
    fn stderr_linear(&self, _w: &[f64], _a: f64, _d: &[f64]) -> f64 {
        0.0
    }
}

/// Slack allowed at each point: `absolute + se_multiplier · SE`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Tolerance {
    pub absolute: f64,
    pub se_multiplier: f64,
}

impl Tolerance {
    /// Fixed slack for exact oracles.
    pub fn exact(absolute: f64) -> Self {
        Tolerance {
            absolute,
            se_multiplier: 0.0,
        }
    }

    /// Three standard errors plus a rounding floor.
    pub fn monte_carlo() -> Self {
        Tolerance {
            absolute: 1e-12,
            se_multiplier: 3.0,
        }
    }

    pub fn infinite() -> Self {
        Tolerance::exact(f64::INFINITY)
    }

    pub fn at(&self, se: f64) -> f64 {
        if self.se_multiplier == 0.0 {
            self.absolute
        } else {
            self.absolute + self.se_multiplier * se
        }
    }
}

/// `count` points drawn uniformly from a ball.
pub fn sample_points(region: &BallRegion, count: usize, rng: &mut SeededRng) -> Vec<Vector> {
    (0..count)
        .map(|_| uniform_in_ball(rng, region.center(), region.radius()))
        .collect()
}

pub(crate) fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

pub(crate) fn norm_sq(a: &[f64]) -> f64 {
    a.iter().map(|x| x * x).sum()
}
