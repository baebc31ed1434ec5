//! Shared fixtures for the `quasar-core` benchmarks.

use quasar_core::experiment::{ActivationKind, ExperimentConfig};
use quasar_core::{sample_batch, GlmProblem, SampleBatch, SeededRng, Vector};

/// A problem and one training batch at step 1, with a point off the target.
pub struct Fixture {
    pub problem: GlmProblem,
    pub batch: SampleBatch,
    pub w: Vector,
}

/// Preset configuration for `kind` resized to dimension `n`, batch size `m`
/// and horizon `horizon`.
pub fn config(kind: ActivationKind, n: usize, m: usize, horizon: usize) -> ExperimentConfig {
    let base = match kind {
        ActivationKind::LeakyRelu => ExperimentConfig::leaky_relu_default(),
        ActivationKind::Logistic => ExperimentConfig::logistic_default(),
        ActivationKind::Relu => ExperimentConfig::relu_default(),
    };
    ExperimentConfig {
        n,
        m,
        eval_m: m,
        horizon,
        ..base
    }
}

pub fn fixture(kind: ActivationKind, n: usize, m: usize) -> Fixture {
    let cfg = config(kind, n, m, 2);
    let (problem, _, rng) = cfg.build(0).expect("valid benchmark config");
    let mut batch_rng: SeededRng = rng.derive(7);
    let batch = sample_batch(&problem, 1, &mut batch_rng, false).expect("batch");
    let w = problem
        .wstar(1)
        .expect("step 1")
        .axpy(0.5, &Vector::basis(n, 0))
        .expect("same dimension");
    Fixture { problem, batch, w }
}
