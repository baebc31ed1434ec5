use crate::error::{Error, Result};
use crate::glm::Activation;
use crate::numeric::{dot_slices, SeededRng, Vector};
use crate::theory::QuasarConstants;

use super::Oracle;

/// `f(w) = ½L‖w − w*‖²`.
#[derive(Clone, Debug)]
pub struct QuadraticOracle {
    center: Vector,
    l: f64,
    constants: Option<QuasarConstants>,
}

impl QuadraticOracle {
    pub fn new(center: Vector, l: f64) -> Result<Self> {
        if !(l > 0.0 && l.is_finite()) {
            return Err(Error::invalid(format!("curvature L must be > 0, got {l}")));
        }
        Ok(QuadraticOracle {
            center,
            l,
            constants: None,
        })
    }

    pub fn with_constants(mut self, k: QuasarConstants) -> Self {
        self.constants = Some(k);
        self
    }

    pub fn curvature(&self) -> f64 {
        self.l
    }
}

impl Oracle for QuadraticOracle {
    fn dim(&self) -> usize {
        self.center.len()
    }

    fn value(&self, w: &[f64]) -> f64 {
        0.5 * self.l * super::norm_sq(&super::sub(w, self.center.as_slice()))
    }

    fn gradient(&self, w: &[f64]) -> Vec<f64> {
        w.iter()
            .zip(self.center.iter())
            .map(|(a, b)| self.l * (a - b))
            .collect()
    }

    fn minimizer(&self) -> &Vector {
        &self.center
    }

    fn constants(&self) -> Option<&QuasarConstants> {
        self.constants.as_ref()
    }

    fn min_value(&self) -> f64 {
        0.0
    }
}

/// Monte-Carlo stand-in for a GLM population loss: a fixed set of `N`
/// standard Gaussian inputs with noiseless labels `σ⟨w*, x⟩`.
///
/// With `rescale_to_unit` every input is divided by the largest input norm
/// in the set, so `‖x‖ ≤ 1` holds exactly.
#[derive(Clone, Debug)]
pub struct McGlmOracle {
    activation: Activation,
    wstar: Vector,
    dim: usize,
    inputs: Vec<f64>,
    labels: Vec<f64>,
    constants: Option<QuasarConstants>,
}

impl McGlmOracle {
    pub fn sample(
        activation: Activation,
        wstar: Vector,
        n_mc: usize,
        rng: &mut SeededRng,
        rescale_to_unit: bool,
    ) -> Result<Self> {
        if n_mc < 2 {
            return Err(Error::invalid("n_mc must be >= 2"));
        }
        let dim = wstar.len();
        let mut inputs = vec![0.0; n_mc * dim];
        rng.fill_standard_normal(&mut inputs);
        if rescale_to_unit {
            let max = inputs
                .chunks_exact(dim)
                .map(|x| dot_slices(x, x))
                .fold(0.0, f64::max)
                .sqrt();
            for v in &mut inputs {
                *v /= max;
            }
        }
        let labels = inputs
            .chunks_exact(dim)
            .map(|x| activation.eval(dot_slices(wstar.as_slice(), x)))
            .collect();
        Ok(McGlmOracle {
            activation,
            wstar,
            dim,
            inputs,
            labels,
            constants: None,
        })
    }

    pub fn with_constants(mut self, k: QuasarConstants) -> Self {
        self.constants = Some(k);
        self
    }

    pub fn sample_count(&self) -> usize {
        self.labels.len()
    }

    pub fn activation(&self) -> &Activation {
        &self.activation
    }

    /// Largest `‖x‖²` in the sample set.
    pub fn max_input_norm_sq(&self) -> f64 {
        self.inputs
            .chunks_exact(self.dim)
            .map(|x| dot_slices(x, x))
            .fold(0.0, f64::max)
    }

    fn rows(&self) -> impl Iterator<Item = (&[f64], f64)> {
        self.inputs
            .chunks_exact(self.dim)
            .zip(self.labels.iter().copied())
    }
}

impl Oracle for McGlmOracle {
    fn dim(&self) -> usize {
        self.dim
    }

    fn value(&self, w: &[f64]) -> f64 {
        let sq: f64 = self
            .rows()
            .map(|(x, y)| {
                let r = self.activation.eval(dot_slices(w, x)) - y;
                r * r
            })
            .sum();
        sq / (2.0 * self.labels.len() as f64)
    }

    fn gradient(&self, w: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; self.dim];
        for (x, y) in self.rows() {
            let z = dot_slices(w, x);
            let c = (self.activation.eval(z) - y) * self.activation.clarke_subgrad(z);
            if c != 0.0 {
                for (gj, xj) in g.iter_mut().zip(x) {
                    *gj += c * xj;
                }
            }
        }
        let inv = 1.0 / self.labels.len() as f64;
        g.iter_mut().for_each(|v| *v *= inv);
        g
    }

    fn minimizer(&self) -> &Vector {
        &self.wstar
    }

    fn constants(&self) -> Option<&QuasarConstants> {
        self.constants.as_ref()
    }

    /// Labels are noiseless, so every per-sample loss vanishes at `w*`.
    fn min_value(&self) -> f64 {
        0.0
    }

    fn stderr_linear(&self, w: &[f64], a: f64, d: &[f64]) -> f64 {
        let n = self.labels.len() as f64;
        let terms: Vec<f64> = self
            .rows()
            .map(|(x, y)| {
                let z = dot_slices(w, x);
                let r = self.activation.eval(z) - y;
                a * 0.5 * r * r + r * self.activation.clarke_subgrad(z) * dot_slices(x, d)
            })
            .collect();
        let mean = terms.iter().sum::<f64>() / n;
        let var = terms.iter().map(|s| (s - mean) * (s - mean)).sum::<f64>() / (n - 1.0);
        (var / n).sqrt()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_values() {
        let q = QuadraticOracle::new(Vector::new(vec![1.0, 2.0]).unwrap(), 4.0).unwrap();
        assert_eq!(q.value(&[1.0, 3.0]), 2.0);
        assert_eq!(q.gradient(&[1.0, 3.0]), vec![0.0, 4.0]);
        assert!(QuadraticOracle::new(Vector::zeros(1), 0.0).is_err());
    }

    #[test]
    fn mc_oracle_minimum_and_rescaling() {
        let w = Vector::new(vec![0.3, -0.4, 0.1]).unwrap();
        let o = McGlmOracle::sample(
            Activation::Logistic,
            w.clone(),
            500,
            &mut SeededRng::new(2),
            true,
        )
        .unwrap();
        assert!(o.max_input_norm_sq() <= 1.0 + 1e-15);
        assert_eq!(o.value(w.as_slice()), 0.0);
        assert!(o.gradient(w.as_slice()).iter().all(|g| *g == 0.0));
    }

    #[test]
    fn stderr_shrinks_with_samples() {
        let w = Vector::new(vec![1.0, -1.0]).unwrap();
        let p = [0.5, 0.5];
        let d = [0.3, -0.2];
        let a = Activation::leaky_relu(0.2).unwrap();
        let small =
            McGlmOracle::sample(a, w.clone(), 1_000, &mut SeededRng::new(1), false).unwrap();
        let large = McGlmOracle::sample(a, w, 16_000, &mut SeededRng::new(1), false).unwrap();
        let ratio = large.stderr_linear(&p, 1.0, &d) / small.stderr_linear(&p, 1.0, &d);
        assert!((ratio - 0.25).abs() < 0.05, "{ratio}");
    }
}
