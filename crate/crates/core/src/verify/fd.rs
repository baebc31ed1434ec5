use crate::error::{Error, Result};
use crate::glm::{
    loss_on_batch, residual_terms, weighted_input_mean, Activation, GlmProblem, SampleBatch,
};
use crate::numeric::{dot_slices, uniform_in_ball, SeededRng, Vector};
use crate::report::CheckReport;

/// Points closer than this to a kink, in pre-activation units, are excluded.
const KINK_MARGIN: f64 = 1e-3;

/// Central-difference gradient of `f` with step `h`.
fn central_difference(f: &dyn Fn(&[f64]) -> f64, w: &[f64], h: f64) -> Vec<f64> {
    let mut x = w.to_vec();
    (0..w.len())
        .map(|j| {
            x[j] = w[j] + h;
            let up = f(&x);
            x[j] = w[j] - h;
            let down = f(&x);
            x[j] = w[j];
            (up - down) / (2.0 * h)
        })
        .collect()
}

fn relative_error(fd: &[f64], g: &[f64]) -> f64 {
    let diff: f64 = fd
        .iter()
        .zip(g)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt();
    let scale = dot_slices(g, g).sqrt().max(1e-8);
    diff / scale
}

/// Compares `grad` against central differences of `f`, recording the relative
/// error `‖fd − g‖ / max(‖g‖, 1e-8)` against `tol` at every point.
pub fn fd_gradient_check(
    name: &str,
    f: &dyn Fn(&[f64]) -> f64,
    grad: &dyn Fn(&[f64]) -> Vec<f64>,
    points: &[Vector],
    h: f64,
    tol: f64,
) -> Result<CheckReport> {
    if h.is_nan() || h <= 0.0 {
        return Err(Error::invalid(format!(
            "finite-difference step must be > 0, got {h}"
        )));
    }
    let mut report = CheckReport::builder(name);
    for (i, w) in points.iter().enumerate() {
        let fd = central_difference(f, w.as_slice(), h);
        let g = grad(w.as_slice());
        report.record(i, w.as_slice(), relative_error(&fd, &g), tol, 0.0);
    }
    Ok(report.finish())
}

/// Smallest distance from any `⟨w, x_i⟩` to a kink, adjusted by how far a
/// coordinate step of size `h` can move it.
fn kink_clearance(a: &Activation, w: &[f64], batch: &SampleBatch, h: f64) -> f64 {
    (0..batch.len())
        .map(|i| {
            let x = batch.input(i);
            let reach = h * x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            a.kink_distance(dot_slices(w, x)) - reach
        })
        .fold(f64::INFINITY, f64::min)
}

/// Finite-difference check of the empirical gradient on `batch`. Points where
/// some pre-activation lies within `1e-3` of a kink (after accounting for the
/// difference step) are excluded rather than tested.
pub fn fd_gradient_check_glm(
    p: &GlmProblem,
    t: usize,
    batch: &SampleBatch,
    points: &[Vector],
    h: f64,
    tol: f64,
) -> Result<CheckReport> {
    p.wstar(t)?;
    if batch.dim() != p.dim() || points.iter().any(|w| w.len() != p.dim()) {
        return Err(Error::invalid(
            "dimension mismatch in finite-difference check",
        ));
    }
    if h.is_nan() || h <= 0.0 {
        return Err(Error::invalid(format!(
            "finite-difference step must be > 0, got {h}"
        )));
    }
    let a = *p.activation();
    let f = |w: &[f64]| loss_on_batch(&a, w, batch);
    let mut report = CheckReport::builder(format!("fd_gradient[{}]", a.name()));
    for (i, w) in points.iter().enumerate() {
        if kink_clearance(&a, w.as_slice(), batch, h) < KINK_MARGIN {
            report.exclude();
            continue;
        }
        let fd = central_difference(&f, w.as_slice(), h);
        let (_, coefs) = residual_terms(&a, w.as_slice(), batch);
        let g = weighted_input_mean(batch, &coefs);
        report.record(i, w.as_slice(), relative_error(&fd, &g), tol, 0.0);
    }
    Ok(report.finish())
}

/// Up to `count` points drawn uniformly from the ball around `center` whose
/// pre-activations on `batch` all keep at least `1e-3` from every kink.
/// Gives up after `1000·count` draws.
pub fn kink_free_points(
    a: &Activation,
    batch: &SampleBatch,
    center: &Vector,
    radius: f64,
    count: usize,
    rng: &mut SeededRng,
) -> Vec<Vector> {
    let mut out = Vec::with_capacity(count);
    let mut attempts = 0;
    while out.len() < count && attempts < 1000 * count {
        attempts += 1;
        let w = uniform_in_ball(rng, center, radius);
        if kink_clearance(a, w.as_slice(), batch, 0.0) >= KINK_MARGIN {
            out.push(w);
        }
    }
    out
}
