use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::numeric::{dot_slices, Vector};
use crate::report::CheckReport;
use crate::theory::{gamma_contraction, gamma_formula};

use super::{norm_sq, sub, Oracle, Tolerance};

/// One point's inequality `lhs ≤ rhs`, plus the linear functional
/// `a·(f − f*) + ⟨∇f, d⟩` whose standard error sets the tolerance.
struct Margin {
    lhs: f64,
    rhs: f64,
    a: f64,
    d: Vec<f64>,
}

/// Evaluates `margin(w, f(w) − f*, ∇f(w), w − w*)` at every point in
/// parallel and records the results in point order.
fn run_points<F>(
    name: &str,
    oracle: &dyn Oracle,
    points: &[Vector],
    tol: Tolerance,
    margin: F,
) -> CheckReport
where
    F: Fn(f64, &[f64], &[f64]) -> Margin + Sync,
{
    let fstar = oracle.min_value();
    let wstar = oracle.minimizer().as_slice();
    let rows: Vec<(f64, f64, f64)> = points
        .par_iter()
        .map(|w| {
            let ws = w.as_slice();
            let gap = oracle.value(ws) - fstar;
            let g = oracle.gradient(ws);
            let diff = sub(ws, wstar);
            let m = margin(gap, &g, &diff);
            let se = if tol.se_multiplier == 0.0 {
                0.0
            } else {
                oracle.stderr_linear(ws, m.a, &m.d)
            };
            (m.lhs, m.rhs, tol.at(se))
        })
        .collect();
    let mut report = CheckReport::builder(name);
    for (i, (w, (lhs, rhs, t))) in points.iter().zip(rows).enumerate() {
        report.record(i, w.as_slice(), lhs, rhs, t);
    }
    report.finish()
}

fn check_rho(rho: f64) -> Result<()> {
    if !(rho > 0.0 && rho <= 1.0) {
        return Err(Error::Range {
            name: "rho",
            value: rho,
            bound: "rho must lie in (0, 1]".into(),
        });
    }
    Ok(())
}

fn check_positive(name: &'static str, v: f64) -> Result<()> {
    if v.is_nan() || v <= 0.0 {
        return Err(Error::Range {
            name,
            value: v,
            bound: "must be > 0".into(),
        });
    }
    Ok(())
}

fn quasar_raw(
    name: &str,
    oracle: &dyn Oracle,
    rho: f64,
    mu: f64,
    points: &[Vector],
    tol: Tolerance,
) -> CheckReport {
    run_points(name, oracle, points, tol, |gap, g, diff| {
        // f(w) + (1/ρ)⟨∇f, w* − w⟩ + (μ/2)‖w* − w‖² ≤ f(w*)
        let lhs = gap - dot_slices(g, diff) / rho + 0.5 * mu * norm_sq(diff);
        Margin {
            lhs,
            rhs: 0.0,
            a: 1.0,
            d: diff.iter().map(|x| -x / rho).collect(),
        }
    })
}

/// `f(w*) ≥ f(w) + (1/ρ)⟨∇f(w), w* − w⟩` at every point.
pub fn check_quasar(
    oracle: &dyn Oracle,
    rho: f64,
    points: &[Vector],
    tol: Tolerance,
) -> Result<CheckReport> {
    check_rho(rho)?;
    Ok(quasar_raw("quasar", oracle, rho, 0.0, points, tol))
}

/// `f(w*) ≥ f(w) + (1/ρ)⟨∇f(w), w* − w⟩ + (μ/2)‖w* − w‖²` at every point.
pub fn check_strong_quasar(
    oracle: &dyn Oracle,
    rho: f64,
    mu: f64,
    points: &[Vector],
    tol: Tolerance,
) -> Result<CheckReport> {
    check_rho(rho)?;
    check_positive("mu", mu)?;
    Ok(quasar_raw("strong_quasar", oracle, rho, mu, points, tol))
}

fn weak_smooth_raw(
    name: &str,
    oracle: &dyn Oracle,
    gamma: f64,
    points: &[Vector],
    tol: Tolerance,
) -> CheckReport {
    run_points(name, oracle, points, tol, |gap, g, _| Margin {
        lhs: norm_sq(g),
        rhs: gamma * gap,
        a: -gamma,
        d: g.iter().map(|x| 2.0 * x).collect(),
    })
}

/// `‖∇f(w)‖² ≤ Γ(f(w) − f(w*))` at every point.
pub fn check_weak_smoothness(
    oracle: &dyn Oracle,
    gamma_ws: f64,
    points: &[Vector],
    tol: Tolerance,
) -> Result<CheckReport> {
    check_positive("gamma_ws", gamma_ws)?;
    Ok(weak_smooth_raw(
        "weak_smoothness",
        oracle,
        gamma_ws,
        points,
        tol,
    ))
}

fn error_bound_raw(
    name: &str,
    oracle: &dyn Oracle,
    coeff: f64,
    points: &[Vector],
    tol: Tolerance,
) -> CheckReport {
    run_points(name, oracle, points, tol, |_, g, diff| Margin {
        lhs: norm_sq(diff),
        rhs: coeff * norm_sq(g),
        a: 0.0,
        d: g.iter().map(|x| 2.0 * coeff * x).collect(),
    })
}

fn growth_raw(
    name: &str,
    oracle: &dyn Oracle,
    coeff: f64,
    points: &[Vector],
    tol: Tolerance,
) -> CheckReport {
    run_points(name, oracle, points, tol, |gap, g, diff| Margin {
        lhs: coeff * norm_sq(diff),
        rhs: gap,
        a: 1.0,
        d: vec![0.0; g.len()],
    })
}

/// Error bound `‖w* − w‖² ≤ (4/(ρμ)²)‖∇f(w)‖²` and quadratic growth
/// `f(w) − f(w*) ≥ (ρ²μ²/(4Γ))‖w − w*‖²`, both recorded in one report.
pub fn check_error_bound_and_qg(
    oracle: &dyn Oracle,
    rho: f64,
    mu: f64,
    gamma_ws: f64,
    points: &[Vector],
    tol: Tolerance,
) -> Result<CheckReport> {
    check_rho(rho)?;
    check_positive("mu", mu)?;
    check_positive("gamma_ws", gamma_ws)?;
    let rm = rho * mu;
    let eb = error_bound_raw("error_bound", oracle, 4.0 / (rm * rm), points, tol);
    let qg = growth_raw(
        "quadratic_growth",
        oracle,
        rm * rm / (4.0 * gamma_ws),
        points,
        tol,
    );
    let mut report = CheckReport::builder("error_bound_qg");
    report.note(eb.summary_line());
    report.note(qg.summary_line());
    report.absorb(eb);
    report.absorb(qg);
    Ok(report.finish())
}

fn one_point_raw(
    name: &str,
    oracle: &dyn Oracle,
    c: f64,
    points: &[Vector],
    tol: Tolerance,
) -> CheckReport {
    run_points(name, oracle, points, tol, |_, g, diff| Margin {
        lhs: c * norm_sq(diff),
        rhs: dot_slices(g, diff),
        a: 0.0,
        d: diff.to_vec(),
    })
}

/// `⟨∇f(w), w − w*⟩ ≥ C‖w − w*‖²` at every point.
pub fn check_one_point_convexity(
    oracle: &dyn Oracle,
    c: f64,
    points: &[Vector],
    tol: Tolerance,
) -> Result<CheckReport> {
    check_positive("C", c)?;
    Ok(one_point_raw("one_point_convexity", oracle, c, points, tol))
}

/// `(point, lhs, rhs, tol)` of one contraction step.
type StepRow = (Vec<f64>, f64, f64, f64);

/// Runs `n_steps` exact-oracle gradient steps from each start and checks
/// `‖w⁺ − w*‖² ≤ γ‖w − w*‖²` at every step, with `γ` the contraction factor
/// of the oracle's constants. Fails with a range error when `alpha` is outside
/// the admissible step-size range.
pub fn check_offline_contraction(
    oracle: &dyn Oracle,
    alpha: f64,
    starts: &[Vector],
    n_steps: usize,
    tol: Tolerance,
) -> Result<CheckReport> {
    let k = oracle
        .constants()
        .ok_or_else(|| Error::invalid("oracle carries no constants"))?;
    let gamma = gamma_contraction(alpha, k)?;
    let wstar = oracle.minimizer().as_slice();

    let rows: Vec<Vec<StepRow>> = starts
        .par_iter()
        .map(|w0| {
            let mut w = w0.as_slice().to_vec();
            let mut out = Vec::with_capacity(n_steps);
            for _ in 0..n_steps {
                let g = oracle.gradient(&w);
                let next: Vec<f64> = w.iter().zip(&g).map(|(wi, gi)| wi - alpha * gi).collect();
                let before = norm_sq(&sub(&w, wstar));
                let after_diff = sub(&next, wstar);
                let after = norm_sq(&after_diff);
                let se = if tol.se_multiplier == 0.0 {
                    0.0
                } else {
                    let d: Vec<f64> = after_diff.iter().map(|x| 2.0 * alpha * x).collect();
                    oracle.stderr_linear(&w, 0.0, &d)
                };
                out.push((w.clone(), after, gamma * before, tol.at(se)));
                w = next;
            }
            out
        })
        .collect();

    let mut report = CheckReport::builder("offline_contraction");
    let mut worst_ratio = 0.0f64;
    for (s, steps) in rows.into_iter().enumerate() {
        for (j, (w, lhs, rhs, t)) in steps.into_iter().enumerate() {
            if rhs > 0.0 {
                worst_ratio = worst_ratio.max(lhs / rhs * gamma);
            }
            report.record(s * n_steps + j, &w, lhs, rhs, t);
        }
    }
    report.note(format!("gamma={gamma:?} worst_ratio={worst_ratio:?}"));
    Ok(report.finish())
}

/// Deliberately wrong constants. Each function inflates (or deflates) one
/// constant by [`controls::INFLATION`] in the direction that makes its
/// inequality stricter, bypassing domain validation. A sound checker must
/// report failures; a report that passes means the check is vacuous.
pub mod controls {
    use super::*;

    pub const INFLATION: f64 = 1e10;

    pub fn quasar(oracle: &dyn Oracle, rho: f64, points: &[Vector], tol: Tolerance) -> CheckReport {
        quasar_raw(
            "quasar_negative_control",
            oracle,
            rho * INFLATION,
            0.0,
            points,
            tol,
        )
    }

    pub fn strong_quasar(
        oracle: &dyn Oracle,
        rho: f64,
        mu: f64,
        points: &[Vector],
        tol: Tolerance,
    ) -> CheckReport {
        quasar_raw(
            "strong_quasar_negative_control",
            oracle,
            rho,
            mu * INFLATION,
            points,
            tol,
        )
    }

    pub fn weak_smoothness(
        oracle: &dyn Oracle,
        gamma_ws: f64,
        points: &[Vector],
        tol: Tolerance,
    ) -> CheckReport {
        weak_smooth_raw(
            "weak_smoothness_negative_control",
            oracle,
            gamma_ws / INFLATION,
            points,
            tol,
        )
    }

    pub fn error_bound(
        oracle: &dyn Oracle,
        rho: f64,
        mu: f64,
        points: &[Vector],
        tol: Tolerance,
    ) -> CheckReport {
        let rm = rho * mu;
        error_bound_raw(
            "error_bound_negative_control",
            oracle,
            4.0 / (rm * rm) / INFLATION,
            points,
            tol,
        )
    }

    pub fn quadratic_growth(
        oracle: &dyn Oracle,
        rho: f64,
        mu: f64,
        gamma_ws: f64,
        points: &[Vector],
        tol: Tolerance,
    ) -> CheckReport {
        let rm = rho * mu;
        growth_raw(
            "quadratic_growth_negative_control",
            oracle,
            rm * rm / (4.0 * gamma_ws) * INFLATION,
            points,
            tol,
        )
    }

    pub fn one_point(
        oracle: &dyn Oracle,
        c: f64,
        points: &[Vector],
        tol: Tolerance,
    ) -> CheckReport {
        one_point_raw(
            "one_point_convexity_negative_control",
            oracle,
            c * INFLATION,
            points,
            tol,
        )
    }

    /// Contraction with `γ` shrunk by [`INFLATION`].
    pub fn offline_contraction(
        oracle: &dyn Oracle,
        alpha: f64,
        starts: &[Vector],
        n_steps: usize,
        tol: Tolerance,
    ) -> Result<CheckReport> {
        let k = oracle
            .constants()
            .ok_or_else(|| Error::invalid("oracle carries no constants"))?;
        let gamma = gamma_formula(alpha, k.rho(), k.req_mu()?, k.req_gamma_ws()?) / INFLATION;
        let wstar = oracle.minimizer().as_slice();
        let mut report = CheckReport::builder("offline_contraction_negative_control");
        for (s, w0) in starts.iter().enumerate() {
            let mut w = w0.as_slice().to_vec();
            for j in 0..n_steps {
                let g = oracle.gradient(&w);
                let next: Vec<f64> = w.iter().zip(&g).map(|(wi, gi)| wi - alpha * gi).collect();
                let se = if tol.se_multiplier == 0.0 {
                    0.0
                } else {
                    let d: Vec<f64> = sub(&next, wstar).iter().map(|x| 2.0 * alpha * x).collect();
                    oracle.stderr_linear(&w, 0.0, &d)
                };
                let lhs = norm_sq(&sub(&next, wstar));
                let rhs = gamma * norm_sq(&sub(&w, wstar));
                report.record(s * n_steps + j, &w, lhs, rhs, tol.at(se));
                w = next;
            }
        }
        Ok(report.finish())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::{BallRegion, SeededRng};
    use crate::theory::QuasarConstants;
    use crate::verify::{sample_points, QuadraticOracle};

    fn quad(l: f64) -> QuadraticOracle {
        QuadraticOracle::new(Vector::new(vec![1.0, -2.0, 0.5]).unwrap(), l).unwrap()
    }

    fn pts(o: &QuadraticOracle, n: usize) -> Vec<Vector> {
        let region = BallRegion::new(o.minimizer().clone(), 3.0).unwrap();
        sample_points(&region, n, &mut SeededRng::new(5))
    }

    #[test]
    fn quasar_on_convex_quadratic() {
        let o = quad(1.0);
        let p = pts(&o, 200);
        assert!(
            check_quasar(&o, 1.0, &p, Tolerance::exact(0.0))
                .unwrap()
                .passed
        );
        assert!(matches!(
            check_quasar(&o, 2.0, &p, Tolerance::exact(0.0)),
            Err(Error::Range { .. })
        ));
        assert!(!controls::quasar(&o, 1.0, &p, Tolerance::exact(1e-9)).passed);
    }

    #[test]
    fn strong_quasar_equality_and_failure() {
        let o = quad(1.0);
        let p = pts(&o, 200);
        assert!(
            check_strong_quasar(&o, 1.0, 1.0, &p, Tolerance::exact(1e-9))
                .unwrap()
                .passed
        );
        let bad = check_strong_quasar(&o, 1.0, 3.0, &p, Tolerance::exact(1e-9)).unwrap();
        assert!(!bad.passed);
        assert_eq!(bad.violations.len(), 200);
    }

    #[test]
    fn weak_smoothness_tight_case() {
        for l in [0.1, 1.0, 10.0] {
            let o = quad(l);
            let p = pts(&o, 100);
            assert!(
                check_weak_smoothness(&o, 2.0 * l, &p, Tolerance::exact(1e-9))
                    .unwrap()
                    .passed
            );
            assert!(
                !check_weak_smoothness(&o, l, &p, Tolerance::exact(1e-9))
                    .unwrap()
                    .passed
            );
        }
    }

    #[test]
    fn error_bound_and_growth() {
        let mu = 0.7;
        let o = quad(mu);
        let p = pts(&o, 100);
        for rho in [0.2, 0.6, 1.0] {
            let r = check_error_bound_and_qg(&o, rho, mu, 2.0 * mu, &p, Tolerance::exact(1e-9))
                .unwrap();
            assert!(r.passed, "rho {rho}");
        }
        let at_min = vec![o.minimizer().clone()];
        let r = check_error_bound_and_qg(&o, 0.5, mu, 2.0 * mu, &at_min, Tolerance::exact(0.0))
            .unwrap();
        assert!(r.passed);
        assert_eq!(r.worst_margin, 0.0);
        assert!(!controls::error_bound(&o, 0.5, mu, &p, Tolerance::exact(1e-9)).passed);
        assert!(
            !controls::quadratic_growth(&o, 0.5, mu, 2.0 * mu, &p, Tolerance::exact(1e-9)).passed
        );
    }

    #[test]
    fn infinite_tolerance_is_vacuous() {
        let o = quad(1.0);
        let p = pts(&o, 20);
        let inf = Tolerance::infinite();
        assert!(check_strong_quasar(&o, 1.0, 1e6, &p, inf).unwrap().passed);
        assert!(check_weak_smoothness(&o, 1e-6, &p, inf).unwrap().passed);
        assert!(check_one_point_convexity(&o, 1e6, &p, inf).unwrap().passed);
    }

    #[test]
    fn contraction_on_quadratic() {
        let k = QuasarConstants::new(1.0)
            .unwrap()
            .with_mu(1.0)
            .unwrap()
            .with_gamma_ws(2.0)
            .unwrap();
        let o = quad(1.0).with_constants(k);
        let p = pts(&o, 10);
        let r = check_offline_contraction(&o, 0.1, &p, 20, Tolerance::exact(1e-12)).unwrap();
        assert!(r.passed);
        // (1 − α)² = 0.81 against γ = 1 − 0.1 − 0.18/8 = 0.8775.
        let gamma = gamma_contraction(0.1, o.constants().unwrap()).unwrap();
        assert!((gamma - 0.8775).abs() < 1e-15);
        let still =
            check_offline_contraction(&o, 0.1, &[o.minimizer().clone()], 5, Tolerance::exact(0.0))
                .unwrap();
        assert!(still.passed && still.worst_margin == 0.0);
        assert!(check_offline_contraction(&o, 1.5, &p, 5, Tolerance::exact(0.0)).is_err());
        assert!(
            !controls::offline_contraction(&o, 0.1, &p, 5, Tolerance::exact(1e-12))
                .unwrap()
                .passed
        );
    }
}
