//! Pass/fail records for numerical inequality checks.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

/// One point where `lhs ≤ rhs + tol` failed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub point_index: usize,
    pub point: Vec<f64>,
    pub lhs: f64,
    pub rhs: f64,
    /// `lhs − rhs`; a violation always has `margin > tol`.
    pub margin: f64,
    pub tol: f64,
}

/// Outcome of one check.
///
/// Every inequality is stored in the orientation `lhs ≤ rhs`, so a positive
/// margin beyond the tolerance is a failure.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckReport {
    pub check_name: String,
    pub points_tested: usize,
    /// Points the sampler rejected (for example, too close to a kink).
    pub points_excluded: usize,
    pub violations: Vec<Violation>,
    /// Largest tolerance applied at any point.
    pub tolerance_used: f64,
    pub passed: bool,
    /// Largest observed `lhs − rhs`, whether or not it was a violation.
    pub worst_margin: f64,
    pub notes: Vec<String>,
}

impl CheckReport {
    pub fn builder(name: impl Into<String>) -> ReportBuilder {
        ReportBuilder {
            name: name.into(),
            tested: 0,
            excluded: 0,
            violations: Vec::new(),
            tol_max: 0.0,
            worst: f64::NEG_INFINITY,
            notes: Vec::new(),
        }
    }

    /// Line-oriented text form: one tab-separated line per violation followed
    /// by a `#` summary line.
    pub fn to_lines(&self) -> String {
        let mut out = String::new();
        for v in &self.violations {
            let _ = writeln!(
                out,
                "{}\t{}\t{:?}\t{:?}\t{:?}",
                self.check_name, v.point_index, v.lhs, v.rhs, v.margin
            );
        }
        let _ = writeln!(out, "{}", self.summary_line());
        out
    }

    pub fn summary_line(&self) -> String {
        format!(
            "# {} {} points={} excluded={} violations={} tol={:?} worst_margin={:?}",
            self.check_name,
            if self.passed { "PASS" } else { "FAIL" },
            self.points_tested,
            self.points_excluded,
            self.violations.len(),
            self.tolerance_used,
            self.worst_margin
        )
    }
}

/// Accumulates points for a [`CheckReport`].
#[derive(Debug)]
pub struct ReportBuilder {
    name: String,
    tested: usize,
    excluded: usize,
    violations: Vec<Violation>,
    tol_max: f64,
    worst: f64,
    notes: Vec<String>,
}

impl ReportBuilder {
    /// Records the inequality `lhs ≤ rhs` at one point, allowing `tol` of slack.
    /// Returns whether the point passed.
    pub fn record(&mut self, index: usize, point: &[f64], lhs: f64, rhs: f64, tol: f64) -> bool {
        self.tested += 1;
        if tol > self.tol_max || tol.is_nan() {
            self.tol_max = tol;
        }
        let margin = lhs - rhs;
        if margin > self.worst || margin.is_nan() {
            self.worst = margin;
        }
        // NaN margins count as failures.
        let ok = margin <= tol;
        if !ok {
            self.violations.push(Violation {
                point_index: index,
                point: point.to_vec(),
                lhs,
                rhs,
                margin,
                tol,
            });
        }
        ok
    }

    pub fn exclude(&mut self) {
        self.excluded += 1;
    }

    pub fn note(&mut self, note: impl Into<String>) {
        self.notes.push(note.into());
    }

    /// Merges the points of another report into this one.
    pub fn absorb(&mut self, other: CheckReport) {
        self.tested += other.points_tested;
        self.excluded += other.points_excluded;
        self.tol_max = self.tol_max.max(other.tolerance_used);
        self.worst = self.worst.max(other.worst_margin);
        self.violations.extend(other.violations);
        self.notes.extend(other.notes);
    }

    pub fn finish(self) -> CheckReport {
        CheckReport {
            check_name: self.name,
            points_tested: self.tested,
            points_excluded: self.excluded,
            passed: self.violations.is_empty(),
            violations: self.violations,
            tolerance_used: self.tol_max,
            worst_margin: self.worst,
            notes: self.notes,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn passes_iff_no_violations() {
        let mut b = CheckReport::builder("demo");
        assert!(b.record(0, &[1.0], 1.0, 1.0, 0.0));
        assert!(b.record(1, &[2.0], 1.5, 1.0, 1.0));
        let r = b.finish();
        assert!(r.passed && r.violations.is_empty());
        assert_eq!(r.points_tested, 2);

        let mut b = CheckReport::builder("demo");
        assert!(!b.record(4, &[0.5, 0.5], 3.0, 1.0, 0.5));
        let r = b.finish();
        assert!(!r.passed);
        assert_eq!(r.violations[0].margin, 2.0);
        assert_eq!(r.violations[0].point_index, 4);
    }

    #[test]
    fn nan_fails_and_infinite_tol_passes() {
        let mut b = CheckReport::builder("nan");
        assert!(!b.record(0, &[], f64::NAN, 0.0, 1.0));
        assert!(!b.finish().passed);

        let mut b = CheckReport::builder("inf");
        assert!(b.record(0, &[], 1e300, -1e300, f64::INFINITY));
        assert!(b.finish().passed);
    }

    #[test]
    fn text_format() {
        let mut b = CheckReport::builder("q");
        b.record(7, &[0.0], 2.0, 1.0, 0.0);
        let text = b.finish().to_lines();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "q\t7\t2.0\t1.0\t1.0");
        assert!(lines.next().unwrap().starts_with("# q FAIL points=1"));
    }
}
