//! Report types for the comparison checks.

use std::io::Write;

use serde::Serialize;

use super::{DirectionRun, RadialBounds};
use crate::error::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Verdict {
    Pass,
    ConditionalPass,
    Warning,
    Fail,
}

impl Verdict {
    pub fn is_ok(self) -> bool {
        matches!(self, Verdict::Pass | Verdict::ConditionalPass)
    }

    /// The worse of two verdicts.
    pub fn and(self, other: Verdict) -> Verdict {
        self.max(other)
    }
}

impl std::fmt::Display for Verdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Verdict::Pass => "PASS",
            Verdict::ConditionalPass => "CONDITIONAL_PASS",
            Verdict::Warning => "WARNING",
            Verdict::Fail => "FAIL",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundSource {
    Scanned,
    Override,
}

/// A hypothesis constant and where it came from.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundReport {
    pub name: String,
    pub value: f64,
    pub source: BoundSource,
    /// Value found by the radial scan.
    pub scanned: f64,
    pub scan_samples: usize,
    pub scan_directions: usize,
}

impl BoundReport {
    pub(crate) fn resolve(name: &str, scanned: f64, user: Option<f64>, scan: &RadialBounds) -> Self {
        Self {
            name: name.into(),
            value: user.unwrap_or(scanned),
            source: if user.is_some() { BoundSource::Override } else { BoundSource::Scanned },
            scanned,
            scan_samples: scan.samples,
            scan_directions: scan.directions,
        }
    }

    /// True when an override claims more than the scan certified. `lower`:
    /// the hypothesis is a lower bound (`Ric ≥ c`), so a larger override is
    /// the stronger claim.
    pub fn overstated(&self, lower: bool) -> bool {
        self.source == BoundSource::Override
            && if lower {
                self.value > self.scanned + 1e-12 * self.scanned.abs().max(1.0)
            } else {
                self.value < self.scanned - 1e-12 * self.scanned.abs().max(1.0)
            }
    }
}

/// One `(r, R)` pair (or a single radius, with `big_r` absent).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairResult {
    pub r: f64,
    pub big_r: Option<f64>,
    pub lhs: f64,
    pub rhs: f64,
    /// Positive when the inequality holds.
    pub margin: f64,
    pub tolerance: f64,
    pub error_estimate: f64,
    pub pass: bool,
}

/// A pointwise check: `value ≤ tolerance` passes.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckResult {
    pub name: String,
    pub value: f64,
    pub tolerance: f64,
    pub pass: bool,
}

impl CheckResult {
    pub fn at_most(name: &str, value: f64, tolerance: f64) -> Self {
        Self {
            name: name.into(),
            value,
            tolerance,
            pass: value <= tolerance,
        }
    }

    /// A negative control: passes when the residual is detected as positive.
    pub fn detects(name: &str, value: f64, tolerance: f64) -> Self {
        Self {
            name: name.into(),
            value,
            tolerance,
            pass: value > tolerance,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Diagnostics {
    pub directions: usize,
    pub check_points: usize,
    pub time_nodes: usize,
    pub ode_tol: f64,
    pub sigma: f64,
    pub sigma_error: f64,
    pub cut_min: f64,
    pub gram_drift: f64,
    pub lagrangian_drift: f64,
    pub gram_tolerance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonReport {
    pub theorem: String,
    pub bounds: Vec<BoundReport>,
    pub parameters: serde_json::Value,
    pub pairs: Vec<PairResult>,
    pub checks: Vec<CheckResult>,
    pub diagnostics: Diagnostics,
    pub notes: Vec<String>,
    pub verdict: Verdict,
}

/// Drift tolerance above which a report degrades to a warning.
pub(crate) const DRIFT_TOL: f64 = 1e-6;

impl Diagnostics {
    pub(crate) fn collect(runs: &[DirectionRun], check_points: usize, time_nodes: usize, ode_tol: f64, sigma: f64, sigma_error: f64) -> Self {
        Self {
            directions: runs.len(),
            check_points,
            time_nodes,
            ode_tol,
            sigma,
            sigma_error,
            cut_min: runs.iter().map(|r| r.node.cut).fold(f64::INFINITY, f64::min),
            gram_drift: runs.iter().map(|r| r.path.gram_drift).fold(0.0, f64::max),
            lagrangian_drift: runs.iter().map(|r| r.path.l_drift).fold(0.0, f64::max),
            gram_tolerance: DRIFT_TOL,
        }
    }

    pub(crate) fn healthy(&self) -> bool {
        self.gram_drift <= DRIFT_TOL && self.lagrangian_drift <= DRIFT_TOL
    }
}

impl ComparisonReport {
    /// Derive the verdict from margins, checks, diagnostics and overrides.
    pub(crate) fn finish(mut self, overstated: bool) -> Self {
        let failed = self.pairs.iter().any(|p| !p.pass) || self.checks.iter().any(|c| !c.pass);
        self.verdict = if failed {
            Verdict::Fail
        } else if !self.diagnostics.healthy() {
            Verdict::Warning
        } else if overstated {
            Verdict::ConditionalPass
        } else {
            Verdict::Pass
        };
        if overstated {
            self.notes
                .push("a user override is stronger than the scanned bound; hypotheses are not certified".into());
        }
        self
    }
}

/// Column names of the per-direction diagnostic CSV.
pub const CSV_HEADER: [&str; 12] = [
    "direction", "params", "t", "det_a", "lambda", "lambda_psi", "h", "f", "riccati", "hric", "concavity", "flags",
];

/// Per-sample diagnostic row.
#[derive(Debug, Clone, PartialEq)]
pub struct CsvRow {
    pub direction: usize,
    pub params: Vec<f64>,
    pub t: f64,
    pub det_a: f64,
    pub lambda: f64,
    pub lambda_psi: f64,
    pub h: f64,
    pub f: f64,
    pub riccati: f64,
    pub hric: f64,
    pub concavity: f64,
    pub flags: String,
}

pub fn write_csv<W: Write>(out: W, rows: &[CsvRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let io = |e: csv::Error| crate::error::Error::InvalidArgument(format!("csv output: {e}"));
    w.write_record(CSV_HEADER).map_err(io)?;
    for r in rows {
        let params = r.params.iter().map(|p| format!("{p:e}")).collect::<Vec<_>>().join(";");
        w.write_record([
            r.direction.to_string(),
            params,
            format!("{:e}", r.t),
            format!("{:e}", r.det_a),
            format!("{:e}", r.lambda),
            format!("{:e}", r.lambda_psi),
            format!("{:e}", r.h),
            format!("{:e}", r.f),
            format!("{:e}", r.riccati),
            format!("{:e}", r.hric),
            format!("{:e}", r.concavity),
            r.flags.clone(),
        ])
        .map_err(io)?;
    }
    w.flush().map_err(|e| crate::error::Error::InvalidArgument(format!("csv output: {e}")))?;
    Ok(())
}
