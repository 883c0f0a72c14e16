//! Shared report type for trace certificates.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::exec::{self, Mode};

/// Violations kept in full; the total count is always reported.
pub const MAX_RECORDED_VIOLATIONS: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Pass,
    Fail,
    /// Nothing to check (e.g. a one-record trace).
    Vacuous,
    /// Preconditions for a meaningful check are not met.
    Inconclusive,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Verdict::Pass => "pass",
            Verdict::Fail => "fail",
            Verdict::Vacuous => "vacuous",
            Verdict::Inconclusive => "inconclusive",
        };
        f.write_str(s)
    }
}

/// One failed inequality `lhs ≤ rhs + slack` at iteration `index`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub index: usize,
    pub lhs: f64,
    pub rhs: f64,
    pub slack: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckReport {
    pub name: String,
    /// Theorem or lemma this check certifies.
    pub theorem: String,
    pub verdict: Verdict,
    /// Smallest `rhs + slack − lhs` seen (negative iff violated).
    pub min_margin: Option<f64>,
    pub violation_count: usize,
    pub violations: Vec<Violation>,
    pub tolerance: f64,
    pub metrics: BTreeMap<String, f64>,
    pub note: Option<String>,
}

impl CheckReport {
    pub fn new(name: &str, theorem: &str, tolerance: f64) -> Self {
        CheckReport {
            name: name.to_string(),
            theorem: theorem.to_string(),
            verdict: Verdict::Pass,
            min_margin: None,
            violation_count: 0,
            violations: Vec::new(),
            tolerance,
            metrics: BTreeMap::new(),
            note: None,
        }
    }

    /// Records `lhs ≤ rhs + slack` at `index`.
    pub fn observe(&mut self, index: usize, lhs: f64, rhs: f64, slack: f64) {
        let margin = rhs + slack - lhs;
        self.min_margin = Some(self.min_margin.map_or(margin, |m| m.min(margin)));
        if !(margin >= 0.0) {
            self.record_violation(Violation {
                index,
                lhs,
                rhs,
                slack,
            });
        }
    }

    pub fn record_violation(&mut self, v: Violation) {
        self.violation_count += 1;
        if self.violations.len() < MAX_RECORDED_VIOLATIONS {
            self.violations.push(v);
        }
        self.verdict = Verdict::Fail;
    }

    pub fn metric(&mut self, key: &str, value: f64) {
        self.metrics.insert(key.to_string(), value);
    }

    pub fn with_verdict(mut self, verdict: Verdict, note: impl Into<String>) -> Self {
        self.verdict = verdict;
        self.note = Some(note.into());
        self
    }

    pub fn passed(&self) -> bool {
        self.verdict == Verdict::Pass
    }

    /// Fail or pass only; vacuous and inconclusive checks are not counted.
    pub fn is_failure(&self) -> bool {
        self.verdict == Verdict::Fail
    }

    /// One line per recorded violation.
    pub fn failure_messages(&self) -> Vec<String> {
        self.violations
            .iter()
            .map(|v| {
                format!(
                    "[{}] {} violated at k={}: lhs={:.17e} rhs={:.17e} slack={:.3e}",
                    self.theorem, self.name, v.index, v.lhs, v.rhs, v.slack
                )
            })
            .collect()
    }
}

impl fmt::Display for CheckReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:<22} {:<13} [{}]", self.name, self.verdict.to_string(), self.theorem)?;
        if let Some(m) = self.min_margin {
            write!(f, " min_margin={m:.3e}")?;
        }
        if self.violation_count > 0 {
            write!(f, " violations={}", self.violation_count)?;
        }
        if let Some(n) = &self.note {
            write!(f, " ({n})")?;
        }
        Ok(())
    }
}

/// Largest pairwise distance among `points` (each a flat coordinate slice).
pub fn max_pairwise_distance(mode: Mode, points: &[Vec<f64>]) -> f64 {
    exec::map_range(mode, points.len(), |i| {
        let mut best = 0.0_f64;
        for j in (i + 1)..points.len() {
            best = best.max(crate::linalg::ops::dist(&points[i], &points[j]));
        }
        best
    })
    .into_iter()
    .fold(0.0, f64::max)
}
