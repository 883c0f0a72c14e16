use std::collections::BTreeMap;
use std::path::Path;

use blockopt_core::bcd::StopReason;
use blockopt_core::{CheckReport, Verdict};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult, Status};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Summary {
    pub pass: usize,
    pub fail: usize,
    pub vacuous: usize,
    pub inconclusive: usize,
}

impl Summary {
    pub fn of(checks: &[CheckReport]) -> Self {
        let mut s = Summary::default();
        for c in checks {
            match c.verdict {
                Verdict::Pass => s.pass += 1,
                Verdict::Fail => s.fail += 1,
                Verdict::Vacuous => s.vacuous += 1,
                Verdict::Inconclusive => s.inconclusive += 1,
            }
        }
        s
    }
}

/// Certificate report; contains nothing run-dependent (no timings), so a
/// re-verification of a stored trace reproduces it exactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub schema_version: u32,
    pub algorithm: String,
    pub problem: String,
    pub parameters: BTreeMap<String, f64>,
    pub iterations: usize,
    pub stop: StopReason,
    pub checks: Vec<CheckReport>,
    pub summary: Summary,
}

impl Report {
    pub fn new(
        algorithm: &str,
        problem: &str,
        parameters: BTreeMap<String, f64>,
        iterations: usize,
        stop: StopReason,
        checks: Vec<CheckReport>,
    ) -> Self {
        Report {
            schema_version: SCHEMA_VERSION,
            algorithm: algorithm.to_string(),
            problem: problem.to_string(),
            parameters,
            iterations,
            stop,
            summary: Summary::of(&checks),
            checks,
        }
    }

    pub fn status(&self) -> Status {
        if self.summary.fail > 0 {
            Status::CertificateFailure
        } else {
            Status::Pass
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("reports serialize") + "\n"
    }

    pub fn write(&self, path: &Path) -> CliResult<()> {
        std::fs::write(path, self.to_json()).map_err(|e| CliError::io(path.display().to_string(), e))
    }

    /// One line per check, then every recorded violation.
    pub fn render(&self) -> String {
        let mut out = String::new();
        for c in &self.checks {
            out.push_str(&format!("{:<12} {:<22} [{}]", c.verdict.to_string(), c.name, c.theorem));
            if let Some(m) = c.min_margin {
                out.push_str(&format!(" min_margin={m:.3e}"));
            }
            if c.violation_count > 0 {
                out.push_str(&format!(" violations={}", c.violation_count));
            }
            if let Some(n) = &c.note {
                out.push_str(&format!(" ({n})"));
            }
            out.push('\n');
            for msg in c.failure_messages() {
                out.push_str("    ");
                out.push_str(&msg);
                out.push('\n');
            }
        }
        out.push_str(&format!(
            "summary: {} pass, {} fail, {} vacuous, {} inconclusive\n",
            self.summary.pass, self.summary.fail, self.summary.vacuous, self.summary.inconclusive
        ));
        out
    }
}
