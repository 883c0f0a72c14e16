//! Certificate suites for stored or fresh traces.

use std::fmt;
use std::str::FromStr;

use blockopt_core::admm::{
    check_convergence_to_kkt, check_dual_update, check_phi_descent, check_phi_monotone, check_summability,
    check_uv_membership, compute_aux, AdmmTrace, AuxSequences,
};
use blockopt_core::bcd::{
    check_finite_length, check_limit_criticality, check_step_vanishing, check_subdiff_bound,
    check_sufficient_descent, check_witness_membership, BcdTrace, WITNESS_MEMBERSHIP_TOL,
};
use blockopt_core::kl::{envelope_constant, fit_kl_exponent, kl_inequality_along_trace, kl_samples, Desingularizer, KlWindow};
use blockopt_core::{CheckReport, Verdict};

use crate::error::{CliError, CliResult};
use crate::spec::{LoadedAdmm, LoadedBcd};

pub const CRITICALITY_TOL: f64 = 1e-6;
pub const REFERENCE_GAP_TOL: f64 = 1e-8;
pub const KKT_TOL: f64 = 1e-5;
pub const REFERENCE_DISTANCE_TOL: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Check {
    Descent,
    Steps,
    Subdiff,
    Length,
    Critical,
    Phi,
    Uv,
    Kkt,
    Kl,
}

impl Check {
    pub const ALL: [Check; 9] = [
        Check::Descent,
        Check::Steps,
        Check::Subdiff,
        Check::Length,
        Check::Critical,
        Check::Phi,
        Check::Uv,
        Check::Kkt,
        Check::Kl,
    ];
    pub const BCD_DEFAULT: [Check; 5] = [Check::Descent, Check::Steps, Check::Subdiff, Check::Length, Check::Critical];
    pub const ADMM_DEFAULT: [Check; 3] = [Check::Phi, Check::Uv, Check::Kkt];

    pub fn name(self) -> &'static str {
        match self {
            Check::Descent => "descent",
            Check::Steps => "steps",
            Check::Subdiff => "subdiff",
            Check::Length => "length",
            Check::Critical => "critical",
            Check::Phi => "phi",
            Check::Uv => "uv",
            Check::Kkt => "kkt",
            Check::Kl => "kl",
        }
    }

    fn for_bcd(self) -> bool {
        !matches!(self, Check::Phi | Check::Uv | Check::Kkt)
    }

    fn for_admm(self) -> bool {
        matches!(self, Check::Phi | Check::Uv | Check::Kkt)
    }
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Check {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Check::ALL.into_iter().find(|c| c.name() == s).ok_or_else(|| {
            let known: Vec<_> = Check::ALL.iter().map(|c| c.name()).collect();
            format!("unknown check '{s}' (expected one of {})", known.join(", "))
        })
    }
}

/// Parses a comma list; order and duplicates are normalised.
pub fn parse_checks(list: &str) -> CliResult<Vec<Check>> {
    let mut out = list
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<Check>().map_err(|e| CliError::input("--checks", e)))
        .collect::<CliResult<Vec<_>>>()?;
    if out.is_empty() {
        return Err(CliError::input("--checks", "empty list"));
    }
    out.sort();
    out.dedup();
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum KlConstant {
    /// Smallest constant covering the window, times `KlOptions::safety`.
    Auto,
    Value(f64),
}

impl FromStr for KlConstant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        if s == "auto" {
            return Ok(KlConstant::Auto);
        }
        match s.parse::<f64>() {
            Ok(v) if v > 0.0 && v.is_finite() => Ok(KlConstant::Value(v)),
            _ => Err(format!("expected 'auto' or a positive number, got '{s}'")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KlOptions {
    /// Fixed exponent; the fitted θ̂ when absent.
    pub theta: Option<f64>,
    pub c: KlConstant,
    pub eta: Option<f64>,
    /// Fraction of the resolvable samples (latest first) that is checked.
    pub tail: f64,
    pub safety: f64,
}

impl Default for KlOptions {
    fn default() -> Self {
        KlOptions {
            theta: None,
            c: KlConstant::Auto,
            eta: None,
            tail: 0.5,
            safety: 2.0,
        }
    }
}

fn wrong_algorithm(check: Check, alg: &str) -> CliError {
    CliError::input("--checks", format!("{check} does not apply to {alg} traces"))
}

pub fn certify_bcd(p: &LoadedBcd, trace: &BcdTrace, checks: &[Check], kl: &KlOptions) -> CliResult<Vec<CheckReport>> {
    let core = |e| CliError::core("certificate", e);
    let (prob, gamma, l) = (&p.problem, trace.gamma, trace.lipschitz);
    let mut out = Vec::new();
    for &c in checks {
        if !c.for_bcd() {
            return Err(wrong_algorithm(c, "bcd"));
        }
        match c {
            Check::Descent => out.push(check_sufficient_descent(trace, gamma, l).map_err(core)?),
            Check::Steps => out.push(check_step_vanishing(trace)),
            Check::Subdiff => {
                out.push(check_witness_membership(prob, trace, gamma, WITNESS_MEMBERSHIP_TOL).map_err(core)?);
                out.push(check_subdiff_bound(prob, trace, gamma, l).map_err(core)?);
            }
            Check::Length => out.push(check_finite_length(trace)),
            Check::Critical => {
                let crit = check_limit_criticality(prob, trace, CRITICALITY_TOL).map_err(core)?;
                let converged = crit.verdict != Verdict::Inconclusive;
                out.push(crit);
                if let Some(star) = p.psi_star {
                    out.push(reference_gap(trace.last().psi, star, converged));
                }
            }
            Check::Kl => out.push(kl_check(p, trace, kl)?),
            _ => unreachable!("filtered above"),
        }
    }
    Ok(out)
}

fn reference_gap(psi: f64, star: f64, converged: bool) -> CheckReport {
    let tol = REFERENCE_GAP_TOL * (1.0 + star.abs());
    let mut r = CheckReport::new("reference-gap", "Convergence_to_critpt", tol);
    r.metric("psi", psi);
    r.metric("psi_star", star);
    if !converged {
        return r.with_verdict(Verdict::Inconclusive, "trace not converged");
    }
    r.observe(0, (psi - star).abs(), tol, 0.0);
    r
}

fn kl_check(p: &LoadedBcd, trace: &BcdTrace, opts: &KlOptions) -> CliResult<CheckReport> {
    let core = |e| CliError::core("kl", e);
    let f_limit = p.psi_star.unwrap_or(trace.last().psi);
    let points = trace.points();
    let defaults = KlWindow::default();
    let all = kl_samples(&p.problem, &points, f_limit, defaults).map_err(core)?;
    let window = KlWindow::resolvable_tail(&all, opts.tail, defaults.gap_floor_rel)
        .map_err(|e| CliError::core("--kl-tail", e))?;
    let tail: Vec<(f64, f64)> = all
        .iter()
        .filter(|s| s.index >= window.burn_in)
        .map(|s| (s.gap, s.dist))
        .collect();
    let fit = fit_kl_exponent(&p.problem, &points, f_limit, window);
    let theta = match (opts.theta, &fit) {
        (Some(t), _) => t,
        (None, Ok(f)) => f.theta_hat.clamp(0.0, 1.0 - 1e-9),
        (None, Err(e)) => {
            return Ok(CheckReport::new("kl", "KL_property", 0.0)
                .with_verdict(Verdict::Inconclusive, format!("exponent fit failed: {e}")))
        }
    };
    let c = match opts.c {
        KlConstant::Value(v) => v,
        KlConstant::Auto if tail.is_empty() => {
            return Ok(CheckReport::new("kl", "KL_property", 0.0).with_verdict(Verdict::Inconclusive, "no resolvable gaps"))
        }
        KlConstant::Auto => envelope_constant(&tail, theta) * opts.safety,
    };
    let max_gap = tail.iter().map(|s| s.0).fold(0.0, f64::max);
    let eta = opts.eta.unwrap_or(if max_gap > 0.0 { 2.0 * max_gap } else { 1.0 });
    let d = Desingularizer::new(c, theta, eta).map_err(|e| CliError::core("kl", e))?;
    let rep = kl_inequality_along_trace(&p.problem, &points, f_limit, &d, window).map_err(core)?;
    let mut r = rep.to_check(&d);
    r.metric("f_limit", f_limit);
    r.metric("burn_in", window.burn_in.min(trace.len()) as f64);
    if let Ok(f) = fit {
        r.metric("theta_hat", f.theta_hat);
        r.metric("fit_r2", f.r2);
    }
    Ok(r)
}

pub fn certify_admm(p: &LoadedAdmm, trace: &AdmmTrace, checks: &[Check]) -> CliResult<Vec<CheckReport>> {
    let core = |e| CliError::core("certificate", e);
    let prob = &p.problem;
    let auxes = p
        .references
        .iter()
        .map(|r| compute_aux(prob, trace, r).map_err(core))
        .collect::<CliResult<Vec<AuxSequences>>>()?;
    let tag = |mut r: CheckReport, i: usize| {
        if auxes.len() > 1 {
            r.name = format!("{}#{i}", r.name);
        }
        r
    };
    let no_ref = |name: &str| {
        CheckReport::new(name, "Φ_isdescending", 0.0).with_verdict(Verdict::Inconclusive, "no KKT reference available")
    };
    let mut out = Vec::new();
    for &c in checks {
        if !c.for_admm() {
            return Err(wrong_algorithm(c, "admm"));
        }
        match c {
            Check::Phi => {
                if auxes.is_empty() {
                    out.extend(["phi-descent", "phi-monotone", "summability"].map(no_ref));
                }
                for (i, aux) in auxes.iter().enumerate() {
                    out.push(tag(check_phi_descent(aux, trace.rho, trace.tau).map_err(core)?, i));
                    out.push(tag(check_phi_monotone(aux), i));
                    out.push(tag(check_summability(aux), i));
                }
            }
            Check::Uv => match auxes.first() {
                Some(aux) => {
                    let tol = prob.uv_tolerance(p.config.inner_tol());
                    out.push(check_uv_membership(prob, aux, trace, tol).map_err(core)?);
                }
                None => out.push(no_ref("uv-membership")),
            },
            Check::Kkt => {
                out.push(check_dual_update(prob, trace).map_err(core)?);
                let conv = check_convergence_to_kkt(prob, trace, KKT_TOL).map_err(core)?;
                let usable = conv.verdict != Verdict::Inconclusive;
                out.push(conv);
                if !p.references.is_empty() {
                    out.push(reference_distance(p, trace, usable));
                }
            }
            _ => unreachable!("filtered above"),
        }
    }
    Ok(out)
}

/// Primal distance of the final iterate to the nearest reference.
fn reference_distance(p: &LoadedAdmm, trace: &AdmmTrace, converged: bool) -> CheckReport {
    let last = trace.last();
    let mut r = CheckReport::new("reference-distance", "ADMM_convergence", REFERENCE_DISTANCE_TOL);
    let primal = |x1: &[f64], x2: &[f64]| {
        let d1: f64 = x1.iter().zip(last.x1.iter()).map(|(a, b)| (a - b) * (a - b)).sum();
        let d2: f64 = x2.iter().zip(last.x2.iter()).map(|(a, b)| (a - b) * (a - b)).sum();
        (d1 + d2).sqrt()
    };
    let best = p
        .references
        .iter()
        .map(|k| primal(k.x1.as_slice(), k.x2.as_slice()))
        .fold(f64::INFINITY, f64::min);
    let dual = p
        .references
        .iter()
        .map(|k| k.y.dist(&last.y).unwrap_or(f64::INFINITY))
        .fold(f64::INFINITY, f64::min);
    r.metric("primal_distance", best);
    r.metric("dual_distance", dual);
    if !converged {
        return r.with_verdict(Verdict::Inconclusive, "convergence check inconclusive");
    }
    r.observe(last.k, best, REFERENCE_DISTANCE_TOL, 0.0);
    r
}
