//! Power-family desingularizing functions and along-trace KL diagnostics.
//!
//! φ(t) = (c / (1 − θ)) · t^(1−θ), φ'(t) = c · t^(−θ), valid on [0, η).
//! The KL inequality φ'(F(x) − F*) · dist(0, ∂F(x)) ≥ 1 is checked on the
//! trace points after a burn-in index rather than on an open neighbourhood
//! of the limit point.

use serde::{Deserialize, Serialize};

use crate::certificate::CheckReport;
use crate::error::{Error, Result};
use crate::exec::{self, Mode};
use crate::linalg::Vector;
use crate::prox::ExtValue;
use crate::subdiff::{subdiff_distance, StructuredFn};

/// Margins below this count as violations.
pub const KL_VIOLATION_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Desingularizer {
    c: f64,
    theta: f64,
    eta: f64,
}

impl Desingularizer {
    pub fn new(c: f64, theta: f64, eta: f64) -> Result<Self> {
        if !(c.is_finite() && c > 0.0) {
            return Err(Error::param("c", format!("must be positive, got {c}")));
        }
        if !(theta.is_finite() && (0.0..1.0).contains(&theta)) {
            return Err(Error::param("theta", format!("must lie in [0, 1), got {theta}")));
        }
        if !(eta > 0.0) {
            return Err(Error::param("eta", format!("must be positive, got {eta}")));
        }
        Ok(Desingularizer { c, theta, eta })
    }

    pub fn c(&self) -> f64 {
        self.c
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn phi(&self, t: f64) -> f64 {
        if t == 0.0 {
            return 0.0;
        }
        self.c / (1.0 - self.theta) * t.powf(1.0 - self.theta)
    }

    pub fn dphi(&self, t: f64) -> f64 {
        self.c * t.powf(-self.theta)
    }

    /// Same exponent and window, constant multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        Self::new(self.c * factor, self.theta, self.eta)
    }
}

/// `grid_points` log-spaced values in (0, η), spanning twelve decades.
fn log_grid(eta: f64, grid_points: usize) -> Vec<f64> {
    let g = grid_points as f64;
    (0..grid_points)
        .map(|i| eta * 10f64.powf(-12.0 * (g - i as f64) / g))
        .collect()
}

/// Checks φ(0) = 0, φ' > 0 and midpoint concavity on a log grid.
pub fn verify_desingularizing(d: &Desingularizer, grid_points: usize) -> Result<bool> {
    verify_desingularizing_fn(|t| d.phi(t), |t| d.dphi(t), d.eta, grid_points)
}

/// [`verify_desingularizing`] for an arbitrary candidate (φ, φ').
pub fn verify_desingularizing_fn<P, D>(phi: P, dphi: D, eta: f64, grid_points: usize) -> Result<bool>
where
    P: Fn(f64) -> f64,
    D: Fn(f64) -> f64,
{
    if grid_points < 3 {
        return Err(Error::param("grid_points", "need at least 3"));
    }
    if !(eta > 0.0 && eta.is_finite()) {
        return Err(Error::param("eta", "must be positive and finite"));
    }
    if phi(0.0) != 0.0 {
        return Ok(false);
    }
    let grid = log_grid(eta, grid_points);
    if grid.iter().any(|&t| !(dphi(t) > 0.0) || !phi(t).is_finite()) {
        return Ok(false);
    }
    let concave = grid.windows(2).all(|w| {
        let (a, b) = (w[0], w[1]);
        let mid = phi(0.5 * (a + b));
        let avg = 0.5 * (phi(a) + phi(b));
        mid >= avg - 1e-12 * avg.abs().max(1.0)
    });
    Ok(concave)
}

/// A function whose value and distance-to-criticality can be evaluated on
/// trace points.
pub trait KlObjective: Sync {
    type Point: Sync;
    fn value(&self, p: &Self::Point) -> Result<f64>;
    /// dist(0, ∂F(p))
    fn stationarity(&self, p: &Self::Point) -> Result<ExtValue>;
}

impl KlObjective for StructuredFn {
    type Point = Vector;

    fn value(&self, p: &Vector) -> Result<f64> {
        StructuredFn::value(self, p)?
            .finite()
            .ok_or_else(|| Error::Infeasible("trace point outside the domain".into()))
    }

    fn stationarity(&self, p: &Vector) -> Result<ExtValue> {
        subdiff_distance(self, p)
    }
}

/// Which trace points are considered.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KlWindow {
    /// Points with index below this are ignored.
    pub burn_in: usize,
    /// Gaps at or below `gap_floor_rel · (1 + |f_limit|)` are treated as
    /// unresolved (roundoff) and skipped.
    pub gap_floor_rel: f64,
}

impl Default for KlWindow {
    fn default() -> Self {
        KlWindow {
            burn_in: 0,
            gap_floor_rel: 1e-12,
        }
    }
}

impl KlWindow {
    /// Window starting at the sample that leaves the last `fraction` of the
    /// resolvable samples; gaps of fast-converging traces hit roundoff long
    /// before the trace ends.
    pub fn resolvable_tail(samples: &[KlSample], fraction: f64, gap_floor_rel: f64) -> Result<Self> {
        if !(fraction > 0.0 && fraction <= 1.0) {
            return Err(Error::param("fraction", format!("must lie in (0, 1], got {fraction}")));
        }
        let skip = ((1.0 - fraction) * samples.len() as f64).floor() as usize;
        let burn_in = samples.get(skip).map_or(usize::MAX, |s| s.index);
        Ok(KlWindow { burn_in, gap_floor_rel })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KlSample {
    pub index: usize,
    pub gap: f64,
    pub dist: f64,
}

/// Gap and stationarity for every point in the window with a resolvable
/// positive gap.
pub fn kl_samples<O: KlObjective>(
    obj: &O,
    points: &[O::Point],
    f_limit: f64,
    window: KlWindow,
) -> Result<Vec<KlSample>> {
    let floor = window.gap_floor_rel * (1.0 + f_limit.abs());
    let start = window.burn_in.min(points.len());
    let evaluated = exec::map_range(Mode::default(), points.len() - start, |i| {
        let p = &points[start + i];
        let gap = obj.value(p)? - f_limit;
        let dist = obj.stationarity(p)?;
        Ok::<_, Error>((start + i, gap, dist))
    });
    let mut out = Vec::new();
    for r in evaluated {
        let (index, gap, dist) = r?;
        if gap <= floor {
            continue;
        }
        if let Some(dist) = dist.finite() {
            out.push(KlSample { index, gap, dist });
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KlReport {
    /// (index, φ'(gap)·dist − 1) for each point inside (0, η).
    pub margins: Vec<(usize, f64)>,
    pub violations: Vec<usize>,
    pub skipped: usize,
    pub vacuous: bool,
}

impl KlReport {
    pub fn violation_count(&self) -> usize {
        self.violations.len()
    }

    pub fn min_margin(&self) -> Option<f64> {
        self.margins.iter().map(|m| m.1).reduce(f64::min)
    }

    pub fn to_check(&self, d: &Desingularizer) -> CheckReport {
        let mut r = CheckReport::new("kl", "KL_property", KL_VIOLATION_TOL);
        r.metric("c", d.c());
        r.metric("theta", d.theta());
        r.metric("eta", d.eta());
        r.metric("checked", self.margins.len() as f64);
        r.metric("skipped", self.skipped as f64);
        for &(k, m) in &self.margins {
            // φ'(gap)·dist − 1 ≥ −tol  ⇔  1 ≤ (m + 1) + tol
            r.observe(k, 1.0, m + 1.0, KL_VIOLATION_TOL);
        }
        if self.vacuous {
            r = r.with_verdict(crate::certificate::Verdict::Vacuous, "no eligible points");
        }
        r
    }
}

/// KL inequality margins for precomputed samples.
pub fn kl_inequality_from_samples(samples: &[KlSample], skipped: usize, d: &Desingularizer) -> KlReport {
    let mut margins = Vec::new();
    let mut violations = Vec::new();
    let mut skipped = skipped;
    for s in samples {
        if !(s.gap > 0.0 && s.gap < d.eta) {
            skipped += 1;
            continue;
        }
        let margin = d.dphi(s.gap) * s.dist - 1.0;
        if margin < -KL_VIOLATION_TOL {
            violations.push(s.index);
        }
        margins.push((s.index, margin));
    }
    KlReport {
        vacuous: margins.is_empty(),
        margins,
        violations,
        skipped,
    }
}

/// φ'(F(x_k) − f_limit) · dist(0, ∂F(x_k)) ≥ 1 along the trace window.
pub fn kl_inequality_along_trace<O: KlObjective>(
    obj: &O,
    points: &[O::Point],
    f_limit: f64,
    d: &Desingularizer,
    window: KlWindow,
) -> Result<KlReport> {
    let samples = kl_samples(obj, points, f_limit, window)?;
    let skipped = points.len() - samples.len();
    Ok(kl_inequality_from_samples(&samples, skipped, d))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KlFit {
    /// Slope of log dist against log gap.
    pub theta_hat: f64,
    /// exp(−intercept): the constant putting the least-squares line at
    /// margin zero.
    pub c_hat: f64,
    pub r2: f64,
    pub points: usize,
    /// Largest gap among the fitted points.
    pub max_gap: f64,
    /// Smallest c with φ'(gap)·dist ≥ 1 on every fitted point at θ̂.
    pub envelope_c: f64,
}

impl KlFit {
    /// Desingularizer with θ̂, constant `safety · envelope_c` and a window
    /// covering every fitted gap.
    pub fn desingularizer(&self, safety: f64) -> Result<Desingularizer> {
        Desingularizer::new(self.envelope_c * safety, self.theta_hat, 2.0 * self.max_gap)
    }
}

/// Smallest c such that c·gap^(−θ)·dist ≥ 1 on all samples.
pub fn envelope_constant(samples: &[(f64, f64)], theta: f64) -> f64 {
    samples
        .iter()
        .map(|&(gap, dist)| gap.powf(theta) / dist)
        .fold(0.0, f64::max)
}

/// Least-squares fit of log dist = b + θ log gap over (gap, dist) pairs.
pub fn fit_power_law(samples: &[(f64, f64)]) -> Result<KlFit> {
    let usable: Vec<(f64, f64)> = samples
        .iter()
        .copied()
        .filter(|&(g, d)| g > 0.0 && d > 0.0 && g.is_finite() && d.is_finite())
        .collect();
    if usable.len() < 10 {
        return Err(Error::InsufficientData(format!(
            "need at least 10 points with positive gap and distance, have {}",
            usable.len()
        )));
    }
    let n = usable.len() as f64;
    let xs: Vec<f64> = usable.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = usable.iter().map(|p| p.1.ln()).collect();
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my) * (y - my)).sum();
    if sxx <= 1e-12 * n {
        return Err(Error::InsufficientData("insufficient decay: gaps do not vary".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let sse: f64 = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| {
            let e = y - (intercept + slope * x);
            e * e
        })
        .sum();
    let r2 = if syy > 0.0 { 1.0 - sse / syy } else { 1.0 };
    Ok(KlFit {
        theta_hat: slope,
        c_hat: (-intercept).exp(),
        r2,
        points: usable.len(),
        max_gap: usable.iter().map(|p| p.0).fold(0.0, f64::max),
        envelope_c: envelope_constant(&usable, slope),
    })
}

/// Fits the KL exponent along a trace.
pub fn fit_kl_exponent<O: KlObjective>(
    obj: &O,
    points: &[O::Point],
    f_limit: f64,
    window: KlWindow,
) -> Result<KlFit> {
    let samples = kl_samples(obj, points, f_limit, window)?;
    let pairs: Vec<(f64, f64)> = samples.iter().map(|s| (s.gap, s.dist)).collect();
    fit_power_law(&pairs)
}
