//! Proximal alternating linearized block coordinate descent for
//! ψ(x, y) = f(x) + g(y) + H(x, y), with fixed steps c = d = 1/(γl):
//!
//! ```text
//! x⁺ = prox_{c f}(x − c ∇ₓH(x, y))
//! y⁺ = prox_{d g}(y − d ∇ᵧH(x⁺, y))
//! ```
//!
//! plus certificate checks evaluated on the recorded trace.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::certificate::{max_pairwise_distance, CheckReport, Verdict, Violation};
use crate::error::{check_dim, Error, Result};
use crate::exec::{self, Mode};
use crate::kl::KlObjective;
use crate::linalg::{ops, BlockPair, Vector};
use crate::prox::{prox, Atom, ExtValue};
use crate::rng::Rng;
use crate::smooth::{CouplingInX, CouplingInY, SmoothCoupling};
use crate::subdiff::{atom_subdiff, block_subdiff_distance, critical_point_check, StructuredFn};

/// Runs abort once ‖z_k‖ exceeds this multiple of (1 + ‖z⁰‖).
pub const DIVERGENCE_FACTOR: f64 = 1e6;
/// Relative tolerance of the Cauchy-tail test.
pub const CAUCHY_TOL: f64 = 1e-6;
/// Absolute tolerance for witness membership.
pub const WITNESS_MEMBERSHIP_TOL: f64 = 1e-8;

#[derive(Debug, Clone)]
pub struct BcdProblem {
    f: Atom,
    g: Atom,
    h: Arc<dyn SmoothCoupling>,
}

impl BcdProblem {
    /// All supported atoms are bounded below, so only parameters and
    /// dimensions need checking.
    pub fn new(f: Atom, g: Atom, h: Arc<dyn SmoothCoupling>) -> Result<Self> {
        let (n, m) = h.dims();
        f.validate(n)?;
        g.validate(m)?;
        let l = h.lipschitz();
        if !(l.is_finite() && l > 0.0) {
            return Err(Error::param("lipschitz", format!("must be positive and finite, got {l}")));
        }
        Ok(BcdProblem { f, g, h })
    }

    pub fn f(&self) -> &Atom {
        &self.f
    }

    pub fn g(&self) -> &Atom {
        &self.g
    }

    pub fn coupling(&self) -> &Arc<dyn SmoothCoupling> {
        &self.h
    }

    pub fn dims(&self) -> (usize, usize) {
        self.h.dims()
    }

    pub fn lipschitz(&self) -> f64 {
        self.h.lipschitz()
    }

    fn check_point(&self, z: &BlockPair) -> Result<()> {
        let (n, m) = self.dims();
        check_dim("x block", n, z.x.dim())?;
        check_dim("y block", m, z.y.dim())
    }

    pub fn psi(&self, z: &BlockPair) -> Result<ExtValue> {
        self.check_point(z)?;
        Ok(self.psi_slices(z.x.as_slice(), z.y.as_slice()))
    }

    fn psi_slices(&self, x: &[f64], y: &[f64]) -> ExtValue {
        self.f
            .value_slice(x)
            .plus(self.g.value_slice(y).as_f64())
            .plus(self.h.value(x, y))
    }

    /// x ↦ f(x) + H(x, y)
    pub fn partial_x(&self, y: &[f64]) -> StructuredFn {
        StructuredFn::new(
            self.f.clone(),
            Some(Arc::new(CouplingInX {
                coupling: self.h.clone(),
                y: y.to_vec(),
            })),
        )
    }

    /// y ↦ g(y) + H(x, y)
    pub fn partial_y(&self, x: &[f64]) -> StructuredFn {
        StructuredFn::new(
            self.g.clone(),
            Some(Arc::new(CouplingInY {
                coupling: self.h.clone(),
                x: x.to_vec(),
            })),
        )
    }

    /// dist(0, ∂ψ(z)) in the product norm.
    pub fn stationarity(&self, z: &BlockPair) -> Result<ExtValue> {
        let (dx, dy) = block_subdiff_distance(&self.f, &self.g, self.h.as_ref(), z)?;
        Ok(match (dx, dy) {
            (ExtValue::Finite(a), ExtValue::Finite(b)) => ExtValue::Finite(a.hypot(b)),
            _ => ExtValue::Infinite,
        })
    }

    /// Deterministic point in the unit ball around 0, projected onto the
    /// domains of indicator atoms.
    pub fn default_initial_point(&self, seed: u64) -> Result<BlockPair> {
        let (n, m) = self.dims();
        let mut rng = Rng::new(seed);
        let dir = rng.unit_vector(n + m);
        let r = rng.uniform(0.0, 1.0).powf(1.0 / (n + m) as f64);
        let z = BlockPair::split(&ops::scale(r, &dir), n)?;
        Ok(BlockPair::new(
            self.f.project_feasible(&z.x)?,
            self.g.project_feasible(&z.y)?,
        ))
    }
}

impl KlObjective for BcdProblem {
    type Point = BlockPair;

    fn value(&self, p: &BlockPair) -> Result<f64> {
        self.psi(p)?
            .finite()
            .ok_or_else(|| Error::Infeasible("trace point outside dom ψ".into()))
    }

    fn stationarity(&self, p: &BlockPair) -> Result<ExtValue> {
        BcdProblem::stationarity(self, p)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BcdConfig {
    gamma: f64,
    max_iters: usize,
    stop_tol: Option<f64>,
    seed: u64,
    initial: Option<BlockPair>,
}

impl BcdConfig {
    pub fn new(gamma: f64, max_iters: usize) -> Result<Self> {
        let cfg = BcdConfig {
            gamma,
            max_iters,
            stop_tol: None,
            seed: 0,
            initial: None,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gamma.is_finite() && self.gamma > 1.0) {
            return Err(Error::param("gamma", format!("must be > 1, got {}", self.gamma)));
        }
        if self.max_iters == 0 {
            return Err(Error::param("max_iters", "must be positive"));
        }
        if let Some(t) = self.stop_tol {
            if !(t.is_finite() && t >= 0.0) {
                return Err(Error::param("stop_tol", format!("must be finite and >= 0, got {t}")));
            }
        }
        Ok(())
    }

    /// Stop once (2γ+2)l‖z_k − z_{k−1}‖ ≤ `tol`; `None` runs all iterations.
    pub fn with_stop_tol(mut self, tol: Option<f64>) -> Result<Self> {
        self.stop_tol = tol;
        self.validate()?;
        Ok(self)
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_initial(mut self, z0: BlockPair) -> Self {
        self.initial = Some(z0);
        self
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn max_iters(&self) -> usize {
        self.max_iters
    }

    pub fn stop_tol(&self) -> Option<f64> {
        self.stop_tol
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn initial(&self) -> Option<&BlockPair> {
        self.initial.as_ref()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StopReason {
    Tolerance,
    MaxIters,
}

/// Record `k` holds z_k and the step that produced it (zero for k = 0).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BcdRecord {
    pub k: usize,
    pub z: BlockPair,
    pub psi: f64,
    /// ‖z_k − z_{k−1}‖
    pub step: f64,
    pub step_x: f64,
    pub step_y: f64,
    /// dist(0, ∂ψ(z_k)) when finite.
    pub dist: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BcdTrace {
    pub gamma: f64,
    pub lipschitz: f64,
    pub stop: StopReason,
    pub records: Vec<BcdRecord>,
}

impl BcdTrace {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn iterations(&self) -> usize {
        self.records.len().saturating_sub(1)
    }

    pub fn points(&self) -> Vec<BlockPair> {
        self.records.iter().map(|r| r.z.clone()).collect()
    }

    pub fn last(&self) -> &BcdRecord {
        self.records.last().expect("trace holds z⁰")
    }

    /// Rebuilds every record from the points alone; ψ, steps and
    /// stationarity are recomputed from `p`.
    pub fn from_points(p: &BcdProblem, gamma: f64, stop: StopReason, points: Vec<BlockPair>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::InsufficientData("trace has no points".into()));
        }
        let mut records: Vec<BcdRecord> = Vec::with_capacity(points.len());
        for (k, z) in points.into_iter().enumerate() {
            p.check_point(&z)?;
            let rec = record(p, k, z, records.last().map(|r| &r.z))?;
            records.push(rec);
        }
        Ok(BcdTrace {
            gamma,
            lipschitz: p.lipschitz(),
            stop,
            records,
        })
    }

    /// ‖z_{k+1} − z_k‖ recomputed from the stored points.
    pub fn step_norms(&self) -> Vec<f64> {
        self.records
            .windows(2)
            .map(|w| w[1].z.dist(&w[0].z).expect("trace blocks share dimensions"))
            .collect()
    }
}

/// (2γ+2)·l
pub fn subgradient_bound_constant(gamma: f64, l: f64) -> f64 {
    (2.0 * gamma + 2.0) * l
}

fn record(p: &BcdProblem, k: usize, z: BlockPair, prev: Option<&BlockPair>) -> Result<BcdRecord> {
    let psi = p
        .psi(&z)?
        .finite()
        .ok_or_else(|| Error::Infeasible(format!("iterate {k} left dom ψ")))?;
    let (step_x, step_y) = match prev {
        Some(q) => (z.x.dist(&q.x)?, z.y.dist(&q.y)?),
        None => (0.0, 0.0),
    };
    let dist = p.stationarity(&z)?.finite();
    Ok(BcdRecord {
        k,
        z,
        psi,
        step: step_x.hypot(step_y),
        step_x,
        step_y,
        dist,
    })
}

fn finite_vector(v: Vec<f64>, iteration: usize) -> Result<Vector> {
    Vector::new(v).map_err(|_| Error::SolverFailure {
        iteration,
        reason: "non-finite iterate".into(),
    })
}

/// One Gauss–Seidel sweep from z with step `c` for both blocks.
pub fn bcd_step(p: &BcdProblem, z: &BlockPair, c: f64, iteration: usize) -> Result<BlockPair> {
    let (x, y) = (z.x.as_slice(), z.y.as_slice());
    let mut ax = x.to_vec();
    ops::axpy(-c, &p.h.grad_x(x, y), &mut ax);
    let x_new = prox(&p.f, c, &finite_vector(ax, iteration)?)?.point;
    let mut ay = y.to_vec();
    ops::axpy(-c, &p.h.grad_y(x_new.as_slice(), y), &mut ay);
    let y_new = prox(&p.g, c, &finite_vector(ay, iteration)?)?.point;
    Ok(BlockPair::new(x_new, y_new))
}

pub fn run_bcd(p: &BcdProblem, cfg: &BcdConfig) -> Result<BcdTrace> {
    cfg.validate()?;
    let z0 = match &cfg.initial {
        Some(z0) => {
            p.check_point(z0)?;
            if !p.f.is_feasible(&z0.x)? || !p.g.is_feasible(&z0.y)? {
                return Err(Error::Infeasible(
                    "initial point violates an indicator constraint".into(),
                ));
            }
            z0.clone()
        }
        None => p.default_initial_point(cfg.seed)?,
    };
    let l = p.lipschitz();
    let c = 1.0 / (cfg.gamma * l);
    let m_const = subgradient_bound_constant(cfg.gamma, l);
    let bound = DIVERGENCE_FACTOR * (1.0 + z0.block_norm());

    let mut records = Vec::with_capacity(cfg.max_iters.min(100_000) + 1);
    records.push(record(p, 0, z0, None)?);
    let mut stop = StopReason::MaxIters;
    for k in 1..=cfg.max_iters {
        let prev = &records[k - 1].z;
        let z = bcd_step(p, prev, c, k)?;
        let norm = z.block_norm();
        if norm > bound {
            return Err(Error::Diverged {
                iteration: k,
                norm,
                bound,
            });
        }
        let rec = record(p, k, z, Some(prev))?;
        let step = rec.step;
        records.push(rec);
        if cfg.stop_tol.is_some_and(|t| m_const * step <= t) {
            stop = StopReason::Tolerance;
            break;
        }
    }
    Ok(BcdTrace {
        gamma: cfg.gamma,
        lipschitz: l,
        stop,
        records,
    })
}

/// Independent runs, e.g. multiple starts, evaluated under `mode`.
pub fn run_many(p: &BcdProblem, cfgs: &[BcdConfig], mode: Mode) -> Vec<Result<BcdTrace>> {
    exec::map_slice(mode, cfgs, |cfg| run_bcd(p, cfg))
}

fn check_params(trace: &BcdTrace, gamma: f64, l: f64) -> Result<()> {
    let close = |a: f64, b: f64| (a - b).abs() <= 1e-12 * a.abs().max(b.abs());
    if !close(trace.gamma, gamma) {
        return Err(Error::Mismatch(format!(
            "gamma {gamma} differs from the trace's {}",
            trace.gamma
        )));
    }
    if !close(trace.lipschitz, l) {
        return Err(Error::Mismatch(format!(
            "lipschitz {l} differs from the trace's {}",
            trace.lipschitz
        )));
    }
    Ok(())
}

/// ((γ−1)l/2)‖z_{k+1} − z_k‖² ≤ ψ(z_k) − ψ(z_{k+1}) + 1e−9(1 + |ψ(z₀)|).
pub fn check_sufficient_descent(trace: &BcdTrace, gamma: f64, l: f64) -> Result<CheckReport> {
    check_params(trace, gamma, l)?;
    let Some(first) = trace.records.first() else {
        return Err(Error::InsufficientData("empty trace".into()));
    };
    let slack = 1e-9 * (1.0 + first.psi.abs());
    let mut r = CheckReport::new("sufficient-descent", "Sufficient_Descent1", slack);
    if trace.len() < 2 {
        return Ok(r.with_verdict(Verdict::Vacuous, "single-record trace"));
    }
    let rho1 = 0.5 * (gamma - 1.0) * l;
    for (k, w) in trace.records.windows(2).enumerate() {
        let step = w[1].z.dist(&w[0].z)?;
        r.observe(k, rho1 * step * step, w[0].psi - w[1].psi, slack);
    }
    r.metric("rho1", rho1);
    Ok(r)
}

/// Squared steps are numerically summable: the last half of the trace holds
/// at most 10% of ∑‖z_{k+1} − z_k‖², and the last step is no longer than the
/// first.
pub fn check_step_vanishing(trace: &BcdTrace) -> CheckReport {
    let mut r = CheckReport::new("step-vanishing", "Sufficient_Descent2", 0.1);
    if trace.len() < 10 {
        return r.with_verdict(Verdict::Inconclusive, "fewer than 10 records");
    }
    let steps = trace.step_norms();
    let sq: Vec<f64> = steps.iter().map(|s| s * s).collect();
    let total: f64 = sq.iter().sum();
    let tail: f64 = sq[sq.len() / 2..].iter().sum();
    let (first, last) = (steps[0], steps[steps.len() - 1]);
    r.metric("total_sq", total);
    r.metric("tail_fraction", if total > 0.0 { tail / total } else { 0.0 });
    r.metric("first_step", first);
    r.metric("last_step", last);
    r.observe(sq.len() / 2, tail, 0.1 * total, 0.0);
    r.observe(steps.len(), last, first, 0.0);
    r
}

/// (A_x^k, A_y^k) ∈ ∂ψ(z^k) built from the prox optimality conditions:
///
/// ```text
/// A_x = γl(x^{k−1} − x^k) + ∇ₓH(x^k, y^k) − ∇ₓH(x^{k−1}, y^{k−1})
/// A_y = γl(y^{k−1} − y^k) + ∇ᵧH(x^k, y^k) − ∇ᵧH(x^k, y^{k−1})
/// ```
pub fn compute_subgrad_witness(
    p: &BcdProblem,
    trace: &BcdTrace,
    k: usize,
    gamma: f64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    if k == 0 {
        return Err(Error::param("k", "witness needs k >= 1"));
    }
    if k >= trace.len() {
        return Err(Error::param("k", format!("trace has only {} records", trace.len())));
    }
    let (prev, cur) = (&trace.records[k - 1].z, &trace.records[k].z);
    p.check_point(prev)?;
    p.check_point(cur)?;
    Ok(witness(p, prev, cur, gamma * p.lipschitz()))
}

fn witness(p: &BcdProblem, prev: &BlockPair, cur: &BlockPair, inv_step: f64) -> (Vec<f64>, Vec<f64>) {
    let (xp, yp) = (prev.x.as_slice(), prev.y.as_slice());
    let (x, y) = (cur.x.as_slice(), cur.y.as_slice());
    let mut ax = ops::sub(&p.h.grad_x(x, y), &p.h.grad_x(xp, yp));
    ops::axpy(inv_step, &ops::sub(xp, x), &mut ax);
    let mut ay = ops::sub(&p.h.grad_y(x, y), &p.h.grad_y(x, yp));
    ops::axpy(inv_step, &ops::sub(yp, y), &mut ay);
    (ax, ay)
}

/// Per-k witness data: (‖A_x‖ + ‖A_y‖, ‖z^k − z^{k−1}‖, membership distance).
fn witness_rows(p: &BcdProblem, trace: &BcdTrace, gamma: f64, mode: Mode) -> Result<Vec<(f64, f64, f64)>> {
    for rec in &trace.records {
        p.check_point(&rec.z)?;
    }
    let inv_step = gamma * p.lipschitz();
    let rows = exec::map_range(mode, trace.len().saturating_sub(1), |i| {
        let (prev, cur) = (&trace.records[i].z, &trace.records[i + 1].z);
        let (ax, ay) = witness(p, prev, cur, inv_step);
        let step = cur.dist(prev)?;
        let (x, y) = (cur.x.as_slice(), cur.y.as_slice());
        let member = |atom: &Atom, pt: &[f64], u: Vec<f64>, grad: Vec<f64>| -> Result<f64> {
            // u − ∇H must lie in the atom's subdifferential
            Ok(match atom_subdiff(atom, pt)? {
                Some(iv) => iv.distance_from(&ops::sub(&u, &grad)),
                None => f64::INFINITY,
            })
        };
        let norm_sum = ops::norm(&ax) + ops::norm(&ay);
        let dx = member(&p.f, x, ax, p.h.grad_x(x, y))?;
        let dy = member(&p.g, y, ay, p.h.grad_y(x, y))?;
        Ok::<_, Error>((norm_sum, step, dx.max(dy)))
    });
    rows.into_iter().collect()
}

/// ‖A_x^k‖ + ‖A_y^k‖ ≤ (2γ+2)l‖z^k − z^{k−1}‖ + 1e−9·l for all k ≥ 1.
pub fn check_subdiff_bound(p: &BcdProblem, trace: &BcdTrace, gamma: f64, l: f64) -> Result<CheckReport> {
    check_subdiff_bound_with(Mode::default(), p, trace, gamma, l)
}

pub fn check_subdiff_bound_with(
    mode: Mode,
    p: &BcdProblem,
    trace: &BcdTrace,
    gamma: f64,
    l: f64,
) -> Result<CheckReport> {
    check_params(trace, gamma, l)?;
    let slack = 1e-9 * l;
    let mut r = CheckReport::new("subdiff-bound", "Ψ_subdiff_bound", slack);
    if trace.len() < 2 {
        return Ok(r.with_verdict(Verdict::Vacuous, "single-record trace"));
    }
    let m_const = subgradient_bound_constant(gamma, l);
    let mut max_ratio = 0.0_f64;
    for (i, (lhs, step, _)) in witness_rows(p, trace, gamma, mode)?.into_iter().enumerate() {
        r.observe(i + 1, lhs, m_const * step, slack);
        // ratios of roundoff-level quantities carry no information
        if lhs > slack && step > 0.0 {
            max_ratio = max_ratio.max(lhs / (l * step));
        }
    }
    r.metric("bound_constant", 2.0 * gamma + 2.0);
    r.metric("max_ratio", max_ratio);
    Ok(r)
}

/// Blockwise membership of the witness in ∂ₓψ(z^k) × ∂ᵧψ(z^k) at `tol`.
pub fn check_witness_membership(p: &BcdProblem, trace: &BcdTrace, gamma: f64, tol: f64) -> Result<CheckReport> {
    let mut r = CheckReport::new("witness-membership", "Ψ_subdiff_bound", tol);
    if trace.len() < 2 {
        return Ok(r.with_verdict(Verdict::Vacuous, "single-record trace"));
    }
    let mut worst = 0.0_f64;
    for (i, (_, _, d)) in witness_rows(p, trace, gamma, Mode::default())?.into_iter().enumerate() {
        worst = worst.max(d);
        r.observe(i + 1, d, 0.0, tol);
    }
    r.metric("max_distance", worst);
    Ok(r)
}

/// Finite total variation: halving-window increments of S_n = ∑_{k<n}‖z_{k+1} − z_k‖
/// contract by at least ½, and the last 10% of iterates are Cauchy at
/// 1e−6·(1 + ‖z⁰‖).
pub fn check_finite_length(trace: &BcdTrace) -> CheckReport {
    check_finite_length_with(Mode::default(), trace)
}

pub fn check_finite_length_with(mode: Mode, trace: &BcdTrace) -> CheckReport {
    let points: Vec<Vec<f64>> = trace.records.iter().map(|r| r.z.concat()).collect();
    finite_length_report(mode, &points, "finite-length", "Limited_length")
}

pub(crate) fn finite_length_report(mode: Mode, points: &[Vec<f64>], name: &str, theorem: &str) -> CheckReport {
    let scale = 1.0 + points.first().map_or(0.0, |p| ops::norm(p));
    let cauchy_tol = CAUCHY_TOL * scale;
    let mut r = CheckReport::new(name, theorem, cauchy_tol);
    if points.len() < 10 {
        return r.with_verdict(Verdict::Inconclusive, "fewer than 10 records");
    }
    let steps: Vec<f64> = points.windows(2).map(|w| ops::dist(&w[0], &w[1])).collect();
    let partial = |n: usize| steps[..n].iter().sum::<f64>();
    let n = steps.len();
    let (s_n, s_half, s_quarter) = (partial(n), partial(n / 2), partial(n / 4));
    let (late, early) = (s_n - s_half, s_half - s_quarter);
    let slack = 1e-9 * scale;
    r.observe(n, late, 0.5 * early, slack);
    let q = if early > 0.0 { late / early } else { 0.0 };
    let limit = if q < 1.0 {
        s_n + late * q / (1.0 - q)
    } else if late <= slack {
        s_n + late
    } else {
        f64::INFINITY
    };
    r.metric("length", s_n);
    r.metric("increment_ratio", q);
    r.metric("extrapolated_length", limit);

    let tail_start = points.len() - (points.len() / 10).max(2);
    let spread = max_pairwise_distance(mode, &points[tail_start..]);
    r.metric("tail_spread", spread);
    r.observe(tail_start, spread, cauchy_tol, 0.0);
    r
}

/// At z* = last iterate: dist(0, ∂ₓψ) + dist(0, ∂ᵧψ) ≤ tol and ψ over the
/// last 10% of iterates varies by at most tol·(1 + |ψ(z*)|). Inconclusive
/// unless the trace passes [`check_finite_length`].
pub fn check_limit_criticality(p: &BcdProblem, trace: &BcdTrace, tol: f64) -> Result<CheckReport> {
    let mut r = CheckReport::new("limit-criticality", "Convergence_to_critpt", tol);
    let length = check_finite_length(trace);
    if !length.passed() {
        return Ok(r.with_verdict(
            Verdict::Inconclusive,
            format!("trace not converged (finite-length {})", length.verdict),
        ));
    }
    let last = trace.last();
    let (dx, dy) = block_subdiff_distance(&p.f, &p.g, p.h.as_ref(), &last.z)?;
    let dist = dx.as_f64() + dy.as_f64();
    r.metric("dist", dist);
    if !critical_point_check(&p.f, &p.g, p.h.as_ref(), &last.z, tol)? {
        r.record_violation(Violation {
            index: last.k,
            lhs: dist,
            rhs: tol,
            slack: 0.0,
        });
    }
    let tail = &trace.records[trace.len() - (trace.len() / 10).max(2)..];
    let (lo, hi) = tail
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), rec| (lo.min(rec.psi), hi.max(rec.psi)));
    r.metric("psi_spread", hi - lo);
    r.metric("psi_limit", last.psi);
    r.observe(last.k, hi - lo, tol * (1.0 + last.psi.abs()), 0.0);
    Ok(r)
}
