//! Two-block ADMM for min F1(x1) + F2(x2) s.t. A1 x1 + A2 x2 = b, where each
//! Fi = atom_i + optional least-squares addend, on the augmented Lagrangian
//!
//! ```text
//! L_ρ(x1, x2, y) = F1(x1) + F2(x2) + ⟨y, r⟩ + (ρ/2)‖r‖²,  r = A1x1 + A2x2 − b
//! x1⁺ = argmin L_ρ(·, x2, y)
//! x2⁺ = argmin L_ρ(x1⁺, ·, y)
//! y⁺  = y + τρ(A1x1⁺ + A2x2⁺ − b)
//! ```
//!
//! Traces are indexed from 0; certificate loops start at k = 1.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::bcd::{finite_length_report, StopReason};
use crate::certificate::{CheckReport, Verdict, Violation};
use crate::error::{check_dim, Error, Result};
use crate::exec::{self, Mode};
use crate::linalg::{ops, symmetric_eigenvalues, Cholesky, LinOp, Vector};
use crate::prox::{prox, Atom, ExtValue};
use crate::smooth::{LeastSquares, SmoothFn};
use crate::subdiff::{atom_subdiff, subdiff_distance_from, StructuredFn};

/// Upper end of the admissible dual step range, (1 + √5)/2.
pub const TAU_MAX: f64 = 1.618_033_988_749_895;
/// Relative tolerance for detecting AᵀA = αI.
pub const SCALED_IDENTITY_TOL: f64 = 1e-12;
/// Singular values at or below this make A_i count as rank deficient.
pub const RANK_TOL: f64 = 1e-10;
/// Membership tolerance on closed-form subproblem paths.
pub const EXACT_MEMBERSHIP_TOL: f64 = 1e-10;
/// Inner-solver membership tolerance is this multiple of `inner_tol`.
pub const INNER_MEMBERSHIP_FACTOR: f64 = 100.0;
/// Tolerance at which reference KKT pairs are validated.
pub const REFERENCE_KKT_TOL: f64 = 1e-8;

/// How a block's subproblem is solved.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SubproblemPath {
    /// Zero or squared-ℓ2 atom: one linear solve.
    LinearSolve,
    /// No smooth addend and AᵀA = αI: one prox call.
    ClosedFormProx,
    /// Accelerated proximal gradient to `inner_tol`.
    InnerSolver,
}

impl SubproblemPath {
    pub fn is_exact(self) -> bool {
        self != SubproblemPath::InnerSolver
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdmmBlock {
    pub atom: Atom,
    pub smooth: Option<LeastSquares>,
    pub a: LinOp,
}

impl AdmmBlock {
    pub fn new(atom: Atom, smooth: Option<LeastSquares>, a: LinOp) -> Self {
        AdmmBlock { atom, smooth, a }
    }

    pub fn dim(&self) -> usize {
        self.a.cols()
    }

    /// atom + smooth addend as a single structured function.
    pub fn structured(&self) -> StructuredFn {
        StructuredFn::new(
            self.atom.clone(),
            self.smooth.clone().map(|s| Arc::new(s) as Arc<dyn SmoothFn>),
        )
    }

    fn value(&self, x: &[f64]) -> ExtValue {
        let s = self.smooth.as_ref().map_or(0.0, |s| s.value(x));
        self.atom.value_slice(x).plus(s)
    }

    fn path(&self) -> SubproblemPath {
        if matches!(self.atom, Atom::Zero | Atom::SqL2 { .. }) {
            SubproblemPath::LinearSolve
        } else if self.smooth.is_none() && self.a.scaled_identity_gram(SCALED_IDENTITY_TOL).is_some() {
            SubproblemPath::ClosedFormProx
        } else {
            SubproblemPath::InnerSolver
        }
    }

    /// MᵀM + AᵀA (+ 2λI) positive definite, or a strictly convex atom.
    fn uniquely_solvable(&self) -> bool {
        if self.atom.is_strictly_convex() {
            return true;
        }
        let mut g = self.a.gram();
        if let Some(s) = &self.smooth {
            g = g.add(&s.hessian()).expect("block dimensions agree");
        }
        Cholesky::factor(&g).is_ok()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdmmProblem {
    blocks: [AdmmBlock; 2],
    b: Vector,
    feasible_point: Option<(Vector, Vector)>,
    full_rank: bool,
}

impl AdmmProblem {
    pub fn new(block1: AdmmBlock, block2: AdmmBlock, b: Vector) -> Result<Self> {
        check_dim("A2 rows", block1.a.rows(), block2.a.rows())?;
        check_dim("b", block1.a.rows(), b.dim())?;
        for (i, blk) in [&block1, &block2].into_iter().enumerate() {
            blk.atom.validate(blk.dim())?;
            if let Some(s) = &blk.smooth {
                check_dim(if i == 0 { "smooth1 columns" } else { "smooth2 columns" }, blk.dim(), s.matrix.cols())?;
            }
            if !blk.uniquely_solvable() {
                return Err(Error::Unsupported(format!(
                    "x{} subproblem has no unique minimizer: A{}ᵀA{} plus the smooth Hessian is singular \
                     and the atom is not strictly convex",
                    i + 1,
                    i + 1,
                    i + 1
                )));
            }
        }
        // injective: column rank equals the block dimension
        let full_rank = [&block1, &block2]
            .iter()
            .all(|blk| blk.a.rows() >= blk.a.cols() && blk.a.min_singular_value() > RANK_TOL);
        Ok(AdmmProblem {
            blocks: [block1, block2],
            b,
            feasible_point: None,
            full_rank,
        })
    }

    /// Stores a point with A1x1 + A2x2 = b (to 1e−10 relative) inside both
    /// atom domains.
    pub fn with_feasible_point(mut self, x1: Vector, x2: Vector) -> Result<Self> {
        let r = self.constraint_residual(x1.as_slice(), x2.as_slice())?;
        let tol = 1e-10 * (1.0 + self.b.norm());
        if ops::norm(&r) > tol {
            return Err(Error::Infeasible(format!(
                "stored feasible point has constraint residual {:.3e}",
                ops::norm(&r)
            )));
        }
        if !self.blocks[0].atom.is_feasible(&x1)? || !self.blocks[1].atom.is_feasible(&x2)? {
            return Err(Error::Infeasible("stored feasible point is outside an atom domain".into()));
        }
        self.feasible_point = Some((x1, x2));
        Ok(self)
    }

    pub fn block(&self, i: usize) -> &AdmmBlock {
        &self.blocks[i]
    }

    pub fn a1(&self) -> &LinOp {
        &self.blocks[0].a
    }

    pub fn a2(&self) -> &LinOp {
        &self.blocks[1].a
    }

    pub fn b(&self) -> &Vector {
        &self.b
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        (self.blocks[0].dim(), self.blocks[1].dim(), self.b.dim())
    }

    pub fn feasible_point(&self) -> Option<&(Vector, Vector)> {
        self.feasible_point.as_ref()
    }

    /// Both A_i injective (smallest singular value above [`RANK_TOL`]).
    pub fn full_rank(&self) -> bool {
        self.full_rank
    }

    pub fn path(&self, block: usize) -> SubproblemPath {
        self.blocks[block].path()
    }

    /// Membership tolerance for u/v checks given the configured inner tolerance.
    pub fn uv_tolerance(&self, inner_tol: f64) -> f64 {
        if self.blocks.iter().all(|b| b.path().is_exact()) {
            EXACT_MEMBERSHIP_TOL
        } else {
            (INNER_MEMBERSHIP_FACTOR * inner_tol).max(EXACT_MEMBERSHIP_TOL)
        }
    }

    /// A1x1 + A2x2 − b
    pub fn constraint_residual(&self, x1: &[f64], x2: &[f64]) -> Result<Vec<f64>> {
        check_dim("x1", self.blocks[0].dim(), x1.len())?;
        check_dim("x2", self.blocks[1].dim(), x2.len())?;
        let mut r = self.blocks[0].a.apply_slice(x1);
        let a2x2 = self.blocks[1].a.apply_slice(x2);
        for ((ri, ai), bi) in r.iter_mut().zip(&a2x2).zip(self.b.iter()) {
            *ri = *ri + ai - bi;
        }
        Ok(r)
    }

    pub fn objective(&self, x1: &[f64], x2: &[f64]) -> ExtValue {
        self.blocks[0].value(x1).plus(self.blocks[1].value(x2).as_f64())
    }

    pub fn lagrangian(&self, x1: &[f64], x2: &[f64], y: &[f64], rho: f64) -> Result<ExtValue> {
        check_dim("y", self.b.dim(), y.len())?;
        let r = self.constraint_residual(x1, x2)?;
        Ok(self
            .objective(x1, x2)
            .plus(ops::dot(y, &r) + 0.5 * rho * ops::norm_sq(&r)))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KktPair {
    pub x1: Vector,
    pub x2: Vector,
    pub y: Vector,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdmmConfig {
    rho: f64,
    tau: f64,
    max_iters: usize,
    primal_tol: f64,
    dual_tol: f64,
    inner_tol: f64,
    max_inner_iters: usize,
    initial: Option<KktPair>,
}

impl AdmmConfig {
    pub fn new(rho: f64, tau: f64) -> Result<Self> {
        let cfg = AdmmConfig {
            rho,
            tau,
            max_iters: 1000,
            primal_tol: 1e-9,
            dual_tol: 1e-9,
            inner_tol: 1e-10,
            max_inner_iters: 100_000,
            initial: None,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.rho.is_finite() && self.rho > 0.0) {
            return Err(Error::param("rho", format!("must be > 0, got {}", self.rho)));
        }
        if !(self.tau > 0.0 && self.tau < TAU_MAX) {
            return Err(Error::param(
                "tau",
                format!("must lie in (0, {TAU_MAX}) = (0, (1+√5)/2), got {}", self.tau),
            ));
        }
        if self.max_iters == 0 {
            return Err(Error::param("max_iters", "must be positive"));
        }
        for (field, v) in [
            ("primal_tol", self.primal_tol),
            ("dual_tol", self.dual_tol),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::param(field, format!("must be finite and >= 0, got {v}")));
            }
        }
        if !(self.inner_tol.is_finite() && self.inner_tol > 0.0) {
            return Err(Error::param("inner_tol", format!("must be > 0, got {}", self.inner_tol)));
        }
        if self.max_inner_iters == 0 {
            return Err(Error::param("max_inner_iters", "must be positive"));
        }
        Ok(())
    }

    pub fn with_max_iters(mut self, n: usize) -> Result<Self> {
        self.max_iters = n;
        self.validate()?;
        Ok(self)
    }

    pub fn with_tolerances(mut self, primal: f64, dual: f64) -> Result<Self> {
        self.primal_tol = primal;
        self.dual_tol = dual;
        self.validate()?;
        Ok(self)
    }

    pub fn with_inner(mut self, tol: f64, max_iters: usize) -> Result<Self> {
        self.inner_tol = tol;
        self.max_inner_iters = max_iters;
        self.validate()?;
        Ok(self)
    }

    pub fn with_initial(mut self, start: KktPair) -> Self {
        self.initial = Some(start);
        self
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn max_iters(&self) -> usize {
        self.max_iters
    }

    pub fn primal_tol(&self) -> f64 {
        self.primal_tol
    }

    pub fn dual_tol(&self) -> f64 {
        self.dual_tol
    }

    pub fn inner_tol(&self) -> f64 {
        self.inner_tol
    }

    pub fn max_inner_iters(&self) -> usize {
        self.max_inner_iters
    }

    pub fn initial(&self) -> Option<&KktPair> {
        self.initial.as_ref()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SubSolution {
    pub x: Vector,
    pub inner_iters: usize,
    /// dist(0, ∂ₓL_ρ) at the returned point.
    pub residual: f64,
}

enum Method {
    Linear(Cholesky),
    Prox(f64),
    Inner { l: f64, mu: f64 },
}

/// Solver for x ↦ F(x) + ⟨y, Ax⟩ + (ρ/2)‖Ax + w‖², i.e. atom(x) plus the
/// quadratic ½xᵀHx − ⟨rhs, x⟩ with H = MᵀM + ρAᵀA, rhs = Mᵀd − Aᵀ(y + ρw).
struct BlockSolver<'a> {
    block: &'a AdmmBlock,
    rho: f64,
    hess: LinOp,
    base_rhs: Vec<f64>,
    method: Method,
}

impl<'a> BlockSolver<'a> {
    fn new(block: &'a AdmmBlock, rho: f64) -> Result<Self> {
        let n = block.dim();
        let mut hess = block.a.gram().scaled(rho)?;
        let mut base_rhs = vec![0.0; n];
        if let Some(s) = &block.smooth {
            hess = hess.add(&s.hessian())?;
            base_rhs = s.matrix.adjoint_apply_slice(s.target.as_slice());
        }
        let method = match block.path() {
            SubproblemPath::LinearSolve => {
                let mut sys = hess.clone();
                if let Atom::SqL2 { weight } = block.atom {
                    sys = sys.add(&LinOp::identity(n)?.scaled(2.0 * weight)?)?;
                }
                Method::Linear(Cholesky::factor(&sys)?)
            }
            SubproblemPath::ClosedFormProx => {
                let alpha = block
                    .a
                    .scaled_identity_gram(SCALED_IDENTITY_TOL)
                    .expect("path chosen from the same test");
                Method::Prox(alpha)
            }
            SubproblemPath::InnerSolver => {
                let eig = symmetric_eigenvalues(&hess)?;
                let l = eig.last().copied().unwrap_or(0.0) * (1.0 + 1e-12);
                let mu = eig.first().copied().unwrap_or(0.0).max(0.0);
                Method::Inner { l, mu }
            }
        };
        Ok(BlockSolver {
            block,
            rho,
            hess,
            base_rhs,
            method,
        })
    }

    fn rhs(&self, w: &[f64], y: &[f64]) -> Vec<f64> {
        let mut t = y.to_vec();
        ops::axpy(self.rho, w, &mut t);
        let mut rhs = self.base_rhs.clone();
        ops::axpy(-1.0, &self.block.a.adjoint_apply_slice(&t), &mut rhs);
        rhs
    }

    /// dist(rhs − Hx, ∂atom(x)) = dist(0, ∂ₓL_ρ).
    fn residual(&self, x: &[f64], rhs: &[f64]) -> Result<f64> {
        let neg_grad = ops::sub(rhs, &self.hess.apply_slice(x));
        Ok(match atom_subdiff(&self.block.atom, x)? {
            Some(iv) => iv.distance_from(&neg_grad),
            None => f64::INFINITY,
        })
    }

    fn solve(&self, w: &[f64], y: &[f64], warm: &[f64], cfg: &AdmmConfig, iteration: usize) -> Result<SubSolution> {
        let rhs = self.rhs(w, y);
        let to_vec = |v: Vec<f64>| {
            Vector::new(v).map_err(|_| Error::SolverFailure {
                iteration,
                reason: "non-finite subproblem solution".into(),
            })
        };
        match &self.method {
            Method::Linear(ch) => {
                let x = to_vec(ch.solve(&rhs))?;
                let residual = self.residual(x.as_slice(), &rhs)?;
                Ok(SubSolution { x, inner_iters: 0, residual })
            }
            Method::Prox(alpha) => {
                let s = self.rho * alpha;
                let arg = to_vec(ops::scale(1.0 / s, &ops::sub(&rhs, &self.base_rhs)))?;
                let x = prox(&self.block.atom, 1.0 / s, &arg)?.point;
                let residual = self.residual(x.as_slice(), &rhs)?;
                Ok(SubSolution { x, inner_iters: 0, residual })
            }
            Method::Inner { l, mu } => self.fista(&rhs, warm, *l, *mu, cfg, iteration),
        }
    }

    fn fista(&self, rhs: &[f64], warm: &[f64], l: f64, mu: f64, cfg: &AdmmConfig, iteration: usize) -> Result<SubSolution> {
        let atom = &self.block.atom;
        let mut x = atom.project_feasible(&Vector::from_slice(warm)?)?.into_vec();
        let mut residual = self.residual(&x, rhs)?;
        if residual <= cfg.inner_tol {
            return Ok(SubSolution { x: Vector::new(x)?, inner_iters: 0, residual });
        }
        let strong = if mu > 0.0 {
            Some((l.sqrt() - mu.sqrt()) / (l.sqrt() + mu.sqrt()))
        } else {
            None
        };
        let mut x_prev = x.clone();
        let mut t = 1.0_f64;
        for it in 1..=cfg.max_inner_iters {
            let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
            let beta = strong.unwrap_or((t - 1.0) / t_next);
            let mut v = x.clone();
            ops::axpy(beta, &ops::sub(&x, &x_prev), &mut v);
            let grad = ops::sub(&self.hess.apply_slice(&v), rhs);
            let mut arg = v.clone();
            ops::axpy(-1.0 / l, &grad, &mut arg);
            let arg = Vector::new(arg).map_err(|_| Error::SolverFailure {
                iteration,
                reason: "non-finite inner iterate".into(),
            })?;
            let x_new = prox(atom, 1.0 / l, &arg)?.point.into_vec();
            // restart momentum when it points uphill
            let uphill = ops::dot(&ops::sub(&v, &x_new), &ops::sub(&x_new, &x)) > 0.0;
            x_prev = std::mem::replace(&mut x, x_new);
            if uphill {
                x_prev.clone_from(&x);
                t = 1.0;
            } else {
                t = t_next;
            }
            residual = self.residual(&x, rhs)?;
            if residual <= cfg.inner_tol {
                return Ok(SubSolution { x: Vector::new(x)?, inner_iters: it, residual });
            }
        }
        Err(Error::SolverFailure {
            iteration,
            reason: format!(
                "inner solver reached {} iterations with residual {residual:.3e} > inner_tol {:.3e}",
                cfg.max_inner_iters, cfg.inner_tol
            ),
        })
    }
}

fn solve_block(
    p: &AdmmProblem,
    block: usize,
    other: &[f64],
    y: &[f64],
    rho: f64,
    cfg: &AdmmConfig,
) -> Result<SubSolution> {
    let other_idx = 1 - block;
    check_dim("other block", p.blocks[other_idx].dim(), other.len())?;
    check_dim("y", p.b.dim(), y.len())?;
    if !(rho.is_finite() && rho > 0.0) {
        return Err(Error::param("rho", format!("must be > 0, got {rho}")));
    }
    let w = ops::sub(&p.blocks[other_idx].a.apply_slice(other), p.b.as_slice());
    let solver = BlockSolver::new(&p.blocks[block], rho)?;
    let warm = vec![0.0; p.blocks[block].dim()];
    solver.solve(&w, y, &warm, cfg, 0)
}

/// argmin over x1 of L_ρ(x1, x2, y).
pub fn solve_x1_subproblem(p: &AdmmProblem, x2: &Vector, y: &Vector, rho: f64, cfg: &AdmmConfig) -> Result<SubSolution> {
    solve_block(p, 0, x2.as_slice(), y.as_slice(), rho, cfg)
}

/// argmin over x2 of L_ρ(x1, x2, y), with x1 the freshly updated block.
pub fn solve_x2_subproblem(p: &AdmmProblem, x1: &Vector, y: &Vector, rho: f64, cfg: &AdmmConfig) -> Result<SubSolution> {
    solve_block(p, 1, x1.as_slice(), y.as_slice(), rho, cfg)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdmmRecord {
    pub k: usize,
    pub x1: Vector,
    pub x2: Vector,
    pub y: Vector,
    pub lagrangian: f64,
    /// ‖A1x1_k + A2x2_k − b‖
    pub primal_residual: f64,
    /// ‖A2(x2_k − x2_{k−1})‖, zero for k = 0.
    pub dual_step: f64,
    pub inner_iters: (usize, usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdmmTrace {
    pub rho: f64,
    pub tau: f64,
    pub stop: StopReason,
    pub records: Vec<AdmmRecord>,
}

impl AdmmTrace {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn last(&self) -> &AdmmRecord {
        self.records.last().expect("trace holds the initial point")
    }

    /// Rebuilds every record from stored iterates; residuals and the
    /// augmented Lagrangian are recomputed from `p`.
    pub fn from_points(
        p: &AdmmProblem,
        rho: f64,
        tau: f64,
        stop: StopReason,
        points: Vec<(KktPair, (usize, usize))>,
    ) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::InsufficientData("trace has no points".into()));
        }
        let (n, m, q) = p.dims();
        let mut records: Vec<AdmmRecord> = Vec::with_capacity(points.len());
        for (k, (pt, inner)) in points.into_iter().enumerate() {
            check_dim("trace x1", n, pt.x1.dim())?;
            check_dim("trace x2", m, pt.x2.dim())?;
            check_dim("trace y", q, pt.y.dim())?;
            let prev = records.last().map(|r| &r.x2);
            let rec = make_record(p, k, pt.x1, pt.x2, pt.y, prev, rho, inner)?;
            records.push(rec);
        }
        Ok(AdmmTrace { rho, tau, stop, records })
    }

    /// (x1, x2, y) flattened per record.
    pub fn flat_points(&self) -> Vec<Vec<f64>> {
        self.records
            .iter()
            .map(|r| [r.x1.as_slice(), r.x2.as_slice(), r.y.as_slice()].concat())
            .collect()
    }
}

#[allow(clippy::too_many_arguments)]
fn make_record(
    p: &AdmmProblem,
    k: usize,
    x1: Vector,
    x2: Vector,
    y: Vector,
    prev_x2: Option<&Vector>,
    rho: f64,
    inner_iters: (usize, usize),
) -> Result<AdmmRecord> {
    let r = p.constraint_residual(x1.as_slice(), x2.as_slice())?;
    let lagrangian = p.lagrangian(x1.as_slice(), x2.as_slice(), y.as_slice(), rho)?.as_f64();
    let dual_step = match prev_x2 {
        Some(q) => ops::norm(&p.a2().apply_slice(&ops::sub(x2.as_slice(), q.as_slice()))),
        None => 0.0,
    };
    Ok(AdmmRecord {
        k,
        x1,
        x2,
        y,
        lagrangian,
        primal_residual: ops::norm(&r),
        dual_step,
        inner_iters,
    })
}

fn default_start(p: &AdmmProblem) -> KktPair {
    let (n, m, q) = p.dims();
    KktPair {
        x1: Vector::zeros(n),
        x2: Vector::zeros(m),
        y: Vector::zeros(q),
    }
}

/// y + τρ·r, shared by the solver and the exactness check.
fn dual_update(y: &[f64], r: &[f64], tau: f64, rho: f64) -> Vec<f64> {
    let step = tau * rho;
    y.iter().zip(r).map(|(yi, ri)| yi + step * ri).collect()
}

pub fn run_admm(p: &AdmmProblem, cfg: &AdmmConfig) -> Result<AdmmTrace> {
    cfg.validate()?;
    let start = cfg.initial.clone().unwrap_or_else(|| default_start(p));
    let (n, m, q) = p.dims();
    check_dim("initial x1", n, start.x1.dim())?;
    check_dim("initial x2", m, start.x2.dim())?;
    check_dim("initial y", q, start.y.dim())?;
    let (rho, tau) = (cfg.rho, cfg.tau);
    let solvers = [BlockSolver::new(&p.blocks[0], rho)?, BlockSolver::new(&p.blocks[1], rho)?];

    let mut records = vec![make_record(p, 0, start.x1, start.x2, start.y, None, rho, (0, 0))?];
    let first = &records[0];
    let at_kkt = kkt_check(p, &first.x1, &first.x2, &first.y, 0.0)?;
    if at_kkt.primal <= cfg.primal_tol && at_kkt.dual1 <= cfg.dual_tol && at_kkt.dual2 <= cfg.dual_tol {
        return Ok(AdmmTrace { rho, tau, stop: StopReason::Tolerance, records });
    }
    let mut stop = StopReason::MaxIters;
    for k in 1..=cfg.max_iters {
        let prev = &records[k - 1];
        let w1 = ops::sub(&p.a2().apply_slice(prev.x2.as_slice()), p.b.as_slice());
        let s1 = solvers[0].solve(&w1, prev.y.as_slice(), prev.x1.as_slice(), cfg, k)?;
        let w2 = ops::sub(&p.a1().apply_slice(s1.x.as_slice()), p.b.as_slice());
        let s2 = solvers[1].solve(&w2, prev.y.as_slice(), prev.x2.as_slice(), cfg, k)?;
        let r = p.constraint_residual(s1.x.as_slice(), s2.x.as_slice())?;
        let y = Vector::new(dual_update(prev.y.as_slice(), &r, tau, rho)).map_err(|_| Error::SolverFailure {
            iteration: k,
            reason: "non-finite multiplier".into(),
        })?;
        let rec = make_record(p, k, s1.x, s2.x, y, Some(&prev.x2), rho, (s1.inner_iters, s2.inner_iters))?;
        let done = rec.primal_residual <= cfg.primal_tol && rho * rec.dual_step <= cfg.dual_tol;
        records.push(rec);
        if done {
            stop = StopReason::Tolerance;
            break;
        }
    }
    Ok(AdmmTrace { rho, tau, stop, records })
}

/// Independent runs evaluated under `mode`.
pub fn run_many(p: &AdmmProblem, cfgs: &[AdmmConfig], mode: Mode) -> Vec<Result<AdmmTrace>> {
    exec::map_slice(mode, cfgs, |cfg| run_admm(p, cfg))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KktReport {
    /// ‖A1x1 + A2x2 − b‖
    pub primal: f64,
    /// dist(−A1ᵀy, ∂F1(x1))
    pub dual1: f64,
    /// dist(−A2ᵀy, ∂F2(x2))
    pub dual2: f64,
    pub tol: f64,
    pub passed: bool,
}

impl KktReport {
    pub fn max_residual(&self) -> f64 {
        self.primal.max(self.dual1).max(self.dual2)
    }
}

pub fn kkt_check(p: &AdmmProblem, x1: &Vector, x2: &Vector, y: &Vector, tol: f64) -> Result<KktReport> {
    check_dim("y", p.b.dim(), y.dim())?;
    let primal = ops::norm(&p.constraint_residual(x1.as_slice(), x2.as_slice())?);
    let dual = |blk: &AdmmBlock, x: &Vector| -> Result<f64> {
        let u = ops::scale(-1.0, &blk.a.adjoint_apply_slice(y.as_slice()));
        Ok(subdiff_distance_from(&blk.structured(), x.as_slice(), &u)?.as_f64())
    };
    let dual1 = dual(&p.blocks[0], x1)?;
    let dual2 = dual(&p.blocks[1], x2)?;
    Ok(KktReport {
        primal,
        dual1,
        dual2,
        tol,
        passed: primal <= tol && dual1 <= tol && dual2 <= tol,
    })
}

/// Error vectors against a KKT reference and the derived Lyapunov sequences.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuxSequences {
    pub rho: f64,
    pub tau: f64,
    pub e1: Vec<Vec<f64>>,
    pub e2: Vec<Vec<f64>>,
    pub ey: Vec<Vec<f64>>,
    /// u^k, v^k for k ≥ 1 (index 0 is `None`).
    pub u: Vec<Option<Vec<f64>>>,
    pub v: Vec<Option<Vec<f64>>>,
    pub psi: Vec<f64>,
    pub phi: Vec<f64>,
    /// ‖A1e1^k + A2e2^k‖²
    pub res_sq: Vec<f64>,
    /// ‖A2(x2^k − x2^{k+1})‖², one shorter than the trace.
    pub a2_step_sq: Vec<f64>,
}

/// max(1 − τ, 1 − 1/τ)
pub fn phi_weight(tau: f64) -> f64 {
    (1.0 - tau).max(1.0 - 1.0 / tau)
}

/// (min(τ, 1 + τ − τ²), min(1, 1 + 1/τ − τ))
pub fn descent_coefficients(tau: f64) -> (f64, f64) {
    (tau.min(1.0 + tau - tau * tau), 1.0f64.min(1.0 + 1.0 / tau - tau))
}

pub fn compute_aux(p: &AdmmProblem, trace: &AdmmTrace, reference: &KktPair) -> Result<AuxSequences> {
    let kkt = kkt_check(p, &reference.x1, &reference.x2, &reference.y, REFERENCE_KKT_TOL)?;
    if !kkt.passed {
        return Err(Error::NotKkt(format!(
            "reference is not a KKT pair (primal {:.3e}, dual1 {:.3e}, dual2 {:.3e})",
            kkt.primal, kkt.dual1, kkt.dual2
        )));
    }
    let (rho, tau) = (trace.rho, trace.tau);
    let (a1, a2) = (p.a1(), p.a2());
    let w = phi_weight(tau);
    let n = trace.len();
    let mut aux = AuxSequences {
        rho,
        tau,
        e1: Vec::with_capacity(n),
        e2: Vec::with_capacity(n),
        ey: Vec::with_capacity(n),
        u: Vec::with_capacity(n),
        v: Vec::with_capacity(n),
        psi: Vec::with_capacity(n),
        phi: Vec::with_capacity(n),
        res_sq: Vec::with_capacity(n),
        a2_step_sq: Vec::with_capacity(n.saturating_sub(1)),
    };
    for (k, rec) in trace.records.iter().enumerate() {
        let e1 = ops::sub(rec.x1.as_slice(), reference.x1.as_slice());
        let e2 = ops::sub(rec.x2.as_slice(), reference.x2.as_slice());
        let ey = ops::sub(rec.y.as_slice(), reference.y.as_slice());
        let a2e2 = a2.apply_slice(&e2);
        let res = ops::add(&a1.apply_slice(&e1), &a2e2);
        let res_sq = ops::norm_sq(&res);
        let psi = ops::norm_sq(&ey) / (tau * rho) + rho * ops::norm_sq(&a2e2);
        aux.psi.push(psi);
        aux.phi.push(psi + w * rho * res_sq);
        aux.res_sq.push(res_sq);
        // y^k + (1 − τ)ρ(A1e1 + A2e2)
        let mut base = rec.y.as_slice().to_vec();
        ops::axpy((1.0 - tau) * rho, &res, &mut base);
        if k >= 1 {
            let prev = &trace.records[k - 1];
            let mut inner = base.clone();
            ops::axpy(rho, &a2.apply_slice(&ops::sub(prev.x2.as_slice(), rec.x2.as_slice())), &mut inner);
            aux.u.push(Some(ops::scale(-1.0, &a1.adjoint_apply_slice(&inner))));
            aux.v.push(Some(ops::scale(-1.0, &a2.adjoint_apply_slice(&base))));
            let step = a2.apply_slice(&ops::sub(prev.x2.as_slice(), rec.x2.as_slice()));
            aux.a2_step_sq.push(ops::norm_sq(&step));
        } else {
            aux.u.push(None);
            aux.v.push(None);
        }
        aux.e1.push(e1);
        aux.e2.push(e2);
        aux.ey.push(ey);
    }
    Ok(aux)
}

fn check_aux_params(aux: &AuxSequences, rho: f64, tau: f64) -> Result<()> {
    if aux.rho != rho || aux.tau != tau {
        return Err(Error::Mismatch(format!(
            "(rho, tau) = ({rho}, {tau}) differs from the sequences' ({}, {})",
            aux.rho, aux.tau
        )));
    }
    Ok(())
}

/// Φ_k − Φ_{k+1} ≥ c1·ρ‖A2(x2^k − x2^{k+1})‖² + c2·ρ‖A1e1^{k+1} + A2e2^{k+1}‖²
/// for every k ≥ 1, slack 1e−8(1 + Φ_1).
pub fn check_phi_descent(aux: &AuxSequences, rho: f64, tau: f64) -> Result<CheckReport> {
    check_aux_params(aux, rho, tau)?;
    let (c1, c2) = descent_coefficients(tau);
    if !(c1 > 0.0 && c2 > 0.0) {
        return Err(Error::param("tau", format!("descent coefficients ({c1}, {c2}) are not positive")));
    }
    let slack = 1e-8 * (1.0 + aux.phi.get(1).copied().unwrap_or(0.0));
    let mut r = CheckReport::new("phi-descent", "Φ_isdescending", slack);
    r.metric("c1", c1);
    r.metric("c2", c2);
    if aux.phi.len() < 3 {
        return Ok(r.with_verdict(Verdict::Vacuous, "fewer than 3 records"));
    }
    for k in 1..aux.phi.len() - 1 {
        // a2_step_sq[k] is ‖A2(x2^k − x2^{k+1})‖²
        let lhs = c1 * rho * aux.a2_step_sq[k] + c2 * rho * aux.res_sq[k + 1];
        r.observe(k, lhs, aux.phi[k] - aux.phi[k + 1], slack);
    }
    Ok(r)
}

/// Φ_{k+1} ≤ Φ_k for k ≥ 1 (slack as in [`check_phi_descent`]).
pub fn check_phi_monotone(aux: &AuxSequences) -> CheckReport {
    let slack = 1e-8 * (1.0 + aux.phi.get(1).copied().unwrap_or(0.0));
    let mut r = CheckReport::new("phi-monotone", "Φ_isdescending", slack);
    if aux.phi.len() < 3 {
        return r.with_verdict(Verdict::Vacuous, "fewer than 3 records");
    }
    for k in 1..aux.phi.len() - 1 {
        r.observe(k, aux.phi[k + 1], aux.phi[k], slack);
    }
    r
}

/// Partial sums of ‖A2(x2^k − x2^{k+1})‖² stay below Φ_1 / (c1·ρ).
pub fn check_summability(aux: &AuxSequences) -> CheckReport {
    let slack = 1e-8 * (1.0 + aux.phi.get(1).copied().unwrap_or(0.0));
    let mut r = CheckReport::new("summability", "Φ_isdescending", slack);
    if aux.phi.len() < 3 {
        return r.with_verdict(Verdict::Vacuous, "fewer than 3 records");
    }
    let (c1, _) = descent_coefficients(aux.tau);
    let bound = aux.phi[1] / (c1 * aux.rho);
    let mut sum = 0.0;
    for k in 1..aux.a2_step_sq.len() {
        sum += aux.a2_step_sq[k];
        r.observe(k, sum, bound, slack);
    }
    r.metric("bound", bound);
    r.metric("sum", sum);
    r
}

/// u^k ∈ ∂F1(x1^k) and v^k ∈ ∂F2(x2^k) at `tol` for all k ≥ 1.
pub fn check_uv_membership(p: &AdmmProblem, aux: &AuxSequences, trace: &AdmmTrace, tol: f64) -> Result<CheckReport> {
    check_uv_membership_with(Mode::default(), p, aux, trace, tol)
}

pub fn check_uv_membership_with(
    mode: Mode,
    p: &AdmmProblem,
    aux: &AuxSequences,
    trace: &AdmmTrace,
    tol: f64,
) -> Result<CheckReport> {
    if aux.u.len() != trace.len() {
        return Err(Error::Mismatch(format!(
            "sequences cover {} records, trace has {}",
            aux.u.len(),
            trace.len()
        )));
    }
    let mut r = CheckReport::new("uv-membership", "Φ_isdescending", tol);
    if trace.len() < 2 {
        return Ok(r.with_verdict(Verdict::Vacuous, "single-record trace"));
    }
    let (f1, f2) = (p.blocks[0].structured(), p.blocks[1].structured());
    let dists = exec::map_range(mode, trace.len() - 1, |i| {
        let k = i + 1;
        let rec = &trace.records[k];
        let u = aux.u[k].as_ref().expect("defined for k >= 1");
        let v = aux.v[k].as_ref().expect("defined for k >= 1");
        let du = subdiff_distance_from(&f1, rec.x1.as_slice(), u)?.as_f64();
        let dv = subdiff_distance_from(&f2, rec.x2.as_slice(), v)?.as_f64();
        Ok::<_, Error>((du, dv))
    });
    let (mut worst_u, mut worst_v) = (0.0_f64, 0.0_f64);
    for (i, d) in dists.into_iter().enumerate() {
        let (du, dv) = d?;
        worst_u = worst_u.max(du);
        worst_v = worst_v.max(dv);
        r.observe(i + 1, du.max(dv), 0.0, tol);
    }
    r.metric("max_dist_u", worst_u);
    r.metric("max_dist_v", worst_v);
    Ok(r)
}

/// y_{k+1} − y_k = τρ·r_{k+1} to 1e−14 relative.
pub fn check_dual_update(p: &AdmmProblem, trace: &AdmmTrace) -> Result<CheckReport> {
    let mut r = CheckReport::new("dual-update", "ADMM_convergence", 1e-14);
    if trace.len() < 2 {
        return Ok(r.with_verdict(Verdict::Vacuous, "single-record trace"));
    }
    for (k, w) in trace.records.windows(2).enumerate() {
        let res = p.constraint_residual(w[1].x1.as_slice(), w[1].x2.as_slice())?;
        let expect = dual_update(w[0].y.as_slice(), &res, trace.tau, trace.rho);
        let err = ops::dist(&expect, w[1].y.as_slice());
        let scale = w[0].y.norm() + w[1].y.norm() + trace.tau * trace.rho * ops::norm(&res);
        r.observe(k + 1, err, 1e-14 * scale.max(f64::MIN_POSITIVE), 0.0);
    }
    Ok(r)
}

/// Cauchy tail plus KKT at the final iterate. Inconclusive when some A_i
/// is not injective, or when max_iters ended the run with open residuals.
pub fn check_convergence_to_kkt(p: &AdmmProblem, trace: &AdmmTrace, tol: f64) -> Result<CheckReport> {
    let mut r = CheckReport::new("kkt-convergence", "ADMM_convergence", tol);
    let last = trace.last();
    let kkt = kkt_check(p, &last.x1, &last.x2, &last.y, tol)?;
    r.metric("primal", kkt.primal);
    r.metric("dual1", kkt.dual1);
    r.metric("dual2", kkt.dual2);
    if !p.full_rank() {
        return Ok(r.with_verdict(Verdict::Inconclusive, "A1 or A2 is rank deficient"));
    }
    if trace.stop == StopReason::MaxIters && !kkt.passed {
        return Ok(r.with_verdict(
            Verdict::Inconclusive,
            format!("max_iters reached with KKT residual {:.3e}", kkt.max_residual()),
        ));
    }
    if trace.len() >= 10 {
        let length = finite_length_report(Mode::default(), &trace.flat_points(), "cauchy", "ADMM_convergence");
        let spread = length.metrics.get("tail_spread").copied().unwrap_or(0.0);
        r.metric("tail_spread", spread);
        if spread > length.tolerance && trace.stop == StopReason::MaxIters {
            return Ok(r.with_verdict(
                Verdict::Inconclusive,
                format!("max_iters reached before the tail settled (spread {spread:.3e})"),
            ));
        }
        if spread > length.tolerance {
            r.record_violation(Violation {
                index: last.k,
                lhs: spread,
                rhs: length.tolerance,
                slack: 0.0,
            });
        }
    }
    if !kkt.passed {
        r.record_violation(Violation {
            index: last.k,
            lhs: kkt.max_residual(),
            rhs: tol,
            slack: 0.0,
        });
    }
    Ok(r)
}
