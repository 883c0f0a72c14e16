//! Seeded random instances and the built-in problem library.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::admm::{AdmmBlock, AdmmProblem, KktPair};
use crate::bcd::BcdProblem;
use crate::error::{Error, Result};
use crate::linalg::{ops, BlockPair, Cholesky, LinOp, Vector};
use crate::prox::Atom;
use crate::reference::{bcd_reference, WeightedLasso};
use crate::rng::Rng;
use crate::smooth::{LeastSquares, QuadraticCoupling, SmoothFn};

pub const DEFAULT_SEED: u64 = 42;
/// Stationarity reached by reference solves.
pub const REFERENCE_TOL: f64 = 1e-10;
const REFERENCE_MAX_ITERS: usize = 2_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InstanceKind {
    Quadratic,
    Lasso,
    FeasibleAdmm,
}

impl InstanceKind {
    pub const ALL: [InstanceKind; 3] = [InstanceKind::Quadratic, InstanceKind::Lasso, InstanceKind::FeasibleAdmm];

    pub fn name(self) -> &'static str {
        match self {
            InstanceKind::Quadratic => "quadratic",
            InstanceKind::Lasso => "lasso",
            InstanceKind::FeasibleAdmm => "feasible-admm",
        }
    }
}

impl FromStr for InstanceKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        InstanceKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| {
                let known: Vec<_> = InstanceKind::ALL.iter().map(|k| k.name()).collect();
                Error::Unsupported(format!("unknown instance kind '{s}' (expected one of {})", known.join(", ")))
            })
    }
}

/// Raw generated data; every matrix entry lies in [−1, 1).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Instance {
    /// ½‖Ax + By − c‖², A: p×n, B: p×m.
    Quadratic { a: LinOp, b: LinOp, c: Vector },
    /// ½‖Ax + By − c‖² + λ(‖x‖₁ + ‖y‖₁).
    Lasso { a: LinOp, b: LinOp, c: Vector, lambda: f64 },
    /// A1 x1 + A2 x2 = b with A1x̃1 + A2x̃2 − b = 0 at the stored point.
    FeasibleAdmm {
        a1: LinOp,
        a2: LinOp,
        b: Vector,
        x1: Vector,
        x2: Vector,
    },
}

pub fn random_instance(kind: InstanceKind, dims: (usize, usize, usize), rng: &mut Rng) -> Result<Instance> {
    let (n, m, p) = dims;
    if n == 0 || m == 0 || p == 0 {
        return Err(Error::param("dims", format!("must be positive, got ({n}, {m}, {p})")));
    }
    Ok(match kind {
        InstanceKind::Quadratic => Instance::Quadratic {
            a: rng.matrix_uniform(p, n),
            b: rng.matrix_uniform(p, m),
            c: rng.vector_uniform(p, -1.0, 1.0),
        },
        InstanceKind::Lasso => {
            let a = rng.matrix_uniform(p, n);
            let b = rng.matrix_uniform(p, m);
            let c = rng.vector_uniform(p, -1.0, 1.0);
            let lambda = 0.1 * max_correlation(&LinOp::hstack(&a, &b)?, &c);
            let lambda = if lambda > 0.0 { lambda } else { 0.1 };
            Instance::Lasso { a, b, c, lambda }
        }
        InstanceKind::FeasibleAdmm => {
            let a1 = rng.matrix_uniform(p, n);
            let a2 = rng.matrix_uniform(p, m);
            let x1 = rng.vector_uniform(n, -1.0, 1.0);
            let x2 = rng.vector_uniform(m, -1.0, 1.0);
            let b = Vector::new(ops::add(&a1.apply_slice(x1.as_slice()), &a2.apply_slice(x2.as_slice())))?;
            Instance::FeasibleAdmm { a1, a2, b, x1, x2 }
        }
    })
}

/// ‖Mᵀc‖∞
fn max_correlation(m: &LinOp, c: &Vector) -> f64 {
    ops::norm_inf(&m.adjoint_apply_slice(c.as_slice()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Algorithm {
    Bcd,
    Admm,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Builtin {
    Quadratic,
    LassoBcd,
    ConsensusLasso,
    BasisPursuit,
    RankDeficient,
    LassoInner,
}

impl Builtin {
    pub const ALL: [Builtin; 6] = [
        Builtin::Quadratic,
        Builtin::LassoBcd,
        Builtin::ConsensusLasso,
        Builtin::BasisPursuit,
        Builtin::RankDeficient,
        Builtin::LassoInner,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Builtin::Quadratic => "quadratic",
            Builtin::LassoBcd => "lasso-bcd",
            Builtin::ConsensusLasso => "consensus-lasso",
            Builtin::BasisPursuit => "basis-pursuit",
            Builtin::RankDeficient => "rank-deficient",
            Builtin::LassoInner => "lasso-inner",
        }
    }

    pub fn algorithm(self) -> Algorithm {
        match self {
            Builtin::Quadratic | Builtin::LassoBcd => Algorithm::Bcd,
            _ => Algorithm::Admm,
        }
    }

    pub fn description(self) -> &'static str {
        match self {
            Builtin::Quadratic => "BCD, f = g = 0, H = ½‖Ax + By‖² + ½‖z‖², n = m = 20; minimizer 0",
            Builtin::LassoBcd => "BCD, f = g = λ‖·‖₁, H = ½‖Ax + By − c‖², n = m = 20, 160 rows",
            Builtin::ConsensusLasso => "ADMM, ½‖Ax1 − c‖² + λ‖x2‖₁ s.t. x1 − x2 = 0, A: 20×50",
            Builtin::BasisPursuit => "ADMM, ‖x2‖₁ s.t. Ax1 = c, x1 − x2 = 0, planted 3-sparse solution",
            Builtin::RankDeficient => "ADMM, consensus lasso with duplicated constraint rows (non-unique multiplier)",
            Builtin::LassoInner => "ADMM, λ‖x1‖₁ + ½‖Ax1 − c‖² s.t. x1 − x2 = 0 (inner-solver path)",
        }
    }
}

impl fmt::Display for Builtin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Builtin {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Builtin::ALL.into_iter().find(|b| b.name() == s).ok_or_else(|| {
            let known: Vec<_> = Builtin::ALL.iter().map(|b| b.name()).collect();
            Error::Unsupported(format!("unknown built-in problem '{s}' (expected one of {})", known.join(", ")))
        })
    }
}

#[derive(Debug, Clone)]
pub struct BcdInstance {
    pub builtin: Builtin,
    pub problem: BcdProblem,
    pub coupling: QuadraticCoupling,
    /// Global minimizer (exact or from a reference solve).
    pub minimizer: BlockPair,
    pub psi_star: f64,
}

#[derive(Debug, Clone)]
pub struct AdmmInstance {
    pub builtin: Builtin,
    pub problem: AdmmProblem,
    /// KKT pairs; more than one when the multiplier is not unique.
    pub references: Vec<KktPair>,
    pub objective_star: f64,
}

#[derive(Debug, Clone)]
pub enum BuiltinProblem {
    Bcd(BcdInstance),
    Admm(AdmmInstance),
}

impl BuiltinProblem {
    pub fn bcd(self) -> Option<BcdInstance> {
        match self {
            BuiltinProblem::Bcd(b) => Some(b),
            BuiltinProblem::Admm(_) => None,
        }
    }

    pub fn admm(self) -> Option<AdmmInstance> {
        match self {
            BuiltinProblem::Admm(a) => Some(a),
            BuiltinProblem::Bcd(_) => None,
        }
    }
}

fn scaled_uniform(rng: &mut Rng, rows: usize, cols: usize) -> Result<LinOp> {
    rng.matrix_uniform(rows, cols).scaled(1.0 / (rows as f64).sqrt())
}

pub fn builtin(which: Builtin, seed: u64) -> Result<BuiltinProblem> {
    let mut rng = Rng::new(seed);
    match which {
        Builtin::Quadratic => quadratic(&mut rng).map(BuiltinProblem::Bcd),
        Builtin::LassoBcd => lasso_bcd(&mut rng).map(BuiltinProblem::Bcd),
        Builtin::ConsensusLasso => consensus(&mut rng, 1).map(BuiltinProblem::Admm),
        Builtin::RankDeficient => consensus(&mut rng, 2).map(BuiltinProblem::Admm),
        Builtin::BasisPursuit => basis_pursuit(&mut rng).map(BuiltinProblem::Admm),
        Builtin::LassoInner => lasso_inner(&mut rng).map(BuiltinProblem::Admm),
    }
}

fn quadratic(rng: &mut Rng) -> Result<BcdInstance> {
    let (n, m, p) = (20, 20, 40);
    let a = scaled_uniform(rng, p, n)?;
    let b = scaled_uniform(rng, p, m)?;
    let coupling = QuadraticCoupling::new(a, b, Vector::zeros(p), 1.0)?;
    let problem = BcdProblem::new(Atom::Zero, Atom::Zero, Arc::new(coupling.clone()))?;
    Ok(BcdInstance {
        builtin: Builtin::Quadratic,
        problem,
        coupling,
        minimizer: BlockPair::zeros(n, m),
        psi_star: 0.0,
    })
}

fn lasso_bcd(rng: &mut Rng) -> Result<BcdInstance> {
    let (n, m, p) = (20, 20, 160);
    let a = scaled_uniform(rng, p, n)?;
    let b = scaled_uniform(rng, p, m)?;
    let c = rng.vector_uniform(p, -1.0, 1.0);
    let lambda = 0.1 * max_correlation(&LinOp::hstack(&a, &b)?, &c);
    let coupling = QuadraticCoupling::new(a, b, c, 0.0)?;
    let atom = Atom::L1 { weight: lambda };
    let problem = BcdProblem::new(atom.clone(), atom, Arc::new(coupling.clone()))?;
    let (minimizer, sol) = bcd_reference(&problem, REFERENCE_TOL, REFERENCE_MAX_ITERS)?;
    Ok(BcdInstance {
        builtin: Builtin::LassoBcd,
        problem,
        coupling,
        minimizer,
        psi_star: sol.objective,
    })
}

struct LassoData {
    a: LinOp,
    c: Vector,
    lambda: f64,
    x: Vector,
    objective: f64,
}

fn lasso_data(rng: &mut Rng) -> Result<LassoData> {
    let (p, n) = (20, 50);
    let a = scaled_uniform(rng, p, n)?;
    let c = rng.vector_uniform(p, -1.0, 1.0);
    let lambda = 0.1 * max_correlation(&a, &c);
    let wl = WeightedLasso::new(LeastSquares::new(a.clone(), c.clone())?, vec![lambda; n])?;
    let sol = wl.solve(REFERENCE_TOL, REFERENCE_MAX_ITERS)?;
    Ok(LassoData {
        a,
        c,
        lambda,
        x: sol.x,
        objective: sol.objective,
    })
}

/// `copies` = 1: x1 − x2 = 0; `copies` = 2: the same constraint stacked twice.
fn consensus(rng: &mut Rng, copies: usize) -> Result<AdmmInstance> {
    let d = lasso_data(rng)?;
    let n = d.a.cols();
    let stack = |op: LinOp| -> Result<LinOp> {
        let mut out = op.clone();
        for _ in 1..copies {
            out = LinOp::vstack(&out, &op)?;
        }
        Ok(out)
    };
    let a1 = stack(LinOp::identity(n)?)?;
    let a2 = stack(LinOp::identity(n)?.scaled(-1.0)?)?;
    let ls = LeastSquares::new(d.a.clone(), d.c.clone())?;
    // −y* = ∇½‖Ax − c‖² at x*
    let y_star = ops::scale(-1.0, &ls.gradient(d.x.as_slice()));
    let problem = AdmmProblem::new(
        AdmmBlock::new(Atom::Zero, Some(ls), a1),
        AdmmBlock::new(Atom::L1 { weight: d.lambda }, None, a2),
        Vector::zeros(n * copies),
    )?
    .with_feasible_point(Vector::zeros(n), Vector::zeros(n))?;
    let references = if copies == 1 {
        vec![KktPair {
            x1: d.x.clone(),
            x2: d.x.clone(),
            y: Vector::new(y_star)?,
        }]
    } else {
        let half = ops::scale(0.5, &y_star);
        vec![
            KktPair {
                x1: d.x.clone(),
                x2: d.x.clone(),
                y: Vector::new([half.as_slice(), half.as_slice()].concat())?,
            },
            KktPair {
                x1: d.x.clone(),
                x2: d.x.clone(),
                y: Vector::new([y_star.as_slice(), &vec![0.0; n]].concat())?,
            },
        ]
    };
    Ok(AdmmInstance {
        builtin: if copies == 1 { Builtin::ConsensusLasso } else { Builtin::RankDeficient },
        problem,
        references,
        objective_star: d.objective,
    })
}

fn lasso_inner(rng: &mut Rng) -> Result<AdmmInstance> {
    let d = lasso_data(rng)?;
    let n = d.a.cols();
    let problem = AdmmProblem::new(
        AdmmBlock::new(
            Atom::L1 { weight: d.lambda },
            Some(LeastSquares::new(d.a, d.c)?),
            LinOp::identity(n)?,
        ),
        AdmmBlock::new(Atom::Zero, None, LinOp::identity(n)?.scaled(-1.0)?),
        Vector::zeros(n),
    )?
    .with_feasible_point(Vector::zeros(n), Vector::zeros(n))?;
    Ok(AdmmInstance {
        builtin: Builtin::LassoInner,
        problem,
        references: vec![KktPair {
            x1: d.x.clone(),
            x2: d.x,
            y: Vector::zeros(n),
        }],
        objective_star: d.objective,
    })
}

const BP_SPARSITY: usize = 3;
const BP_ATTEMPTS: u64 = 200;
/// Off-support dual certificate entries must stay below this.
const BP_CERTIFICATE_MARGIN: f64 = 0.9;

/// min ‖x2‖₁ s.t. Ax1 = c, x1 = x2 with a planted sparse solution x0,
/// certified unique by w with (Aᵀw)_S = sign(x0_S), |Aᵀw| ≤ 0.9 off S.
fn basis_pursuit(rng: &mut Rng) -> Result<AdmmInstance> {
    let (p, n) = (20, 50);
    for attempt in 0..BP_ATTEMPTS {
        let mut r = rng.split(attempt);
        let a = scaled_uniform(&mut r, p, n)?;
        let mut support = Vec::with_capacity(BP_SPARSITY);
        while support.len() < BP_SPARSITY {
            let i = r.index(n);
            if !support.contains(&i) {
                support.push(i);
            }
        }
        support.sort_unstable();
        let mut x0 = vec![0.0; n];
        for &i in &support {
            let sign = if r.uniform(0.0, 1.0) < 0.5 { -1.0 } else { 1.0 };
            x0[i] = sign * r.uniform(1.0, 2.0);
        }
        let a_s = a.select_columns(&support)?;
        let Ok(ch) = Cholesky::factor(&a_s.gram()) else {
            continue;
        };
        let signs: Vec<f64> = support.iter().map(|&i| x0[i].signum()).collect();
        // minimum-norm w with A_Sᵀw = sign(x0_S)
        let w = a_s.apply_slice(&ch.solve(&signs));
        let atw = a.adjoint_apply_slice(&w);
        let off_support_ok = (0..n)
            .filter(|i| !support.contains(i))
            .all(|i| atw[i].abs() <= BP_CERTIFICATE_MARGIN);
        if !off_support_ok {
            continue;
        }
        let c = a.apply_slice(&x0);
        let x0 = Vector::new(x0)?;
        let a1 = LinOp::vstack(&a, &LinOp::identity(n)?)?;
        let a2 = LinOp::vstack(&LinOp::zeros(p, n)?, &LinOp::identity(n)?.scaled(-1.0)?)?;
        let b = Vector::new([c.as_slice(), &vec![0.0; n]].concat())?;
        let y = Vector::new([ops::scale(-1.0, &w).as_slice(), atw.as_slice()].concat())?;
        let problem = AdmmProblem::new(
            AdmmBlock::new(Atom::Zero, None, a1),
            AdmmBlock::new(Atom::L1 { weight: 1.0 }, None, a2),
            b,
        )?
        .with_feasible_point(x0.clone(), x0.clone())?;
        let objective_star = x0.iter().map(|v| v.abs()).sum();
        return Ok(AdmmInstance {
            builtin: Builtin::BasisPursuit,
            problem,
            references: vec![KktPair { x1: x0.clone(), x2: x0, y }],
            objective_star,
        });
    }
    Err(Error::SolverFailure {
        iteration: BP_ATTEMPTS as usize,
        reason: "no certified sparse instance found".into(),
    })
}
