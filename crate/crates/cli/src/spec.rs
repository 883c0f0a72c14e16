//! JSON problem files.
//!
//! A file either names a built-in instance or carries explicit data:
//!
//! ```json
//! {
//!   "algorithm": "bcd",
//!   "dims": { "n": 2, "m": 1, "p": 3 },
//!   "bcd": {
//!     "f": { "kind": "l1", "weight": 0.1 },
//!     "g": { "kind": "zero" },
//!     "coupling": {
//!       "a": { "rows": 3, "cols": 2, "data": [1, 0, 0, 1, 1, 1] },
//!       "b": { "path": "b.json" },
//!       "c": [1, 2, 3],
//!       "mu": 0.0
//!     }
//!   },
//!   "config": { "gamma": 1.5, "max_iters": 500 }
//! }
//! ```
//!
//! Matrices and vectors may be inline or `{ "path": ... }`, resolved relative
//! to the problem file and holding the same JSON.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use blockopt_core::admm::{kkt_check, run_admm, AdmmBlock, AdmmConfig, AdmmProblem, KktPair, REFERENCE_KKT_TOL};
use blockopt_core::bcd::{BcdConfig, BcdProblem};
use blockopt_core::problems::{builtin, Algorithm, Builtin, DEFAULT_SEED, REFERENCE_TOL};
use blockopt_core::reference::bcd_reference;
use blockopt_core::smooth::{LeastSquares, QuadraticCoupling};
use blockopt_core::{Atom, BlockPair, LinOp, Vector};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

pub const SEED_ENV: &str = "BLOCKOPT_SEED";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MatrixSource {
    Inline { rows: usize, cols: usize, data: Vec<f64> },
    File { path: PathBuf },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum VectorSource {
    Inline(Vec<f64>),
    File { path: PathBuf },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Dims {
    pub n: usize,
    pub m: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CouplingSpec {
    pub a: MatrixSource,
    pub b: MatrixSource,
    pub c: VectorSource,
    #[serde(default)]
    pub mu: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BcdData {
    pub f: Atom,
    pub g: Atom,
    pub coupling: CouplingSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LeastSquaresSpec {
    pub matrix: MatrixSource,
    pub target: VectorSource,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlockSpec {
    pub atom: Atom,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub smooth: Option<LeastSquaresSpec>,
    pub a: MatrixSource,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PairSpec {
    pub x1: VectorSource,
    pub x2: VectorSource,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KktSpec {
    pub x1: VectorSource,
    pub x2: VectorSource,
    pub y: VectorSource,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdmmData {
    pub block1: BlockSpec,
    pub block2: BlockSpec,
    pub b: VectorSource,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub feasible_point: Option<PairSpec>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub references: Vec<KktSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum InitialSpec {
    Bcd { x: VectorSource, y: VectorSource },
    Admm { x1: VectorSource, x2: VectorSource, y: VectorSource },
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rho: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_iters: Option<usize>,
    /// BCD: stop when (2γ+2)l‖Δz‖ ≤ tol. ADMM: primal and dual tolerance.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub inner_tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_inner_iters: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial: Option<InitialSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub algorithm: Option<Algorithm>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub builtin: Option<Builtin>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dims: Option<Dims>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bcd: Option<BcdData>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub admm: Option<AdmmData>,
    #[serde(default)]
    pub config: ConfigSpec,
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub gamma: Option<f64>,
    pub rho: Option<f64>,
    pub tau: Option<f64>,
    pub max_iters: Option<usize>,
    pub tol: Option<f64>,
    pub seed: Option<u64>,
}

pub struct LoadedBcd {
    pub name: String,
    pub problem: BcdProblem,
    pub config: BcdConfig,
    /// Global minimum value, when known or computable.
    pub psi_star: Option<f64>,
}

pub struct LoadedAdmm {
    pub name: String,
    pub problem: AdmmProblem,
    pub config: AdmmConfig,
    pub references: Vec<KktPair>,
}

#[allow(clippy::large_enum_variant)]
pub enum Loaded {
    Bcd(LoadedBcd),
    Admm(LoadedAdmm),
}

impl Loaded {
    pub fn name(&self) -> &str {
        match self {
            Loaded::Bcd(b) => &b.name,
            Loaded::Admm(a) => &a.name,
        }
    }

    pub fn algorithm(&self) -> Algorithm {
        match self {
            Loaded::Bcd(_) => Algorithm::Bcd,
            Loaded::Admm(_) => Algorithm::Admm,
        }
    }
}

impl ProblemSpec {
    pub fn builtin(which: Builtin) -> Self {
        ProblemSpec {
            name: None,
            algorithm: Some(which.algorithm()),
            builtin: Some(which),
            seed: None,
            dims: None,
            bcd: None,
            admm: None,
            config: ConfigSpec::default(),
        }
    }

    pub fn from_json(text: &str) -> CliResult<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            let field = if path == "." || path == "?" { "problem".to_string() } else { path };
            CliError::input(field, e.into_inner())
        })
    }

    pub fn read(path: &Path) -> CliResult<Self> {
        let text = fs::read_to_string(path).map_err(|e| CliError::io(path.display().to_string(), e))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("problem specs serialize")
    }

    fn algorithm_resolved(&self) -> CliResult<Algorithm> {
        match (self.algorithm, self.builtin) {
            (Some(a), Some(b)) if a != b.algorithm() => Err(CliError::input(
                "algorithm",
                format!("built-in '{b}' is a {} problem", algorithm_name(b.algorithm())),
            )),
            (_, Some(b)) => Ok(b.algorithm()),
            (Some(a), None) => Ok(a),
            (None, None) => Err(CliError::input("algorithm", "required unless 'builtin' is given")),
        }
    }

    /// Builds the problem and solver configuration. Relative data paths are
    /// resolved against `base`; `fallback_name` names custom problems
    /// without a `name` field.
    pub fn load(&self, base: &Path, ov: &Overrides, fallback_name: &str) -> CliResult<Loaded> {
        let seed = resolve_seed(ov.seed, self.seed)?;
        let alg = self.algorithm_resolved()?;
        let mut loaded = match alg {
            Algorithm::Bcd => Loaded::Bcd(self.load_bcd(base, ov, seed)?),
            Algorithm::Admm => Loaded::Admm(self.load_admm(base, ov, seed)?),
        };
        if self.builtin.is_none() {
            let name = self.name.clone().unwrap_or_else(|| fallback_name.to_string());
            match &mut loaded {
                Loaded::Bcd(b) => b.name = name,
                Loaded::Admm(a) => a.name = name,
            }
        }
        Ok(loaded)
    }

    fn load_bcd(&self, base: &Path, ov: &Overrides, seed: u64) -> CliResult<LoadedBcd> {
        if self.admm.is_some() {
            return Err(CliError::input("admm", "not allowed for a bcd problem"));
        }
        let (name, problem, psi_star) = match (self.builtin, &self.bcd) {
            (Some(_), Some(_)) => return Err(CliError::input("bcd", "not allowed together with 'builtin'")),
            (Some(b), None) => {
                let inst = builtin(b, seed).map_err(|e| CliError::core("builtin", e))?.bcd().expect("bcd builtin");
                (b.name().to_string(), inst.problem, Some(inst.psi_star))
            }
            (None, Some(d)) => {
                let p = bcd_from_data(d, self.dims, base)?;
                // convex ℓ1/quadratic problems get an independent reference value
                let psi_star = bcd_reference(&p, REFERENCE_TOL, 200_000).ok().map(|(_, s)| s.objective);
                (String::new(), p, psi_star)
            }
            (None, None) => return Err(CliError::input("bcd", "required for a bcd problem without 'builtin'")),
        };
        let c = &self.config;
        for (field, v) in [("config.rho", c.rho), ("config.tau", c.tau), ("config.inner_tol", c.inner_tol)] {
            if v.is_some() {
                return Err(CliError::input(field, "not used by bcd"));
            }
        }
        let gamma = ov.gamma.or(c.gamma).unwrap_or(2.0);
        let max_iters = ov.max_iters.or(c.max_iters).unwrap_or(1000);
        let mut config = BcdConfig::new(gamma, max_iters)
            .map_err(|e| CliError::core("config", e))?
            .with_stop_tol(ov.tol.or(c.tol))
            .map_err(|e| CliError::core("config", e))?
            .with_seed(seed);
        match &c.initial {
            None => {}
            Some(InitialSpec::Bcd { x, y }) => {
                let (n, m) = problem.dims();
                let x = load_vector(x, base, "config.initial.x", Some(n))?;
                let y = load_vector(y, base, "config.initial.y", Some(m))?;
                config = config.with_initial(BlockPair::new(x, y));
            }
            Some(InitialSpec::Admm { .. }) => {
                return Err(CliError::input("config.initial", "bcd starts need fields x and y"));
            }
        }
        Ok(LoadedBcd {
            name,
            problem,
            config,
            psi_star,
        })
    }

    fn load_admm(&self, base: &Path, ov: &Overrides, seed: u64) -> CliResult<LoadedAdmm> {
        if self.bcd.is_some() {
            return Err(CliError::input("bcd", "not allowed for an admm problem"));
        }
        if self.config.gamma.is_some() {
            return Err(CliError::input("config.gamma", "not used by admm"));
        }
        let (name, problem, mut references) = match (self.builtin, &self.admm) {
            (Some(_), Some(_)) => return Err(CliError::input("admm", "not allowed together with 'builtin'")),
            (Some(b), None) => {
                let inst = builtin(b, seed).map_err(|e| CliError::core("builtin", e))?.admm().expect("admm builtin");
                (b.name().to_string(), inst.problem, inst.references)
            }
            (None, Some(d)) => {
                let (p, refs) = admm_from_data(d, self.dims, base)?;
                (String::new(), p, refs)
            }
            (None, None) => return Err(CliError::input("admm", "required for an admm problem without 'builtin'")),
        };
        let c = &self.config;
        let rho = ov.rho.or(c.rho).unwrap_or(1.0);
        let tau = ov.tau.or(c.tau).unwrap_or(1.0);
        let mut config = AdmmConfig::new(rho, tau).map_err(|e| CliError::core("config", e))?;
        if let Some(n) = ov.max_iters.or(c.max_iters) {
            config = config.with_max_iters(n).map_err(|e| CliError::core("config", e))?;
        }
        if let Some(t) = ov.tol.or(c.tol) {
            config = config.with_tolerances(t, t).map_err(|e| CliError::core("config", e))?;
        }
        if c.inner_tol.is_some() || c.max_inner_iters.is_some() {
            let (tol, iters) = (c.inner_tol.unwrap_or(config.inner_tol()), c.max_inner_iters.unwrap_or(config.max_inner_iters()));
            config = config
                .with_inner(tol, iters)
                .map_err(|e| CliError::core("config", e))?;
        }
        match &c.initial {
            None => {}
            Some(InitialSpec::Admm { x1, x2, y }) => {
                let (n, m, q) = problem.dims();
                config = config.with_initial(KktPair {
                    x1: load_vector(x1, base, "config.initial.x1", Some(n))?,
                    x2: load_vector(x2, base, "config.initial.x2", Some(m))?,
                    y: load_vector(y, base, "config.initial.y", Some(q))?,
                });
            }
            Some(InitialSpec::Bcd { .. }) => {
                return Err(CliError::input("config.initial", "admm starts need fields x1, x2 and y"));
            }
        }
        if references.is_empty() {
            if let Some(r) = computed_reference(&problem) {
                references.push(r);
            }
        }
        Ok(LoadedAdmm {
            name,
            problem,
            config,
            references,
        })
    }
}

pub fn algorithm_name(a: Algorithm) -> &'static str {
    match a {
        Algorithm::Bcd => "bcd",
        Algorithm::Admm => "admm",
    }
}

/// Flag, then `BLOCKOPT_SEED`, then the file, then the library default.
pub fn resolve_seed(flag: Option<u64>, file: Option<u64>) -> CliResult<u64> {
    if let Some(s) = flag {
        return Ok(s);
    }
    if let Ok(v) = std::env::var(SEED_ENV) {
        return v
            .trim()
            .parse()
            .map_err(|_| CliError::input(SEED_ENV, format!("expected an unsigned integer, got '{v}'")));
    }
    Ok(file.unwrap_or(DEFAULT_SEED))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path, base: &Path, field: &str) -> CliResult<T> {
    let full = base.join(path);
    let text = fs::read_to_string(&full).map_err(|e| CliError::input(field, format!("{}: {e}", full.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::input(field, format!("{}: {e}", full.display())))
}

pub fn load_matrix(src: &MatrixSource, base: &Path, field: &str) -> CliResult<LinOp> {
    match src {
        MatrixSource::Inline { rows, cols, data } => {
            if data.len() != rows * cols {
                return Err(CliError::input(
                    field,
                    format!("data has {} entries, rows × cols = {}", data.len(), rows * cols),
                ));
            }
            LinOp::new(*rows, *cols, data.clone()).map_err(|e| CliError::input(field, e))
        }
        MatrixSource::File { path } => {
            let inner: MatrixSource = read_json(path, base, field)?;
            if matches!(inner, MatrixSource::File { .. }) {
                return Err(CliError::input(field, "matrix files must hold inline data"));
            }
            let dir = base.join(path).parent().map(Path::to_path_buf).unwrap_or_default();
            load_matrix(&inner, &dir, field)
        }
    }
}

pub fn load_vector(src: &VectorSource, base: &Path, field: &str, dim: Option<usize>) -> CliResult<Vector> {
    let v = match src {
        VectorSource::Inline(v) => Vector::new(v.clone()).map_err(|e| CliError::input(field, e))?,
        VectorSource::File { path } => {
            let inner: Vec<f64> = read_json(path, base, field)?;
            Vector::new(inner).map_err(|e| CliError::input(field, e))?
        }
    };
    if let Some(d) = dim {
        if v.dim() != d {
            return Err(CliError::input(field, format!("expected dimension {d}, found {}", v.dim())));
        }
    }
    Ok(v)
}

fn expect_shape(field: &str, op: &LinOp, rows: Option<usize>, cols: Option<usize>) -> CliResult<()> {
    if let Some(r) = rows.filter(|&r| r != op.rows()) {
        return Err(CliError::input(field, format!("expected {r} rows, found {}", op.rows())));
    }
    if let Some(c) = cols.filter(|&c| c != op.cols()) {
        return Err(CliError::input(field, format!("expected {c} columns, found {}", op.cols())));
    }
    Ok(())
}

fn check_atom(field: &str, atom: &Atom, dim: usize) -> CliResult<()> {
    atom.validate(dim).map_err(|e| CliError::input(field, e))
}

fn bcd_from_data(d: &BcdData, dims: Option<Dims>, base: &Path) -> CliResult<BcdProblem> {
    let dims = dims.ok_or_else(|| CliError::input("dims", "required with explicit data"))?;
    let a = load_matrix(&d.coupling.a, base, "bcd.coupling.a")?;
    let b = load_matrix(&d.coupling.b, base, "bcd.coupling.b")?;
    expect_shape("bcd.coupling.a", &a, dims.p, Some(dims.n))?;
    expect_shape("bcd.coupling.b", &b, Some(a.rows()), Some(dims.m))?;
    let c = load_vector(&d.coupling.c, base, "bcd.coupling.c", Some(a.rows()))?;
    check_atom("bcd.f", &d.f, dims.n)?;
    check_atom("bcd.g", &d.g, dims.m)?;
    let h = QuadraticCoupling::new(a, b, c, d.coupling.mu).map_err(|e| CliError::core("bcd.coupling", e))?;
    BcdProblem::new(d.f.clone(), d.g.clone(), Arc::new(h)).map_err(|e| CliError::core("bcd", e))
}

fn block_from_spec(s: &BlockSpec, base: &Path, field: &str, rows: Option<usize>, cols: usize) -> CliResult<AdmmBlock> {
    let a = load_matrix(&s.a, base, &format!("{field}.a"))?;
    expect_shape(&format!("{field}.a"), &a, rows, Some(cols))?;
    check_atom(&format!("{field}.atom"), &s.atom, cols)?;
    let smooth = match &s.smooth {
        None => None,
        Some(ls) => {
            let m = load_matrix(&ls.matrix, base, &format!("{field}.smooth.matrix"))?;
            expect_shape(&format!("{field}.smooth.matrix"), &m, None, Some(cols))?;
            let t = load_vector(&ls.target, base, &format!("{field}.smooth.target"), Some(m.rows()))?;
            Some(LeastSquares::new(m, t).map_err(|e| CliError::core(&format!("{field}.smooth"), e))?)
        }
    };
    Ok(AdmmBlock::new(s.atom.clone(), smooth, a))
}

fn admm_from_data(d: &AdmmData, dims: Option<Dims>, base: &Path) -> CliResult<(AdmmProblem, Vec<KktPair>)> {
    let dims = dims.ok_or_else(|| CliError::input("dims", "required with explicit data"))?;
    let b1 = block_from_spec(&d.block1, base, "admm.block1", dims.p, dims.n)?;
    let rows = b1.a.rows();
    let b2 = block_from_spec(&d.block2, base, "admm.block2", Some(rows), dims.m)?;
    let b = load_vector(&d.b, base, "admm.b", Some(rows))?;
    let mut p = AdmmProblem::new(b1, b2, b).map_err(|e| CliError::core("admm", e))?;
    if let Some(fp) = &d.feasible_point {
        let x1 = load_vector(&fp.x1, base, "admm.feasible_point.x1", Some(dims.n))?;
        let x2 = load_vector(&fp.x2, base, "admm.feasible_point.x2", Some(dims.m))?;
        p = p.with_feasible_point(x1, x2).map_err(|e| CliError::core("admm.feasible_point", e))?;
    }
    let mut refs = Vec::with_capacity(d.references.len());
    for (i, r) in d.references.iter().enumerate() {
        let f = format!("admm.references[{i}]");
        let pair = KktPair {
            x1: load_vector(&r.x1, base, &format!("{f}.x1"), Some(dims.n))?,
            x2: load_vector(&r.x2, base, &format!("{f}.x2"), Some(dims.m))?,
            y: load_vector(&r.y, base, &format!("{f}.y"), Some(rows))?,
        };
        let kkt = kkt_check(&p, &pair.x1, &pair.x2, &pair.y, REFERENCE_KKT_TOL).map_err(|e| CliError::core(&f, e))?;
        if !kkt.passed {
            return Err(CliError::input(
                f,
                format!("not a KKT pair at {REFERENCE_KKT_TOL:e} (max residual {:.3e})", kkt.max_residual()),
            ));
        }
        refs.push(pair);
    }
    Ok((p, refs))
}

/// Long tight ADMM run accepted as a reference only if it passes the KKT test.
fn computed_reference(p: &AdmmProblem) -> Option<KktPair> {
    let cfg = AdmmConfig::new(1.0, 1.0)
        .ok()?
        .with_max_iters(100_000)
        .ok()?
        .with_tolerances(1e-11, 1e-11)
        .ok()?;
    let t = run_admm(p, &cfg).ok()?;
    let last = t.last();
    let pair = KktPair {
        x1: last.x1.clone(),
        x2: last.x2.clone(),
        y: last.y.clone(),
    };
    kkt_check(p, &pair.x1, &pair.x2, &pair.y, REFERENCE_KKT_TOL)
        .ok()
        .filter(|k| k.passed)
        .map(|_| pair)
}
