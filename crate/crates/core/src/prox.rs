//! Convex atoms and their scaled proximal operators.
//!
//! `prox(a, t, x)` returns the unique minimiser of `t·a(u) + ½‖u − x‖²`.
//! Every supported atom is proper, lsc and convex, so the minimiser is a
//! single point. Conventions: `L1(λ)` is `λ‖u‖₁`, `SqL2(λ)` is `λ‖u‖²`.

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::exec::{self, Mode};
use crate::linalg::{ops, Vector};
use crate::rng::Rng;

/// Function value on the extended reals. Indicator atoms report points
/// outside their domain as `Infinite`, never as a float.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum ExtValue {
    Finite(f64),
    Infinite,
}

impl ExtValue {
    pub fn finite(self) -> Option<f64> {
        match self {
            ExtValue::Finite(v) => Some(v),
            ExtValue::Infinite => None,
        }
    }

    pub fn is_finite(self) -> bool {
        matches!(self, ExtValue::Finite(_))
    }

    pub fn plus(self, v: f64) -> ExtValue {
        match self {
            ExtValue::Finite(a) => ExtValue::Finite(a + v),
            ExtValue::Infinite => ExtValue::Infinite,
        }
    }

    /// Maps `Infinite` to `f64::INFINITY` for comparisons.
    pub fn as_f64(self) -> f64 {
        self.finite().unwrap_or(f64::INFINITY)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Atom {
    Zero,
    L1 { weight: f64 },
    SqL2 { weight: f64 },
    IndNonneg,
    IndBox { lo: Vector, hi: Vector },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProxResult {
    pub point: Vector,
    /// `t·a(point) + ½‖point − x‖²`
    pub objective: f64,
}

impl Atom {
    pub fn name(&self) -> &'static str {
        match self {
            Atom::Zero => "zero",
            Atom::L1 { .. } => "l1",
            Atom::SqL2 { .. } => "sq-l2",
            Atom::IndNonneg => "ind-nonneg",
            Atom::IndBox { .. } => "ind-box",
        }
    }

    /// Checks parameters, and dimensions against `dim` for box atoms.
    pub fn validate(&self, dim: usize) -> Result<()> {
        match self {
            Atom::L1 { weight } | Atom::SqL2 { weight } => {
                if !weight.is_finite() || *weight < 0.0 {
                    return Err(Error::InvalidAtom(format!(
                        "{}: weight must be finite and >= 0, got {weight}",
                        self.name()
                    )));
                }
            }
            Atom::IndBox { lo, hi } => {
                check_dim("box lower bound", dim, lo.dim())?;
                check_dim("box upper bound", dim, hi.dim())?;
                if let Some(i) = (0..dim).find(|&i| lo[i] > hi[i]) {
                    return Err(Error::InvalidAtom(format!(
                        "ind-box: lo[{i}] = {} exceeds hi[{i}] = {}",
                        lo[i], hi[i]
                    )));
                }
            }
            Atom::Zero | Atom::IndNonneg => {}
        }
        Ok(())
    }

    pub fn is_indicator(&self) -> bool {
        matches!(self, Atom::IndNonneg | Atom::IndBox { .. })
    }

    pub fn is_strictly_convex(&self) -> bool {
        matches!(self, Atom::SqL2 { weight } if *weight > 0.0)
    }

    /// One-dimensional restriction acting on coordinate `i`.
    pub fn coordinate(&self, i: usize) -> Atom {
        match self {
            Atom::IndBox { lo, hi } => Atom::IndBox {
                lo: Vector::filled(1, lo[i]).expect("finite bound"),
                hi: Vector::filled(1, hi[i]).expect("finite bound"),
            },
            other => other.clone(),
        }
    }

    /// Value of coordinate `i`'s summand at `v`.
    pub fn coordinate_value(&self, i: usize, v: f64) -> ExtValue {
        match self {
            Atom::Zero => ExtValue::Finite(0.0),
            Atom::L1 { weight } => ExtValue::Finite(weight * v.abs()),
            Atom::SqL2 { weight } => ExtValue::Finite(weight * v * v),
            Atom::IndNonneg => {
                if v >= 0.0 {
                    ExtValue::Finite(0.0)
                } else {
                    ExtValue::Infinite
                }
            }
            Atom::IndBox { lo, hi } => {
                if v >= lo[i] && v <= hi[i] {
                    ExtValue::Finite(0.0)
                } else {
                    ExtValue::Infinite
                }
            }
        }
    }

    pub fn value_slice(&self, x: &[f64]) -> ExtValue {
        match self {
            Atom::Zero => ExtValue::Finite(0.0),
            Atom::L1 { weight } => ExtValue::Finite(weight * x.iter().map(|v| v.abs()).sum::<f64>()),
            Atom::SqL2 { weight } => ExtValue::Finite(weight * ops::norm_sq(x)),
            _ => {
                let feasible = x
                    .iter()
                    .enumerate()
                    .all(|(i, v)| self.coordinate_value(i, *v).is_finite());
                if feasible {
                    ExtValue::Finite(0.0)
                } else {
                    ExtValue::Infinite
                }
            }
        }
    }

    pub fn value(&self, x: &Vector) -> Result<ExtValue> {
        self.validate(x.dim())?;
        Ok(self.value_slice(x.as_slice()))
    }

    pub fn is_feasible(&self, x: &Vector) -> Result<bool> {
        Ok(self.value(x)?.is_finite())
    }

    /// Nearest point of the atom's domain (identity for full-domain atoms).
    pub fn project_feasible(&self, x: &Vector) -> Result<Vector> {
        self.validate(x.dim())?;
        match self {
            Atom::IndNonneg | Atom::IndBox { .. } => Ok(self.prox_slice(1.0, x.as_slice()).0),
            _ => Ok(x.clone()),
        }
    }

    fn prox_slice(&self, t: f64, x: &[f64]) -> (Vector, f64) {
        let u: Vec<f64> = match self {
            Atom::Zero => x.to_vec(),
            Atom::L1 { weight } => {
                let thr = t * weight;
                x.iter().map(|v| soft_threshold(*v, thr)).collect()
            }
            Atom::SqL2 { weight } => {
                let s = 1.0 / (1.0 + 2.0 * t * weight);
                x.iter().map(|v| v * s).collect()
            }
            Atom::IndNonneg => x.iter().map(|v| v.max(0.0)).collect(),
            Atom::IndBox { lo, hi } => x
                .iter()
                .enumerate()
                .map(|(i, v)| v.clamp(lo[i], hi[i]))
                .collect(),
        };
        let fu = self.value_slice(&u).as_f64();
        let objective = t * fu + 0.5 * ops::dist(&u, x).powi(2);
        (Vector::new(u).expect("prox of finite input is finite"), objective)
    }
}

#[inline]
pub fn soft_threshold(v: f64, thr: f64) -> f64 {
    if v > thr {
        v - thr
    } else if v < -thr {
        v + thr
    } else {
        0.0
    }
}

fn check_step(t: f64) -> Result<()> {
    if t.is_finite() && t > 0.0 {
        Ok(())
    } else {
        Err(Error::param("t", format!("step must be a positive finite real, got {t}")))
    }
}

/// Scaled proximal operator `argmin_u t·a(u) + ½‖u − x‖²`.
pub fn prox(a: &Atom, t: f64, x: &Vector) -> Result<ProxResult> {
    check_step(t)?;
    a.validate(x.dim())?;
    let (point, objective) = a.prox_slice(t, x.as_slice());
    Ok(ProxResult { point, objective })
}

/// Default oracle window `x ∓ 10(1 + |x|)`.
pub fn default_window(x: f64) -> (f64, f64) {
    let w = 10.0 * (1.0 + x.abs());
    (x - w, x + w)
}

/// Exhaustive grid minimiser of `f(u) + ½(u − x)²` over `lo + i·step ≤ hi`.
///
/// Non-finite `f` values are treated as outside the domain. Ties go to the
/// smallest `u`.
pub fn prox_oracle_1d<F>(f: F, x: f64, lo: f64, hi: f64, step: f64) -> Result<f64>
where
    F: Fn(f64) -> f64 + Sync + Send,
{
    prox_oracle_1d_with(Mode::default(), f, x, lo, hi, step)
}

pub fn prox_oracle_1d_with<F>(mode: Mode, f: F, x: f64, lo: f64, hi: f64, step: f64) -> Result<f64>
where
    F: Fn(f64) -> f64 + Sync + Send,
{
    if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
        return Err(Error::param("window", format!("need finite lo < hi, got [{lo}, {hi}]")));
    }
    if !(step > 0.0) || step > (hi - lo) / 10.0 {
        return Err(Error::param(
            "step",
            format!("must lie in (0, (hi - lo)/10], got {step}"),
        ));
    }
    let count = ((hi - lo) / step).floor() as usize + 1;
    let best = exec::map_chunks(mode, count, 1 << 16, |range| {
        let mut best: Option<(f64, usize)> = None;
        for i in range {
            let u = lo + i as f64 * step;
            let val = f(u) + 0.5 * (u - x) * (u - x);
            if !val.is_finite() {
                continue;
            }
            if best.is_none_or(|(b, _)| val < b) {
                best = Some((val, i));
            }
        }
        best
    })
    .into_iter()
    .flatten()
    .fold(None::<(f64, usize)>, |acc, (v, i)| match acc {
        Some((bv, bi)) if bv < v || (bv == v && bi < i) => Some((bv, bi)),
        _ => Some((v, i)),
    });
    match best {
        Some((_, i)) => Ok(lo + i as f64 * step),
        None => Err(Error::InsufficientData(
            "objective is non-finite on the whole grid".into(),
        )),
    }
}

/// Grid oracle for a one-dimensional atom scaled by `t`, over the default
/// window.
pub fn prox_oracle_atom_1d(a: &Atom, t: f64, x: f64, step: f64) -> Result<f64> {
    check_step(t)?;
    a.validate(1)?;
    let (lo, hi) = default_window(x);
    prox_oracle_1d(|u| t * a.coordinate_value(0, u).as_f64(), x, lo, hi, step)
}

/// Sampled global-minimality test for a candidate prox point `u`.
///
/// Draws `n_samples` points around `u` at log-uniform radii in [1e-4, 1]
/// and checks that none improves `t·a(·) + ½‖· − x‖²` by more than 1e-10.
pub fn prox_objective_optimality(
    a: &Atom,
    t: f64,
    x: &Vector,
    u: &Vector,
    n_samples: usize,
    rng: &mut Rng,
) -> Result<bool> {
    check_step(t)?;
    check_dim("prox optimality", x.dim(), u.dim())?;
    a.validate(x.dim())?;
    let objective = |v: &[f64]| t * a.value_slice(v).as_f64() + 0.5 * ops::dist(v, x.as_slice()).powi(2);
    let base = objective(u.as_slice());
    if !base.is_finite() {
        return Ok(false);
    }
    for _ in 0..n_samples {
        let radius = 10f64.powf(rng.uniform(-4.0, 0.0));
        let dir = rng.unit_vector(u.dim());
        let mut v = u.as_slice().to_vec();
        ops::axpy(radius, &dir, &mut v);
        if objective(&v) + 1e-10 < base {
            return Ok(false);
        }
    }
    Ok(true)
}
