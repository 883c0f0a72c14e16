//! Subdifferentials of `atom + smooth` functions.
//!
//! For the convex atoms supported here the Fréchet, limiting and convex
//! subdifferentials coincide, and the sum rule gives
//! `∂(atom + s)(x) = ∂atom(x) + {∇s(x)}`. Every atom is separable, so
//! `∂atom(x)` is a product of closed intervals (half-lines at the boundary
//! of indicator domains) and distances are computed coordinatewise.
//!
//! General limiting subdifferentials have no terminating procedure; they are
//! only probed through [`closed_graph_spotcheck`] on explicit sequences.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::linalg::{ops, BlockPair, Vector};
use crate::prox::{Atom, ExtValue};
use crate::rng::Rng;
use crate::smooth::{SmoothCoupling, SmoothFn};

/// `atom(x) + smooth(x)` on a single block.
#[derive(Debug, Clone)]
pub struct StructuredFn {
    pub atom: Atom,
    pub smooth: Option<Arc<dyn SmoothFn>>,
}

impl StructuredFn {
    pub fn atom(atom: Atom) -> Self {
        StructuredFn { atom, smooth: None }
    }

    pub fn smooth(smooth: Arc<dyn SmoothFn>) -> Self {
        StructuredFn {
            atom: Atom::Zero,
            smooth: Some(smooth),
        }
    }

    pub fn new(atom: Atom, smooth: Option<Arc<dyn SmoothFn>>) -> Self {
        StructuredFn { atom, smooth }
    }

    fn check(&self, x: &[f64]) -> Result<()> {
        self.atom.validate(x.len())?;
        if let Some(s) = &self.smooth {
            check_dim("smooth part", s.dim(), x.len())?;
        }
        Ok(())
    }

    pub fn value_slice(&self, x: &[f64]) -> ExtValue {
        let s = self.smooth.as_ref().map_or(0.0, |s| s.value(x));
        self.atom.value_slice(x).plus(s)
    }

    pub fn value(&self, x: &Vector) -> Result<ExtValue> {
        self.check(x.as_slice())?;
        Ok(self.value_slice(x.as_slice()))
    }

    pub fn smooth_gradient(&self, x: &[f64]) -> Vec<f64> {
        self.smooth
            .as_ref()
            .map_or_else(|| vec![0.0; x.len()], |s| s.gradient(x))
    }
}

/// Per-coordinate closed intervals `[lo_i, hi_i]`; bounds may be infinite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubdiffInterval {
    pub bounds: Vec<(f64, f64)>,
}

impl SubdiffInterval {
    /// Euclidean distance from `p` to the box, by clamping.
    pub fn distance_from(&self, p: &[f64]) -> f64 {
        debug_assert_eq!(p.len(), self.bounds.len());
        p.iter()
            .zip(&self.bounds)
            .map(|(v, (lo, hi))| {
                let d = v - v.clamp(*lo, *hi);
                d * d
            })
            .sum::<f64>()
            .sqrt()
    }

    pub fn contains(&self, p: &[f64]) -> bool {
        p.iter()
            .zip(&self.bounds)
            .all(|(v, (lo, hi))| *v >= *lo && *v <= *hi)
    }
}

/// ∂atom(x) as intervals, or `None` when x is outside the atom's domain.
pub fn atom_subdiff(atom: &Atom, x: &[f64]) -> Result<Option<SubdiffInterval>> {
    atom.validate(x.len())?;
    let mut bounds = Vec::with_capacity(x.len());
    for (i, &v) in x.iter().enumerate() {
        let b = match atom {
            Atom::Zero => (0.0, 0.0),
            Atom::L1 { weight } => {
                if v == 0.0 {
                    (-weight, *weight)
                } else {
                    let s = weight * v.signum();
                    (s, s)
                }
            }
            Atom::SqL2 { weight } => {
                let g = 2.0 * weight * v;
                (g, g)
            }
            Atom::IndNonneg => {
                if v > 0.0 {
                    (0.0, 0.0)
                } else if v == 0.0 {
                    (f64::NEG_INFINITY, 0.0)
                } else {
                    return Ok(None);
                }
            }
            Atom::IndBox { lo, hi } => {
                let (l, h) = (lo[i], hi[i]);
                if v < l || v > h {
                    return Ok(None);
                }
                match (v == l, v == h) {
                    (true, true) => (f64::NEG_INFINITY, f64::INFINITY),
                    (true, false) => (f64::NEG_INFINITY, 0.0),
                    (false, true) => (0.0, f64::INFINITY),
                    (false, false) => (0.0, 0.0),
                }
            }
        };
        bounds.push(b);
    }
    Ok(Some(SubdiffInterval { bounds }))
}

/// dist(u, ∂F(x)) = dist(u − ∇smooth(x), ∂atom(x)).
pub fn subdiff_distance_from(f: &StructuredFn, x: &[f64], u: &[f64]) -> Result<ExtValue> {
    f.check(x)?;
    check_dim("subgradient", x.len(), u.len())?;
    let Some(interval) = atom_subdiff(&f.atom, x)? else {
        return Ok(ExtValue::Infinite);
    };
    let shifted = ops::sub(u, &f.smooth_gradient(x));
    Ok(ExtValue::Finite(interval.distance_from(&shifted)))
}

/// dist(0, ∂F(x)); `Infinite` when x is infeasible for an indicator atom.
pub fn subdiff_distance(f: &StructuredFn, x: &Vector) -> Result<ExtValue> {
    subdiff_distance_from(f, x.as_slice(), &vec![0.0; x.dim()])
}

/// dist(u, ∂F(x)) ≤ tol. Infeasible x is never a member.
pub fn membership(f: &StructuredFn, x: &Vector, u: &Vector, tol: f64) -> Result<bool> {
    Ok(subdiff_distance_from(f, x.as_slice(), u.as_slice())?
        .finite()
        .is_some_and(|d| d <= tol))
}

/// Number of log-spaced radii used by [`frechet_empirical_check`].
pub const FRECHET_RADII: usize = 16;

/// Sampled falsifier for Fréchet membership.
///
/// Tests `F(y) − F(x) − ⟨u, y − x⟩ ≥ −eps·‖y − x‖` along `n_samples` random
/// directions at [`FRECHET_RADII`] log-spaced radii in `[radius_min, 1]`.
/// A `false` result refutes `u ∈ ∂̂F(x)`; `true` proves nothing.
pub fn frechet_empirical_check(
    f: &StructuredFn,
    x: &Vector,
    u: &Vector,
    eps: f64,
    n_samples: usize,
    radius_min: f64,
    rng: &mut Rng,
) -> Result<bool> {
    if !(radius_min > 0.0 && radius_min <= 1.0) {
        return Err(Error::param("radius_min", "must lie in (0, 1]"));
    }
    check_dim("subgradient", x.dim(), u.dim())?;
    let Some(fx) = f.value(x)?.finite() else {
        return Ok(false);
    };
    let log_lo = radius_min.log10();
    for _ in 0..n_samples {
        let dir = rng.unit_vector(x.dim());
        for j in 0..FRECHET_RADII {
            let r = 10f64.powf(log_lo * (1.0 - j as f64 / (FRECHET_RADII - 1) as f64));
            let mut y = x.as_slice().to_vec();
            ops::axpy(r, &dir, &mut y);
            let Some(fy) = f.value_slice(&y).finite() else {
                continue;
            };
            let lin = r * ops::dot(u.as_slice(), &dir);
            if fy - fx - lin < -eps * r {
                return Ok(false);
            }
        }
    }
    Ok(true)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum GraphCheck {
    /// The limit pair is a member and values converge along the tail.
    Closed,
    LimitNotMember,
    ValuesNotConverging,
    /// Sequence pair `index` is not a member at the given tolerance.
    PreconditionFailed { index: usize },
}

/// `d_k → 0` along the tail: either already below `floor`, or the last half
/// shrinks to at most half the first half and ends below its smallest value.
fn tail_vanishes(d: &[f64], floor: f64) -> bool {
    let Some(&last) = d.last() else { return true };
    if last <= floor {
        return true;
    }
    if d.len() < 4 {
        return false;
    }
    let (head, tail) = d.split_at(d.len() / 2);
    let head_max = head.iter().cloned().fold(0.0, f64::max);
    let head_min = head.iter().cloned().fold(f64::INFINITY, f64::min);
    let tail_max = tail.iter().cloned().fold(0.0, f64::max);
    tail_max <= 0.5 * head_max && last <= head_min
}

/// One-sequence probe of the closed-graph property of ∂F.
///
/// Checks each `(xs[k], us[k])` is a member at `tol`, then that
/// `(x_lim, u_lim)` is a member at `10·tol` and that `xs → x_lim`,
/// `us → u_lim`, `F(xs) → F(x_lim)` along the tail. This exercises one
/// sequence; it does not establish closedness of the whole graph.
pub fn closed_graph_spotcheck(
    f: &StructuredFn,
    xs: &[Vector],
    us: &[Vector],
    x_lim: &Vector,
    u_lim: &Vector,
    tol: f64,
) -> Result<GraphCheck> {
    if xs.len() != us.len() {
        return Err(Error::Mismatch(format!(
            "sequence lengths differ: {} points, {} subgradients",
            xs.len(),
            us.len()
        )));
    }
    for (k, (x, u)) in xs.iter().zip(us).enumerate() {
        if !membership(f, x, u, tol)? {
            return Ok(GraphCheck::PreconditionFailed { index: k });
        }
    }
    if !membership(f, x_lim, u_lim, 10.0 * tol)? {
        return Ok(GraphCheck::LimitNotMember);
    }
    let Some(f_lim) = f.value(x_lim)?.finite() else {
        return Ok(GraphCheck::LimitNotMember);
    };
    let floor = (10.0 * tol).max(1e-12);
    let mut dv = Vec::with_capacity(xs.len());
    let mut dx = Vec::with_capacity(xs.len());
    let mut du = Vec::with_capacity(xs.len());
    for (x, u) in xs.iter().zip(us) {
        dv.push((f.value(x)?.as_f64() - f_lim).abs());
        dx.push(x.dist(x_lim)?);
        du.push(u.dist(u_lim)?);
    }
    if tail_vanishes(&dv, floor) && tail_vanishes(&dx, floor) && tail_vanishes(&du, floor) {
        Ok(GraphCheck::Closed)
    } else {
        Ok(GraphCheck::ValuesNotConverging)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FdReport {
    pub error: f64,
    /// `false` when the analytic gradient is (numerically) zero and the
    /// absolute error is reported instead.
    pub relative: bool,
}

/// Central-difference check of the smooth part's gradient.
///
/// Returns `max_i |fd_i − g_i| / ‖g‖_∞`, or the absolute error when
/// `‖g‖_∞ < 1e-8`.
pub fn grad_fd_check(f: &StructuredFn, x: &Vector, h: f64) -> Result<FdReport> {
    if !(h > 0.0) || !h.is_finite() {
        return Err(Error::param("h", format!("must be positive, got {h}")));
    }
    if f.atom != Atom::Zero {
        return Err(Error::Unsupported(format!(
            "finite differences need a smooth function, atom is {}",
            f.atom.name()
        )));
    }
    f.check(x.as_slice())?;
    let g = f.smooth_gradient(x.as_slice());
    let value = |v: &[f64]| f.smooth.as_ref().map_or(0.0, |s| s.value(v));
    let mut point = x.as_slice().to_vec();
    let mut err = 0.0_f64;
    for i in 0..point.len() {
        let orig = point[i];
        point[i] = orig + h;
        let fp = value(&point);
        point[i] = orig - h;
        let fm = value(&point);
        point[i] = orig;
        let fd = (fp - fm) / (2.0 * h);
        err = err.max((fd - g[i]).abs());
    }
    let scale = ops::norm_inf(&g);
    if scale < 1e-8 {
        Ok(FdReport {
            error: err,
            relative: false,
        })
    } else {
        Ok(FdReport {
            error: err / scale,
            relative: true,
        })
    }
}

/// Blockwise (dist(0, ∂ₓψ(z)), dist(0, ∂ᵧψ(z))) for ψ = f(x) + g(y) + H(x, y).
pub fn block_subdiff_distance(
    f: &Atom,
    g: &Atom,
    coupling: &dyn SmoothCoupling,
    z: &BlockPair,
) -> Result<(ExtValue, ExtValue)> {
    let (n, m) = coupling.dims();
    check_dim("x block", n, z.x.dim())?;
    check_dim("y block", m, z.y.dim())?;
    let (x, y) = (z.x.as_slice(), z.y.as_slice());
    let neg = |v: Vec<f64>| v.into_iter().map(|t| -t).collect::<Vec<_>>();
    let dx = match atom_subdiff(f, x)? {
        Some(iv) => ExtValue::Finite(iv.distance_from(&neg(coupling.grad_x(x, y)))),
        None => ExtValue::Infinite,
    };
    let dy = match atom_subdiff(g, y)? {
        Some(iv) => ExtValue::Finite(iv.distance_from(&neg(coupling.grad_y(x, y)))),
        None => ExtValue::Infinite,
    };
    Ok((dx, dy))
}

/// dist(0, ∂ₓψ) + dist(0, ∂ᵧψ) ≤ tol.
pub fn critical_point_check(
    f: &Atom,
    g: &Atom,
    coupling: &dyn SmoothCoupling,
    z: &BlockPair,
    tol: f64,
) -> Result<bool> {
    let (dx, dy) = block_subdiff_distance(f, g, coupling, z)?;
    Ok(match (dx, dy) {
        (ExtValue::Finite(a), ExtValue::Finite(b)) => a + b <= tol,
        _ => false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::LinOp;
    use crate::smooth::{LeastSquares, QuadraticCoupling};

    fn v(x: &[f64]) -> Vector {
        Vector::from_slice(x).unwrap()
    }

    fn half_sq(dim: usize) -> Arc<dyn SmoothFn> {
        Arc::new(LeastSquares::new(LinOp::identity(dim).unwrap(), Vector::zeros(dim)).unwrap())
    }

    fn abs() -> StructuredFn {
        StructuredFn::atom(Atom::L1 { weight: 1.0 })
    }

    #[test]
    fn distance_examples() {
        assert_eq!(subdiff_distance(&abs(), &v(&[0.0])).unwrap(), ExtValue::Finite(0.0));

        // |u| + ½(u − 3)² at u = 2
        let shifted = Arc::new(LeastSquares::new(LinOp::identity(1).unwrap(), v(&[3.0])).unwrap());
        let f = StructuredFn::new(Atom::L1 { weight: 1.0 }, Some(shifted));
        assert_eq!(subdiff_distance(&f, &v(&[2.0])).unwrap(), ExtValue::Finite(0.0));

        let q = StructuredFn::smooth(half_sq(2));
        let d = subdiff_distance(&q, &v(&[1.0, 1.0])).unwrap().finite().unwrap();
        assert!((d - 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn infeasible_indicator_is_infinite() {
        let f = StructuredFn::atom(Atom::IndNonneg);
        assert_eq!(subdiff_distance(&f, &v(&[-1.0])).unwrap(), ExtValue::Infinite);
        assert!(!membership(&f, &v(&[-1.0]), &v(&[0.0]), 1.0).unwrap());
        // boundary point: normal cone (−∞, 0]
        assert!(membership(&f, &v(&[0.0]), &v(&[-5.0]), 0.0).unwrap());
        assert!(!membership(&f, &v(&[0.0]), &v(&[0.5]), 0.1).unwrap());
    }

    #[test]
    fn membership_examples() {
        assert!(membership(&abs(), &v(&[0.0]), &v(&[0.5]), 0.0).unwrap());
        assert!(!membership(&abs(), &v(&[0.0]), &v(&[1.2]), 0.1).unwrap());
        let q = StructuredFn::smooth(half_sq(1));
        assert!(membership(&q, &v(&[2.0]), &v(&[2.0]), 1e-9).unwrap());
    }

    #[test]
    fn frechet_examples() {
        let mut rng = Rng::new(9);
        let q = StructuredFn::smooth(half_sq(1));
        assert!(frechet_empirical_check(&q, &v(&[1.0]), &v(&[1.0]), 1e-3, 64, 1e-6, &mut rng).unwrap());
        assert!(!frechet_empirical_check(&q, &v(&[1.0]), &v(&[2.0]), 1e-3, 64, 1e-6, &mut rng).unwrap());
        assert!(frechet_empirical_check(&abs(), &v(&[0.0]), &v(&[0.999]), 1e-6, 64, 1e-6, &mut rng).unwrap());
    }

    #[test]
    fn closed_graph_examples() {
        let f = abs();
        let xs: Vec<Vector> = (1..=50).map(|k| v(&[1.0 / k as f64])).collect();
        let us: Vec<Vector> = (1..=50).map(|_| v(&[1.0])).collect();
        assert_eq!(
            closed_graph_spotcheck(&f, &xs, &us, &v(&[0.0]), &v(&[1.0]), 1e-12).unwrap(),
            GraphCheck::Closed
        );
        let constant = vec![v(&[0.0]); 5];
        let halves = vec![v(&[0.5]); 5];
        assert_eq!(
            closed_graph_spotcheck(&f, &constant, &halves, &v(&[0.0]), &v(&[0.5]), 0.0).unwrap(),
            GraphCheck::Closed
        );
        let bad: Vec<Vector> = (1..=50).map(|k| v(&[1.0 + 1.0 / k as f64])).collect();
        assert_eq!(
            closed_graph_spotcheck(&f, &xs, &bad, &v(&[0.0]), &v(&[1.0]), 0.0).unwrap(),
            GraphCheck::PreconditionFailed { index: 0 }
        );
        assert!(closed_graph_spotcheck(&f, &xs, &us[..3], &v(&[0.0]), &v(&[1.0]), 0.0).is_err());
    }

    #[test]
    fn fd_check_quadratic_and_errors() {
        let q = StructuredFn::smooth(half_sq(3));
        let r = grad_fd_check(&q, &v(&[0.3, -1.0, 2.0]), 1e-5).unwrap();
        assert!(r.relative && r.error < 1e-9);
        let z = grad_fd_check(&q, &v(&[0.0, 0.0, 0.0]), 1e-5).unwrap();
        assert!(!z.relative && z.error < 1e-8);
        assert!(grad_fd_check(&q, &v(&[1.0, 1.0, 1.0]), 0.0).is_err());
        assert!(grad_fd_check(&abs(), &v(&[1.0]), 1e-5).is_err());
    }

    #[test]
    fn critical_point_examples() {
        let h = QuadraticCoupling::new(
            LinOp::zeros(1, 2).unwrap(),
            LinOp::zeros(1, 1).unwrap(),
            Vector::zeros(1),
            1.0,
        )
        .unwrap();
        let zero = BlockPair::zeros(2, 1);
        assert!(critical_point_check(&Atom::Zero, &Atom::Zero, &h, &zero, 1e-12).unwrap());
        let z = BlockPair::new(v(&[1.0, 0.0]), v(&[0.0]));
        assert!(!critical_point_check(&Atom::Zero, &Atom::Zero, &h, &z, 0.5).unwrap());
    }
}
