//! High-accuracy reference solutions for weighted-ℓ1 least squares,
//! ½‖Mx − d‖² + Σᵢ wᵢ|xᵢ|, computed by restarted FISTA followed by a
//! support-restricted Newton polish.

use serde::{Deserialize, Serialize};

use crate::bcd::BcdProblem;
use crate::error::{Error, Result};
use crate::linalg::{ops, symmetric_eigenvalues, BlockPair, Cholesky, Vector};
use crate::prox::{soft_threshold, Atom};
use crate::smooth::{LeastSquares, SmoothFn};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightedLasso {
    pub ls: LeastSquares,
    pub weights: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceSolution {
    pub x: Vector,
    pub objective: f64,
    /// dist(0, ∂F(x))
    pub dist: f64,
    pub iterations: usize,
}

impl WeightedLasso {
    pub fn new(ls: LeastSquares, weights: Vec<f64>) -> Result<Self> {
        crate::error::check_dim("weights", ls.matrix.cols(), weights.len())?;
        if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::param("weights", "must be finite and >= 0"));
        }
        Ok(WeightedLasso { ls, weights })
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        self.ls.value(x) + x.iter().zip(&self.weights).map(|(v, w)| w * v.abs()).sum::<f64>()
    }

    pub fn stationarity(&self, x: &[f64]) -> f64 {
        let g = self.ls.gradient(x);
        let sq: f64 = x
            .iter()
            .zip(&g)
            .zip(&self.weights)
            .map(|((&xi, &gi), &w)| {
                let d = if xi > 0.0 {
                    gi + w
                } else if xi < 0.0 {
                    gi - w
                } else {
                    (gi.abs() - w).max(0.0)
                };
                d * d
            })
            .sum();
        sq.sqrt()
    }

    fn finish(&self, x: Vec<f64>, iterations: usize) -> Result<ReferenceSolution> {
        Ok(ReferenceSolution {
            objective: self.value(&x),
            dist: self.stationarity(&x),
            x: Vector::new(x)?,
            iterations,
        })
    }

    /// Solves to dist(0, ∂F) ≤ `tol`; errors after `max_iters` FISTA steps.
    pub fn solve(&self, tol: f64, max_iters: usize) -> Result<ReferenceSolution> {
        let n = self.weights.len();
        let hess = self.ls.hessian();
        let l = symmetric_eigenvalues(&hess)?.last().copied().unwrap_or(0.0).max(f64::MIN_POSITIVE) * (1.0 + 1e-12);
        let step = 1.0 / l;
        let mut x = vec![0.0; n];
        let mut x_prev = x.clone();
        let mut t = 1.0_f64;
        let mut polish_at = 50;
        for it in 1..=max_iters {
            let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
            let beta = (t - 1.0) / t_next;
            let v: Vec<f64> = x.iter().zip(&x_prev).map(|(a, b)| a + beta * (a - b)).collect();
            let g = self.ls.gradient(&v);
            let x_new: Vec<f64> = v
                .iter()
                .zip(&g)
                .zip(&self.weights)
                .map(|((vi, gi), w)| soft_threshold(vi - step * gi, step * w))
                .collect();
            let uphill = ops::dot(&ops::sub(&v, &x_new), &ops::sub(&x_new, &x)) > 0.0;
            x_prev = std::mem::replace(&mut x, x_new);
            if uphill {
                x_prev.clone_from(&x);
                t = 1.0;
            } else {
                t = t_next;
            }
            if self.stationarity(&x) <= tol {
                return self.finish(x, it);
            }
            if it == polish_at {
                polish_at *= 2;
                if let Some(p) = self.polish(&x) {
                    if self.stationarity(&p) <= tol {
                        return self.finish(p, it);
                    }
                }
            }
        }
        Err(Error::SolverFailure {
            iteration: max_iters,
            reason: format!("reference solve stalled at dist {:.3e}", self.stationarity(&x)),
        })
    }

    /// Solves the optimality system on the current support with fixed signs.
    fn polish(&self, x: &[f64]) -> Option<Vec<f64>> {
        let support: Vec<usize> = (0..x.len()).filter(|&i| x[i] != 0.0).collect();
        if support.is_empty() {
            return None;
        }
        let ms = self.ls.matrix.select_columns(&support).ok()?;
        let ch = Cholesky::factor(&ms.gram()).ok()?;
        let mut rhs = ms.adjoint_apply_slice(self.ls.target.as_slice());
        for (j, &i) in support.iter().enumerate() {
            rhs[j] -= self.weights[i] * x[i].signum();
        }
        let xs = ch.solve(&rhs);
        if support.iter().zip(&xs).any(|(&i, &v)| v.signum() != x[i].signum()) {
            return None;
        }
        let mut out = vec![0.0; x.len()];
        for (&i, v) in support.iter().zip(xs) {
            out[i] = v;
        }
        Some(out)
    }
}

fn l1_weight(atom: &Atom) -> Option<f64> {
    match atom {
        Atom::Zero => Some(0.0),
        Atom::L1 { weight } => Some(*weight),
        _ => None,
    }
}

/// Weighted-lasso form of a BCD problem with Zero/L1 atoms and a quadratic
/// coupling.
pub fn bcd_as_weighted_lasso(p: &BcdProblem) -> Result<WeightedLasso> {
    let unsupported = || Error::Unsupported("reference solve needs Zero/L1 atoms and a quadratic coupling".into());
    let q = p.coupling().as_quadratic().ok_or_else(unsupported)?;
    let (wf, wg) = (l1_weight(p.f()).ok_or_else(unsupported)?, l1_weight(p.g()).ok_or_else(unsupported)?);
    let (n, m) = p.dims();
    let mut weights = vec![wf; n];
    weights.extend(std::iter::repeat_n(wg, m));
    WeightedLasso::new(q.as_least_squares()?, weights)
}

/// Global minimizer of ψ for a convex BCD problem.
pub fn bcd_reference(p: &BcdProblem, tol: f64, max_iters: usize) -> Result<(BlockPair, ReferenceSolution)> {
    let wl = bcd_as_weighted_lasso(p)?;
    let sol = wl.solve(tol, max_iters)?;
    let z = BlockPair::split(sol.x.as_slice(), p.dims().0)?;
    Ok((z, sol))
}
