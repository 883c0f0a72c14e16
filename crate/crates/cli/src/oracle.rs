//! Brute-force oracles next to the analytic paths.

use std::sync::Arc;

use blockopt_core::prox::{prox, prox_oracle_1d};
use blockopt_core::smooth::{CouplingInX, CouplingInY, SmoothFn};
use blockopt_core::subdiff::{grad_fd_check, subdiff_distance_from, StructuredFn};
use blockopt_core::{Atom, Vector};

use crate::error::{CliError, CliResult};

pub const ATOM_NAMES: [&str; 5] = ["zero", "l1", "sq-l2", "ind-nonneg", "ind-box"];

/// Atom of dimension `dim` from command-line parameters.
pub fn atom_from_args(name: &str, lambda: Option<f64>, lo: Option<f64>, hi: Option<f64>, dim: usize) -> CliResult<Atom> {
    let weight = || lambda.ok_or_else(|| CliError::input("--lambda", format!("required for atom {name}")));
    let atom = match name {
        "zero" => Atom::Zero,
        "l1" => Atom::L1 { weight: weight()? },
        "sq-l2" => Atom::SqL2 { weight: weight()? },
        "ind-nonneg" => Atom::IndNonneg,
        "ind-box" => {
            let lo = lo.ok_or_else(|| CliError::input("--lo", "required for atom ind-box"))?;
            let hi = hi.ok_or_else(|| CliError::input("--hi", "required for atom ind-box"))?;
            let fill = |v: f64, f: &str| Vector::filled(dim, v).map_err(|e| CliError::input(f.to_string(), e));
            Atom::IndBox {
                lo: fill(lo, "--lo")?,
                hi: fill(hi, "--hi")?,
            }
        }
        other => {
            return Err(CliError::input(
                "--atom",
                format!("unsupported atom '{other}' (expected one of {})", ATOM_NAMES.join(", ")),
            ))
        }
    };
    atom.validate(dim).map_err(|e| CliError::input("--atom", e))?;
    Ok(atom)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Comparison {
    pub analytic: f64,
    pub oracle: f64,
}

impl Comparison {
    pub fn difference(&self) -> f64 {
        (self.analytic - self.oracle).abs()
    }

    pub fn render(&self, oracle_name: &str) -> String {
        format!(
            "analytic   {:.16e}\n{oracle_name:<10} {:.16e}\ndifference {:.3e}\n",
            self.analytic,
            self.oracle,
            self.difference()
        )
    }
}

/// Scaled prox at a scalar point: closed form against the grid scan over
/// x ∓ `half_width`.
pub fn prox_compare(atom: &Atom, t: f64, x: f64, step: f64, half_width: f64) -> CliResult<Comparison> {
    let xv = Vector::from_slice(&[x]).map_err(|e| CliError::input("--x", e))?;
    let analytic = prox(atom, t, &xv).map_err(|e| CliError::core("", e))?.point[0];
    let oracle = prox_oracle_1d(
        |u| t * atom.coordinate_value(0, u).as_f64(),
        x,
        x - half_width,
        x + half_width,
        step,
    )
    .map_err(|e| CliError::core("", e))?;
    Ok(Comparison { analytic, oracle })
}

/// dist(u, ∂a(x)): analytic interval distance against one-sided difference
/// quotients `[(a(x) − a(x − h))/h, (a(x + h) − a(x))/h]` per coordinate.
pub fn subdiff_compare(atom: &Atom, x: &[f64], u: &[f64], h: f64) -> CliResult<Comparison> {
    if x.len() != u.len() {
        return Err(CliError::input("--u", format!("expected dimension {}, found {}", x.len(), u.len())));
    }
    if !(h > 0.0 && h.is_finite()) {
        return Err(CliError::input("--h", "must be positive"));
    }
    let f = StructuredFn::atom(atom.clone());
    let analytic = subdiff_distance_from(&f, x, u).map_err(|e| CliError::core("", e))?.as_f64();
    let mut sq = 0.0;
    for (i, (&xi, &ui)) in x.iter().zip(u).enumerate() {
        let v = |s: f64| atom.coordinate_value(i, s).as_f64();
        let at = v(xi);
        if at.is_infinite() {
            return Ok(Comparison {
                analytic,
                oracle: f64::INFINITY,
            });
        }
        // an infinite side quotient leaves that end of the interval open
        let left = (at - v(xi - h)) / h;
        let right = (v(xi + h) - at) / h;
        let d = if ui < left { left - ui } else if ui > right { ui - right } else { 0.0 };
        sq += d * d;
    }
    Ok(Comparison {
        analytic,
        oracle: sq.sqrt(),
    })
}

/// Largest relative central-difference error over the smooth parts.
pub fn grad_compare(parts: &[Arc<dyn SmoothFn>], points: &[Vec<f64>], h: f64) -> CliResult<f64> {
    let mut worst = 0.0_f64;
    for (s, x) in parts.iter().zip(points) {
        let f = StructuredFn::smooth(s.clone());
        let xv = Vector::new(x.clone()).map_err(|e| CliError::input("--x", e))?;
        let r = grad_fd_check(&f, &xv, h).map_err(|e| CliError::core("", e))?;
        worst = worst.max(r.error);
    }
    Ok(worst)
}

pub fn coupling_parts(
    coupling: &Arc<dyn blockopt_core::smooth::SmoothCoupling>,
    x: &[f64],
    y: &[f64],
) -> Vec<Arc<dyn SmoothFn>> {
    vec![
        Arc::new(CouplingInX {
            coupling: coupling.clone(),
            y: y.to_vec(),
        }),
        Arc::new(CouplingInY {
            coupling: coupling.clone(),
            x: x.to_vec(),
        }),
    ]
}
