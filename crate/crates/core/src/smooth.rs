//! Differentiable pieces: single-block smooth functions and two-block
//! couplings H(x, y) with a Lipschitz-continuous gradient.

use std::fmt::Debug;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::linalg::{ops, BlockPair, LinOp, Vector};
use crate::rng::Rng;

/// Safety factor applied to power-iteration norm estimates when they are
/// turned into Lipschitz constants.
pub const LIPSCHITZ_SAFETY: f64 = 1.01;

const NORM_ESTIMATE_ITERS: usize = 1000;
const NORM_ESTIMATE_SEED: u64 = 0x5EED_0F1A;

pub trait SmoothFn: Send + Sync + Debug {
    fn dim(&self) -> usize;
    fn value(&self, x: &[f64]) -> f64;
    fn gradient(&self, x: &[f64]) -> Vec<f64>;
}

pub trait SmoothCoupling: Send + Sync + Debug {
    fn dims(&self) -> (usize, usize);
    fn value(&self, x: &[f64], y: &[f64]) -> f64;
    fn grad_x(&self, x: &[f64], y: &[f64]) -> Vec<f64>;
    fn grad_y(&self, x: &[f64], y: &[f64]) -> Vec<f64>;
    /// Lipschitz constant l of the full gradient in the product ℓ2 norm.
    fn lipschitz(&self) -> f64;

    fn as_quadratic(&self) -> Option<&QuadraticCoupling> {
        None
    }
}

/// ½‖M x − d‖²
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeastSquares {
    pub matrix: LinOp,
    pub target: Vector,
}

impl LeastSquares {
    pub fn new(matrix: LinOp, target: Vector) -> Result<Self> {
        check_dim("least squares target", matrix.rows(), target.dim())?;
        Ok(LeastSquares { matrix, target })
    }

    pub fn residual(&self, x: &[f64]) -> Vec<f64> {
        ops::sub(&self.matrix.apply_slice(x), self.target.as_slice())
    }

    /// MᵀM
    pub fn hessian(&self) -> LinOp {
        self.matrix.gram()
    }
}

impl SmoothFn for LeastSquares {
    fn dim(&self) -> usize {
        self.matrix.cols()
    }

    fn value(&self, x: &[f64]) -> f64 {
        0.5 * ops::norm_sq(&self.residual(x))
    }

    fn gradient(&self, x: &[f64]) -> Vec<f64> {
        self.matrix.adjoint_apply_slice(&self.residual(x))
    }
}

/// H(x, y) = ½‖A x + B y − c‖² + (μ/2)(‖x‖² + ‖y‖²)
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticCoupling {
    a: LinOp,
    b: LinOp,
    c: Vector,
    mu: f64,
    lipschitz: f64,
}

impl QuadraticCoupling {
    /// Lipschitz constant set to `1.01·‖[A B]‖²_est + μ`.
    pub fn new(a: LinOp, b: LinOp, c: Vector, mu: f64) -> Result<Self> {
        check_dim("coupling rows", a.rows(), b.rows())?;
        check_dim("coupling target", a.rows(), c.dim())?;
        if !mu.is_finite() || mu < 0.0 {
            return Err(Error::param("mu", format!("must be finite and >= 0, got {mu}")));
        }
        let stacked = LinOp::hstack(&a, &b)?;
        let mut rng = Rng::new(NORM_ESTIMATE_SEED);
        let sigma = stacked.op_norm_estimate(NORM_ESTIMATE_ITERS, &mut rng)?;
        let lipschitz = LIPSCHITZ_SAFETY * sigma * sigma + mu;
        if !(lipschitz > 0.0) {
            return Err(Error::param("coupling", "gradient Lipschitz constant must be positive"));
        }
        Ok(QuadraticCoupling {
            a,
            b,
            c,
            mu,
            lipschitz,
        })
    }

    pub fn a(&self) -> &LinOp {
        &self.a
    }

    pub fn b(&self) -> &LinOp {
        &self.b
    }

    pub fn c(&self) -> &Vector {
        &self.c
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    fn residual(&self, x: &[f64], y: &[f64]) -> Vec<f64> {
        let mut r = self.a.apply_slice(x);
        ops::axpy(1.0, &self.b.apply_slice(y), &mut r);
        ops::axpy(-1.0, self.c.as_slice(), &mut r);
        r
    }

    /// Full Hessian [A B]ᵀ[A B] + μI.
    pub fn hessian(&self) -> Result<LinOp> {
        let g = LinOp::hstack(&self.a, &self.b)?.gram();
        let n = g.cols();
        g.add(&LinOp::identity(n)?.scaled(self.mu)?)
    }

    /// Same objective written as ½‖M z − d‖² with M = [A B; √μ I], d = [c; 0].
    pub fn as_least_squares(&self) -> Result<LeastSquares> {
        let stacked = LinOp::hstack(&self.a, &self.b)?;
        let n = stacked.cols();
        let (matrix, target) = if self.mu > 0.0 {
            let m = LinOp::vstack(&stacked, &LinOp::identity(n)?.scaled(self.mu.sqrt())?)?;
            let mut d = self.c.as_slice().to_vec();
            d.extend(std::iter::repeat_n(0.0, n));
            (m, Vector::new(d)?)
        } else {
            (stacked, self.c.clone())
        };
        LeastSquares::new(matrix, target)
    }
}

impl SmoothCoupling for QuadraticCoupling {
    fn dims(&self) -> (usize, usize) {
        (self.a.cols(), self.b.cols())
    }

    fn value(&self, x: &[f64], y: &[f64]) -> f64 {
        0.5 * ops::norm_sq(&self.residual(x, y)) + 0.5 * self.mu * (ops::norm_sq(x) + ops::norm_sq(y))
    }

    fn grad_x(&self, x: &[f64], y: &[f64]) -> Vec<f64> {
        let mut g = self.a.adjoint_apply_slice(&self.residual(x, y));
        ops::axpy(self.mu, x, &mut g);
        g
    }

    fn grad_y(&self, x: &[f64], y: &[f64]) -> Vec<f64> {
        let mut g = self.b.adjoint_apply_slice(&self.residual(x, y));
        ops::axpy(self.mu, y, &mut g);
        g
    }

    fn lipschitz(&self) -> f64 {
        self.lipschitz
    }

    fn as_quadratic(&self) -> Option<&QuadraticCoupling> {
        Some(self)
    }
}

/// x ↦ H(x, y) for a frozen y.
#[derive(Debug, Clone)]
pub struct CouplingInX {
    pub coupling: Arc<dyn SmoothCoupling>,
    pub y: Vec<f64>,
}

impl SmoothFn for CouplingInX {
    fn dim(&self) -> usize {
        self.coupling.dims().0
    }
    fn value(&self, x: &[f64]) -> f64 {
        self.coupling.value(x, &self.y)
    }
    fn gradient(&self, x: &[f64]) -> Vec<f64> {
        self.coupling.grad_x(x, &self.y)
    }
}

/// y ↦ H(x, y) for a frozen x.
#[derive(Debug, Clone)]
pub struct CouplingInY {
    pub coupling: Arc<dyn SmoothCoupling>,
    pub x: Vec<f64>,
}

impl SmoothFn for CouplingInY {
    fn dim(&self) -> usize {
        self.coupling.dims().1
    }
    fn value(&self, y: &[f64]) -> f64 {
        self.coupling.value(&self.x, y)
    }
    fn gradient(&self, y: &[f64]) -> Vec<f64> {
        self.coupling.grad_y(&self.x, y)
    }
}

/// Full gradient (∇ₓH, ∇ᵧH) at z.
pub fn coupling_gradient(h: &dyn SmoothCoupling, z: &BlockPair) -> (Vec<f64>, Vec<f64>) {
    let (x, y) = (z.x.as_slice(), z.y.as_slice());
    (h.grad_x(x, y), h.grad_y(x, y))
}

/// Largest observed ‖∇H(z₁) − ∇H(z₂)‖ / ‖z₁ − z₂‖ over random pairs in the
/// ball of radius `radius`.
pub fn sampled_gradient_lipschitz(
    h: &dyn SmoothCoupling,
    n_pairs: usize,
    radius: f64,
    rng: &mut Rng,
) -> f64 {
    let (n, m) = h.dims();
    let mut worst = 0.0_f64;
    for _ in 0..n_pairs {
        let z1 = rng.vector_uniform(n + m, -radius, radius);
        let z2 = rng.vector_uniform(n + m, -radius, radius);
        let (x1, y1) = z1.as_slice().split_at(n);
        let (x2, y2) = z2.as_slice().split_at(n);
        let dgx = ops::sub(&h.grad_x(x1, y1), &h.grad_x(x2, y2));
        let dgy = ops::sub(&h.grad_y(x1, y1), &h.grad_y(x2, y2));
        let num = (ops::norm_sq(&dgx) + ops::norm_sq(&dgy)).sqrt();
        let den = ops::dist(z1.as_slice(), z2.as_slice());
        if den > 0.0 {
            worst = worst.max(num / den);
        }
    }
    worst
}
