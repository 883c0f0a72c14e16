//! Seeded, splittable random streams.
//!
//! Backed by ChaCha8, a counter-based generator: `split` hands out an
//! independent stream of the same seed, so parallel jobs can draw from
//! disjoint streams and still reproduce bit-for-bit.

use rand::{Rng as _, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::linalg::{ops, LinOp, Vector};

#[derive(Clone, Debug)]
pub struct Rng {
    seed: u64,
    stream: u64,
    inner: ChaCha8Rng,
}

impl Rng {
    pub fn new(seed: u64) -> Self {
        Self::with_stream(seed, 0)
    }

    fn with_stream(seed: u64, stream: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        inner.set_stream(stream);
        Rng {
            seed,
            stream,
            inner,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Independent child stream; deterministic in (seed, parent stream, id).
    pub fn split(&self, id: u64) -> Rng {
        let stream = self
            .stream
            .wrapping_mul(0x9E37_79B9_7F4A_7C15)
            .wrapping_add(id.wrapping_add(1));
        Self::with_stream(self.seed, stream)
    }

    /// Uniform draw in [lo, hi).
    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.inner.random::<f64>()
    }

    pub fn index(&mut self, n: usize) -> usize {
        self.inner.random_range(0..n)
    }

    /// Standard normal via Box–Muller.
    pub fn normal(&mut self) -> f64 {
        let u1 = 1.0 - self.inner.random::<f64>(); // (0, 1]
        let u2 = self.inner.random::<f64>();
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }

    /// Uniformly distributed direction on the unit sphere.
    pub fn unit_vector(&mut self, dim: usize) -> Vec<f64> {
        loop {
            let v: Vec<f64> = (0..dim).map(|_| self.normal()).collect();
            let n = ops::norm(&v);
            if n > 1e-300 {
                return ops::scale(1.0 / n, &v);
            }
        }
    }

    pub fn vector_uniform(&mut self, dim: usize, lo: f64, hi: f64) -> Vector {
        let v = (0..dim).map(|_| self.uniform(lo, hi)).collect();
        Vector::new(v).expect("uniform draws are finite and dim > 0")
    }

    /// Matrix with entries uniform in [-1, 1).
    pub fn matrix_uniform(&mut self, rows: usize, cols: usize) -> LinOp {
        let data = (0..rows * cols).map(|_| self.uniform(-1.0, 1.0)).collect();
        LinOp::new(rows, cols, data).expect("positive shape and finite entries")
    }
}
