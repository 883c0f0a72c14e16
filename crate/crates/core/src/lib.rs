//! Two-block proximal splitting solvers with trace-based convergence
//! certificates.
//!
//! - [`bcd`]: proximal alternating linearized block coordinate descent on
//!   f(x) + g(y) + H(x, y).
//! - [`admm`]: two-block ADMM with a golden-ratio-bounded dual step.
//! - [`prox`], [`subdiff`], [`kl`]: the convex-analysis primitives both
//!   solvers and all certificate checks are built from.
//!
//! Parallel evaluation (rayon) is enabled by the default `parallel`
//! feature; see [`exec::Mode`].

// `!(x > 0.0)` also rejects NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod admm;
pub mod bcd;
pub mod certificate;
pub mod error;
pub mod exec;
pub mod kl;
pub mod linalg;
pub mod problems;
pub mod prox;
pub mod reference;
pub mod rng;
pub mod smooth;
pub mod subdiff;

pub use certificate::{CheckReport, Verdict};
pub use error::{Error, Result};
pub use exec::Mode;
pub use linalg::{BlockPair, LinOp, Vector};
pub use prox::{Atom, ExtValue};
pub use rng::Rng;
