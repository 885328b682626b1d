//! Scale-invariant stochastic optimization over matrices.
//!
//! The crate is organized bottom-up:
//!
//! * [`matrix`] and [`svd`]: dense kernels, the thin SVD and polar factors.
//! * [`geometry`]: input-output matrix norms, dual norms and linear
//!   minimization oracles.
//! * [`oracle`]: synthetic objectives with exact gradients and heavy-tailed
//!   stochastic gradient samplers.
//! * [`optim`]: the batched (BUSCG) and transported (TUSCG) conditional
//!   gradient methods, the Nesterov-LMO variant, and closed-form schedules.
//! * [`martingale`]: lower estimates of the martingale factor of a dual norm.
//! * [`harness`]: configuration, seeded experiment runs, CSV output and the
//!   self-test suites behind the `scion-lab` binary.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod geometry;
pub mod harness;
pub mod martingale;
pub mod matrix;
pub mod optim;
pub mod oracle;
pub mod svd;

pub use error::{Error, Result};
pub use geometry::{Geometry, GeometryKind, LmoReport};
pub use matrix::Matrix;

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/geometry.md")]
    mod geometry {}
    #[doc = include_str!("../../../book/src/polar.md")]
    mod polar {}
    #[doc = include_str!("../../../book/src/oracles.md")]
    mod oracles {}
    #[doc = include_str!("../../../book/src/optimizers.md")]
    mod optimizers {}
    #[doc = include_str!("../../../book/src/martingale.md")]
    mod martingale {}
    #[doc = include_str!("../../../book/src/harness.md")]
    mod harness {}
}
