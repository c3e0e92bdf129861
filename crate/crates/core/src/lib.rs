//! Structured learning of dynamical systems from time-delay measurements.
//!
//! The crate is built around a per-symmetric Hankel operator assembled from
//! time-delay samples of a state measurement. It provides three ways to apply
//! that operator (dense, shift decomposition, circulant embedding through the
//! FFT), a nuclear-norm regularized best-fit operator, and a structured neural
//! network (StNN) whose layers are FFT-like factorizations with learnable
//! 2×2 blocks and diagonals. Classical baselines (dense FFNN, exact DMD,
//! SINDy, HAVOK) share the same data model so that flop, parameter and
//! accuracy comparisons are made on equal terms.
//!
//! Everything here is `no_std` with `alloc`; file formats, timing and the
//! command line live in the companion `stnn-cli` crate.
#![no_std]
#![deny(unsafe_code)]
// Float methods come from `num_traits` in no_std builds. When anything in
// the dependency graph links std (dev-dependencies do), the inherent
// methods shadow them and the imports look unused.
#![allow(unused_imports)]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod baselines;
pub mod bestfit;
pub mod dynsys;
pub mod flops;
pub mod hankel;
pub mod linalg;
pub mod lm;
pub mod rollout;
pub mod scaling;
pub mod stnn;

mod rng;

pub use flops::FlopCounter;
pub use linalg::Matrix;
