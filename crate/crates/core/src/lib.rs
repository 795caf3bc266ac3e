//! Binary neural network engine with bit-packed XNOR/popcount inference,
//! straight-through-estimator training, bagging/boosting ensembles of weak
//! binary networks, and Monte-Carlo tooling for their robustness and
//! variance behaviour.
//!
//! The crate is `no_std` and only needs `alloc`. All transcendental math goes
//! through [`libm`] so results are bit-identical across platforms and between
//! test and release builds.
#![no_std]
#![deny(unused_must_use, rust_2018_idioms)]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod analysis;
pub mod bitcore;
pub mod data;
pub mod ensemble;
mod error;
pub mod math;
pub mod nn;
pub mod rng;
pub mod tensor;

pub use error::{Error, Result};
pub use tensor::RealTensor;
