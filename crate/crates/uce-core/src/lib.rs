//! Closed-form editing of linear projection layers.
//!
//! A projection matrix `W` maps token embeddings to attention keys or
//! values. Editing it means choosing new outputs for some inputs while
//! pinning the outputs of others; [`edit::uce_solve`] computes the global
//! least-squares optimum of that trade-off in closed form, without ever
//! touching an explicit inverse. Around the solver sit:
//!
//! - [`builders`]: targets for the three edit modes (erase a concept into an
//!   anchor, moderate it into an unconditional output, shift it along
//!   attribute directions),
//! - [`debias`]: an iterative driver that measures attribute ratios through
//!   a pluggable oracle and re-solves until the ratios hit a desired
//!   distribution,
//! - [`metrics`]: residual/drift reports, the bias-deviation metric, a toy
//!   attention forward pass, and a gradient-descent reference minimizer kept
//!   independent of the closed-form path so the two can cross-validate,
//! - [`catalog`]: named embedding collections with deterministic synthesis.
//!
//! The crate is `no_std` + `alloc`; all transcendental math goes through
//! `libm`, so results are bit-identical across platforms. File formats and
//! the command-line front end live in the companion `uce-cli` crate.

#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod builders;
pub mod catalog;
pub mod debias;
pub mod edit;
pub mod error;
pub mod metrics;
pub mod rng;
pub mod solve;
pub mod tensor;

pub use error::{Error, Result};
pub use tensor::{Matrix, Vector};
