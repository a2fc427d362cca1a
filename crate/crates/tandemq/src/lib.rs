//! Skorokhod reflection calculus for Brownian queues, with Monte Carlo
//! experiment engines for the Burke-theorem analogue, tandem coupling
//! dynamics, and the M/M/1 heavy-traffic cross-check.
//!
//! The path calculus is generic over the scalar type through
//! [`real::Real`] (`f32` or `f64`); the concrete aliases below fix the
//! double-precision instantiation used by the CLI and the statistical
//! toolkit.

// Guards are written `!(x > 0)` on purpose: the negation also rejects
// NaN parameters, which `x <= 0` would let through.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod error;
pub mod heavytraffic;
pub mod paths;
pub mod real;
pub mod reflection;
pub mod stats;
pub mod tandem;

pub use error::{Error, Result};
pub use paths::{ArrivalSpec, Seed};
pub use real::Real;

/// Double-precision instantiations (the default throughout the CLI).
pub type TimeGrid64 = paths::TimeGrid<f64>;
pub type Path64 = paths::Path<f64>;
pub type ArrivalSpec64 = paths::ArrivalSpec<f64>;
pub type QueueDecomposition64 = reflection::QueueDecomposition<f64>;
pub type TandemConfig64 = tandem::TandemConfig<f64>;
pub type BurkeResult64 = tandem::BurkeResult<f64>;
pub type CouplingRecord64 = tandem::CouplingRecord<f64>;
pub type HeavyTrafficConfig64 = heavytraffic::HeavyTrafficConfig<f64>;

/// Single-precision instantiations.
pub type TimeGrid32 = paths::TimeGrid<f32>;
pub type Path32 = paths::Path<f32>;
pub type ArrivalSpec32 = paths::ArrivalSpec<f32>;
