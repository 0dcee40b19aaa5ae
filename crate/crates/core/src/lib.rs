//! Area under a Brownian storage workload: exact reflected simulation,
//! tail asymptotics on three timescales, most likely paths, and the Airy
//! transforms of busy-period areas.
//!
//! The analytic core is generic over [`scalar::Real`] (`f32` or `f64`);
//! the Monte Carlo side works in `f64`.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod acceptance;
pub mod asymptotics;
pub mod error;
pub mod harness;
pub mod laplace;
pub mod model;
pub mod optimize;
pub mod quadrature;
pub mod rng;
pub mod scalar;
pub mod sim;
pub mod special;
pub mod variational;

pub use error::{Error, Result};
pub use model::{fmt_sig, Branch, EstimatorReport, GridPath, QueueParams, RateResult, WorkloadTrace};
pub use scalar::Real;
pub use sim::SimConfig;

pub type QueueParamsF64 = model::QueueParams<f64>;
pub type QueueParamsF32 = model::QueueParams<f32>;
pub type GridPathF64 = model::GridPath<f64>;
pub type GridPathF32 = model::GridPath<f32>;
pub type RateResultF64 = model::RateResult<f64>;
pub type RateResultF32 = model::RateResult<f32>;
pub type MostLikelyPathF64 = variational::MostLikelyPath<f64>;
pub type MostLikelyPathF32 = variational::MostLikelyPath<f32>;
