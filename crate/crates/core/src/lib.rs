//! Probe-gated activation steering for tool-call entry.
//!
//! The pipeline runs on dumped hidden states: build steering vectors from a
//! calibration split, fit a domain router and per-domain intent probes, then
//! decide at inference time whether to push the residual stream toward or
//! away from tool use. Tool-call outputs are scored by a strict parser and
//! aggregated by the evaluation harness. A synthetic world stands in for a
//! real model so everything here runs without one.
//!
//! Numeric code is generic over [`Scalar`] (`f32` or `f64`); the aliases at
//! the crate root fix it to `f32`, matching on-disk precision.

#![allow(clippy::neg_cmp_op_on_partial_ord)] // `!(x > 0.0)` also rejects NaN

pub mod controller;
pub mod error;
pub mod eval;
pub mod parser;
pub mod pipeline;
pub mod probe;
pub mod scalar;
pub mod steering;
pub mod store;
pub mod synth;
pub mod wire;

pub use controller::{apply_injection, gate, Mode, OperatingPoint, Precision};
pub use error::{Error, Result};
pub use scalar::Scalar;
pub use store::{ActivationRecord, Dataset, MultiLayerDump, Split};

pub type Bundle = controller::AssetBundle<f32>;
pub type Decision = controller::SteerDecision<f32>;
pub type Router = probe::Router<f32>;
pub type Probe = probe::Probe<f32>;
pub type Standardizer = store::Standardizer<f32>;
pub type SteeringVector = steering::SteeringVector<f32>;
