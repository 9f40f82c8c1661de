//! Pulse-level randomized-benchmarking simulator for single-qubit gates on
//! neutral-atom tweezer arrays.
//!
//! The exact linear algebra ([`su2`], [`pulse`], [`clifford`]) is generic over
//! the float type; the aliases below fix it to `f64`, which is what the
//! Monte-Carlo and fitting layers use.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod clifford;
pub mod config;
pub mod error;
pub mod fit;
pub mod harness;
pub mod lsq;
pub mod pulse;
pub mod readout;
pub mod rng;
pub mod scalar;
pub mod site;
pub mod su2;

pub use error::{Error, Result};
pub use su2::Basis;

pub type Unitary2 = su2::Unitary2<f64>;
pub type QubitState = su2::QubitState<f64>;
pub type Pulse = pulse::Pulse<f64>;
pub type PhysicalPulse = pulse::PhysicalPulse<f64>;
pub type PulseNoise = pulse::PulseNoise<f64>;
pub type PhaseFrame = clifford::PhaseFrame<f64>;
pub type CliffordGate = clifford::CliffordGate<f64>;
pub type CliffordTable = clifford::CliffordTable<f64>;
pub use site::{ArrayConfig, Atom, SiteModel};
pub use readout::{CountHistogram, DestructiveParams, Detection, NdroParams, ShotOutcome};
pub use fit::{FitResult, ReadoutMode, RbCurve, RbPoint};
pub use config::ExperimentConfig;
pub use harness::{RunContext, RunManifest};
