//! Simulation and estimation of local and non-local magic in small noisy qubit registers.

// `!(x > 0.0)` is used deliberately so NaN is rejected along with non-positive values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod benchfit;
pub mod circuits;
pub mod erasure;
pub mod error;
pub mod linalg;
pub mod magic;
pub mod mitigation;
pub mod noise;
pub mod pipeline;
pub mod rcm;

pub use circuits::{paper_state, run_circuit, Circuit, GateKind, GateSpec, StateId};
pub use error::{Error, Result};
pub use linalg::{ComplexMatrix, DensityMatrix, C64};
pub use noise::{CalibrationMatrix, NoiseConfig, ProbabilityVector};
pub use pipeline::{run_scenario, Provenance, Report, Scenario};
pub use rcm::{EstimateWithError, RcmDataset};
