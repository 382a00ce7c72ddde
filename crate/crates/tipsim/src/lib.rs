//! Simulator and design toolkit for an all-microwave CZ gate on three
//! fixed-frequency transmons, where a driven coupler transition imprints a
//! state-dependent geometric phase on the data qubits.
//!
//! The crate is organized along the workflow of designing, calibrating and
//! benchmarking such a gate:
//!
//! - [`hilbert`]: truncated multi-transmon operators and dressed states
//! - [`perturbation`]: Schrieffer-Wolff machinery and closed-form rates
//! - [`gatedesign`]: geometric-phase conditions and pulse envelopes
//! - [`dynamics`]: unitary and master-equation propagation, gate simulation
//! - [`estimation`]: curve fitting and readout-assignment models
//! - [`calibration`]: in-silico gate calibration protocols
//! - [`benchmarking`]: Clifford machinery, randomized benchmarking, erasure
//!   statistics
//! - [`errormodel`]: first-order analytic decoherence budget
//! - [`circuitdesign`]: capacitance networks and device-design sweeps

pub mod benchmarking;
pub mod calibration;
pub mod circuitdesign;
pub mod dynamics;
pub mod error;
pub mod errormodel;
pub mod estimation;
pub mod gatedesign;
pub mod hilbert;
pub mod linalg;
pub mod perturbation;
pub mod presets;

pub use error::{Result, TipError};
