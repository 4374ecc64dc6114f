//! Localization and tracking of a UAV swarm from the delay-Doppler channel
//! profiles of every pairwise link.
//!
//! The pipeline mirrors what an edge server would do with the profiles it
//! collects:
//!
//! 1. [`measurement`] synthesizes the sorted, quantized profiles from a swarm.
//! 2. [`assignment`] recovers which echo belongs to which UAV with loopy
//!    belief propagation over quadruple consistency checks.
//! 3. [`positioning`] fits positions to the relative echo distances by
//!    Barzilai-Borwein gradient descent with residual-triggered restarts.
//! 4. [`velocity`] solves the linear least-squares problem for velocities.
//! 5. [`tip`] alternates map re-estimation and position refinement (cold start,
//!    tracking and genie-aided variants).
//! 6. [`crlb`] computes the joint Cramér-Rao bound and [`experiments`] runs
//!    the Monte-Carlo sweeps.

pub mod assignment;
pub mod crlb;
pub mod error;
pub mod experiments;
pub mod geometry;
pub mod measurement;
pub mod positioning;
pub mod tip;
pub mod velocity;

pub use error::{Error, Result};
pub use geometry::{SwarmState, UavState, Vec3};
pub use measurement::{AssignmentMaps, ChannelLists, MeasurementSet, NoiseModel, OtfsGridConfig};
