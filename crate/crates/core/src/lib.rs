//! Range-only UWB localization.
//!
//! Two estimators over time-of-arrival ranges to six fixed anchors:
//!
//! * [`vanilla`]: a 6-state constant-velocity EKF that only sees ranges;
//! * [`fusion`]: a 9-state EKF that takes world-frame IMU acceleration as a
//!   control input and estimates the accelerometer bias, with an innovation
//!   gate that drops implausible ranges.
//!
//! [`sim`] generates deterministic flights with sensor streams, written in the
//! [`log`] format. [`eval`] replays logs through the filters and reports error
//! and latency.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod ekf;
pub mod error;
pub mod eval;
pub mod experiment;
pub mod fusion;
pub mod geometry;
pub mod log;
pub mod measurement;
pub mod multilateration;
pub mod sim;
pub mod vanilla;

pub use config::{Preset, RunConfig};
pub use ekf::{FilterState, UpdateOutcome};
pub use error::{Error, Result};
pub use fusion::{FusionConfig, FusionEkf, FusionState};
pub use geometry::{predict_range, range_jacobian, AnchorMap, Position3, StateLayout};
pub use log::FilterKind;
pub use measurement::{ImuSample, RangeSample};
pub use vanilla::{QForm, VanillaConfig, VanillaEkf, VanillaState};
