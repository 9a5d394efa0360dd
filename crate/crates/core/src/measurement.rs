//! Sensor sample types consumed by the filters.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

/// One two-way-ranging result between the mobile and a single anchor.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RangeSample {
    /// Seconds.
    pub t: f64,
    pub anchor_id: u8,
    /// Measured distance, meters.
    pub range: f64,
    /// Sensor-reported standard deviation, meters.
    pub sigma_r: f64,
    /// Simulator ground-truth label: an outlier displacement was applied.
    pub truth_outlier: bool,
}

/// World-frame, gravity-compensated acceleration.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImuSample {
    pub t: f64,
    pub accel: Vector3<f64>,
}
