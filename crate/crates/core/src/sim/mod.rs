//! Deterministic generation of ground truth and sensor streams.
//!
//! Randomness comes from ChaCha8 (`rand_chacha`) seeded with
//! `seed_from_u64(seed)`, one stream per noise source (see [`Stream`]), and
//! Gaussian draws use `rand_distr::StandardNormal`. Every source consumes the
//! same number of draws per sample regardless of the configured rates, so
//! changing one noise parameter never reshuffles another source.

mod sensors;
mod trajectory;

pub use sensors::{sample_imu, sample_ranges, BiasTrack, NoiseSpec, Stream, MIN_REPORTED_SIGMA};
pub use trajectory::{Kinematics, Shape, Trajectory, TrajectorySpec, ENVELOPE_CHECK_HZ};

use nalgebra::Vector3;

use crate::error::Result;
use crate::geometry::{AnchorMap, Position3};
use crate::measurement::{ImuSample, RangeSample};

/// One range per TDMA slot.
pub const RANGE_RATE_HZ: f64 = 80.0;
pub const IMU_RATE_HZ: f64 = 50.0;
pub const TRUTH_RATE_HZ: f64 = 100.0;

/// Ground-truth kinematic state plus the accelerometer bias in effect.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TruthSample {
    pub t: f64,
    pub position: Position3,
    pub velocity: Vector3<f64>,
    pub acceleration: Vector3<f64>,
    pub bias: Vector3<f64>,
}

/// Samples the trajectory at `rate` Hz over `[0, duration)`. Bias is left at zero.
pub fn generate_truth(spec: &TrajectorySpec, rate: f64) -> Result<Vec<TruthSample>> {
    if !(rate > 0.0) {
        return Err(crate::Error::Config("truth rate must be > 0".into()));
    }
    let trajectory = Trajectory::new(spec)?;
    Ok(sample_times(trajectory.duration(), rate)
        .map(|t| {
            let k = trajectory.at(t);
            TruthSample {
                t,
                position: k.position,
                velocity: k.velocity,
                acceleration: k.acceleration,
                bias: Vector3::zeros(),
            }
        })
        .collect())
}

/// `n / rate` for every `n` with `n / rate < duration`.
pub(crate) fn sample_times(duration: f64, rate: f64) -> impl Iterator<Item = f64> {
    (0u64..)
        .map(move |n| n as f64 / rate)
        .take_while(move |t| *t < duration)
}

/// Everything one simulated flight produces.
#[derive(Clone, Debug, PartialEq)]
pub struct SimRun {
    pub truth: Vec<TruthSample>,
    pub imu: Vec<ImuSample>,
    pub ranges: Vec<RangeSample>,
}

/// Full simulation: truth at [`TRUTH_RATE_HZ`] (with the true bias filled in),
/// IMU at [`IMU_RATE_HZ`], ranges at [`RANGE_RATE_HZ`].
pub fn simulate(spec: &TrajectorySpec, anchors: &AnchorMap, noise: &NoiseSpec) -> Result<SimRun> {
    noise.validate()?;
    let trajectory = Trajectory::new(spec)?;
    let (imu, bias) = sample_imu(&trajectory, noise);
    let ranges = sample_ranges(&trajectory, anchors, noise);
    let truth = sample_times(trajectory.duration(), TRUTH_RATE_HZ)
        .map(|t| {
            let k = trajectory.at(t);
            TruthSample {
                t,
                position: k.position,
                velocity: k.velocity,
                acceleration: k.acceleration,
                bias: bias.at(t),
            }
        })
        .collect();
    Ok(SimRun { truth, imu, ranges })
}
