use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::trajectory::Trajectory;
use super::{sample_times, IMU_RATE_HZ, RANGE_RATE_HZ};
use crate::error::{Error, Result};
use crate::geometry::{predict_range, AnchorMap, ANCHOR_COUNT};
use crate::measurement::{ImuSample, RangeSample};

/// Reported `sigma_r` when the configured range noise is zero, so that
/// the sample still carries a positive uncertainty.
pub const MIN_REPORTED_SIGMA: f64 = 0.01;

/// ChaCha stream index per noise source.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    Ranges = 1,
    Imu = 2,
}

impl Stream {
    pub fn rng(self, seed: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(self as u64);
        rng
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseSpec {
    /// Standard deviation of clean range noise, meters.
    pub range_sigma: f64,
    /// Probability that a range sample is an outlier.
    pub outlier_rate: f64,
    /// Outlier displacement magnitude is uniform in `[min, max]` meters, random sign.
    pub outlier_magnitude: [f64; 2],
    /// Accelerometer white noise, m/s².
    pub imu_sigma: f64,
    /// Accelerometer bias at t = 0, m/s².
    pub bias_initial: [f64; 3],
    /// Bias random-walk step is `bias_walk_sigma * sqrt(dt)`.
    pub bias_walk_sigma: f64,
    pub seed: u64,
    /// Uniform timestamp jitter half-width, seconds. Off when zero.
    pub timestamp_jitter: f64,
    /// Probability that a range slot produces no sample.
    pub dropout_rate: f64,
}

impl Default for NoiseSpec {
    fn default() -> Self {
        Self {
            range_sigma: 0.10,
            outlier_rate: 0.0,
            outlier_magnitude: [2.0, 6.0],
            imu_sigma: 0.1,
            bias_initial: [0.0; 3],
            bias_walk_sigma: 0.0,
            seed: 0,
            timestamp_jitter: 0.0,
            dropout_rate: 0.0,
        }
    }
}

impl NoiseSpec {
    /// All-zero noise, for oracle tests.
    pub fn noiseless() -> Self {
        Self {
            range_sigma: 0.0,
            imu_sigma: 0.0,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(format!("noise: {m}")));
        let nonneg = |v: f64| v >= 0.0 && v.is_finite();
        if !nonneg(self.range_sigma) || !nonneg(self.imu_sigma) || !nonneg(self.bias_walk_sigma) {
            return bad("standard deviations must be finite and >= 0");
        }
        if !(0.0..=1.0).contains(&self.outlier_rate) || !(0.0..=1.0).contains(&self.dropout_rate) {
            return bad("rates must lie in [0, 1]");
        }
        let [lo, hi] = self.outlier_magnitude;
        if !(nonneg(lo) && nonneg(hi) && lo <= hi) {
            return bad("outlier_magnitude must be [min, max] with 0 <= min <= max");
        }
        if !self.bias_initial.iter().all(|b| b.is_finite()) {
            return bad("bias_initial must be finite");
        }
        // Keeps jittered timestamps strictly increasing.
        if !(nonneg(self.timestamp_jitter) && self.timestamp_jitter < 0.4 / RANGE_RATE_HZ) {
            return bad("timestamp_jitter must be in [0, 0.005) s");
        }
        Ok(())
    }

    fn reported_sigma(&self) -> f64 {
        if self.range_sigma > 0.0 {
            self.range_sigma
        } else {
            MIN_REPORTED_SIGMA
        }
    }
}

fn jitter(rng: &mut ChaCha8Rng, nominal: f64, half_width: f64) -> f64 {
    let u: f64 = rng.random_range(-1.0..1.0);
    if half_width > 0.0 {
        (nominal + u * half_width).max(0.0)
    } else {
        nominal
    }
}

/// Round-robin TDMA ranging: slot `n` probes anchor `n mod 6`.
pub fn sample_ranges(
    trajectory: &Trajectory,
    anchors: &AnchorMap,
    noise: &NoiseSpec,
) -> Vec<RangeSample> {
    let mut rng = Stream::Ranges.rng(noise.seed);
    let sigma_r = noise.reported_sigma();
    let [mag_lo, mag_hi] = noise.outlier_magnitude;
    let anchor_positions: Vec<_> = anchors.iter().map(|a| a.position).collect();

    let mut out = Vec::new();
    for (slot, nominal) in sample_times(trajectory.duration(), RANGE_RATE_HZ).enumerate() {
        // Fixed draw order per slot.
        let dropout: f64 = rng.random();
        let outlier: f64 = rng.random();
        let sign: bool = rng.random();
        let magnitude_u: f64 = rng.random();
        let gaussian: f64 = rng.sample(StandardNormal);
        let t = jitter(&mut rng, nominal, noise.timestamp_jitter);

        if dropout < noise.dropout_rate {
            continue;
        }
        let anchor_id = (slot % ANCHOR_COUNT) as u8;
        let truth = predict_range(
            &trajectory.at(t).position,
            &anchor_positions[anchor_id as usize],
        );
        let mut range = truth + noise.range_sigma * gaussian;
        let truth_outlier = outlier < noise.outlier_rate;
        if truth_outlier {
            let magnitude = mag_lo + (mag_hi - mag_lo) * magnitude_u;
            range += if sign { magnitude } else { -magnitude };
        }
        out.push(RangeSample {
            t,
            anchor_id,
            range: range.max(0.0),
            sigma_r,
            truth_outlier,
        });
    }
    out
}

/// Accelerometer bias as a piecewise-constant function of time, one value per IMU sample.
#[derive(Clone, Debug, PartialEq)]
pub struct BiasTrack {
    values: Vec<Vector3<f64>>,
}

impl BiasTrack {
    pub fn at(&self, t: f64) -> Vector3<f64> {
        let Some(last) = self.values.len().checked_sub(1) else {
            return Vector3::zeros();
        };
        let mut k = (t * IMU_RATE_HZ).floor().max(0.0) as usize;
        if (k + 1) as f64 / IMU_RATE_HZ <= t {
            k += 1;
        } else if k > 0 && k as f64 / IMU_RATE_HZ > t {
            k -= 1;
        }
        self.values[k.min(last)]
    }

    pub fn values(&self) -> &[Vector3<f64>] {
        &self.values
    }
}

/// World-frame accelerometer samples: true acceleration plus bias plus white noise.
pub fn sample_imu(trajectory: &Trajectory, noise: &NoiseSpec) -> (Vec<ImuSample>, BiasTrack) {
    let mut rng = Stream::Imu.rng(noise.seed);
    let walk = noise.bias_walk_sigma * (1.0 / IMU_RATE_HZ).sqrt();
    let mut bias = Vector3::from(noise.bias_initial);
    let mut samples = Vec::new();
    let mut biases = Vec::new();
    for nominal in sample_times(trajectory.duration(), IMU_RATE_HZ) {
        let white = Vector3::from_fn(|_, _| rng.sample::<f64, _>(StandardNormal));
        let step = Vector3::from_fn(|_, _| rng.sample::<f64, _>(StandardNormal));
        let t = jitter(&mut rng, nominal, noise.timestamp_jitter);
        let accel = trajectory.at(t).acceleration + bias + white * noise.imu_sigma;
        samples.push(ImuSample { t, accel });
        biases.push(bias);
        bias += step * walk;
    }
    (samples, BiasTrack { values: biases })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{Shape, TrajectorySpec};

    fn hover(duration: f64) -> Trajectory {
        Trajectory::new(&TrajectorySpec {
            shape: Shape::Hover {
                position: [7.0, 12.0, 1.5],
            },
            duration,
            v_max: 1.2,
            a_max: 2.0,
        })
        .unwrap()
    }

    #[test]
    fn noiseless_ranges_are_exact_distances() {
        let traj = hover(3.0);
        let anchors = AnchorMap::default();
        let ranges = sample_ranges(&traj, &anchors, &NoiseSpec::noiseless());
        for s in &ranges {
            let exact = predict_range(&traj.at(s.t).position, anchors.get(s.anchor_id).unwrap());
            assert_eq!(s.range, exact);
            assert!(!s.truth_outlier);
            assert_eq!(s.sigma_r, MIN_REPORTED_SIGMA);
        }
    }

    #[test]
    fn round_robin_schedule() {
        let ranges = sample_ranges(&hover(6.0), &AnchorMap::default(), &NoiseSpec::default());
        assert_eq!(ranges.len(), 480);
        let mut counts = [0; 6];
        for (n, s) in ranges.iter().enumerate() {
            assert_eq!(s.anchor_id as usize, n % 6);
            assert_eq!(s.t, n as f64 / 80.0);
            counts[s.anchor_id as usize] += 1;
        }
        assert_eq!(counts, [80; 6]);
        for w in ranges.windows(2) {
            assert!((w[1].t - w[0].t - 1.0 / 80.0).abs() < 1e-12);
        }
    }

    #[test]
    fn outlier_labels_match_displacement() {
        let noise = NoiseSpec {
            range_sigma: 0.0,
            outlier_rate: 0.3,
            outlier_magnitude: [3.0, 6.0],
            ..NoiseSpec::default()
        };
        let traj = hover(20.0);
        let anchors = AnchorMap::default();
        let ranges = sample_ranges(&traj, &anchors, &noise);
        let mut labelled = 0;
        for s in &ranges {
            let exact = predict_range(&traj.at(s.t).position, anchors.get(s.anchor_id).unwrap());
            let offset = (s.range - exact).abs();
            if s.truth_outlier {
                labelled += 1;
                assert!((3.0 - 1e-9..=6.0 + 1e-9).contains(&offset), "{offset}");
            } else {
                assert_eq!(offset, 0.0);
            }
        }
        let rate = labelled as f64 / ranges.len() as f64;
        assert!((rate - 0.3).abs() < 0.03, "{rate}");
    }

    #[test]
    fn dropouts_keep_slot_schedule() {
        let noise = NoiseSpec {
            dropout_rate: 0.2,
            ..NoiseSpec::default()
        };
        let ranges = sample_ranges(&hover(10.0), &AnchorMap::default(), &noise);
        assert!(ranges.len() < 800 && ranges.len() > 560);
        for s in &ranges {
            let slot = (s.t * 80.0).round() as usize;
            assert_eq!(s.anchor_id as usize, slot % 6);
        }
    }

    #[test]
    fn jitter_keeps_time_increasing() {
        let noise = NoiseSpec {
            timestamp_jitter: 0.004,
            ..NoiseSpec::default()
        };
        let ranges = sample_ranges(&hover(10.0), &AnchorMap::default(), &noise);
        assert!(ranges.windows(2).all(|w| w[1].t > w[0].t));
        assert!(ranges.iter().any(|s| (s.t * 80.0).fract() != 0.0));
        let (imu, _) = sample_imu(&hover(10.0), &noise);
        assert!(imu.windows(2).all(|w| w[1].t > w[0].t));
    }

    #[test]
    fn hover_without_noise_reads_zero_acceleration() {
        let (imu, bias) = sample_imu(&hover(5.0), &NoiseSpec::noiseless());
        assert_eq!(imu.len(), 250);
        assert!(imu.iter().all(|s| s.accel == Vector3::zeros()));
        assert!(bias.values().iter().all(|b| *b == Vector3::zeros()));
        for (k, s) in imu.iter().enumerate() {
            assert_eq!(s.t, k as f64 / 50.0);
        }
    }

    #[test]
    fn bias_track_lookup() {
        let noise = NoiseSpec {
            bias_walk_sigma: 0.5,
            ..NoiseSpec::noiseless()
        };
        let (imu, bias) = sample_imu(&hover(2.0), &noise);
        for (k, s) in imu.iter().enumerate() {
            assert_eq!(bias.at(s.t), s.accel, "sample {k}");
            assert_eq!(bias.at(s.t + 0.01), s.accel);
        }
        for n in 0..200 {
            let t = n as f64 / 100.0;
            assert_eq!(bias.at(t), bias.values()[n / 2]);
        }
    }

    #[test]
    fn validation() {
        assert!(NoiseSpec::default().validate().is_ok());
        for bad in [
            NoiseSpec {
                outlier_rate: 1.5,
                ..NoiseSpec::default()
            },
            NoiseSpec {
                range_sigma: -0.1,
                ..NoiseSpec::default()
            },
            NoiseSpec {
                outlier_magnitude: [6.0, 2.0],
                ..NoiseSpec::default()
            },
            NoiseSpec {
                timestamp_jitter: 0.01,
                ..NoiseSpec::default()
            },
        ] {
            assert!(bad.validate().is_err(), "{bad:?}");
        }
    }
}
