//! Smooth ground-truth trajectories inside a kinematic envelope.

use std::f64::consts::TAU;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Position3;

/// Rate used to verify the speed and acceleration limits.
pub const ENVELOPE_CHECK_HZ: f64 = 1000.0;

/// Auto-scaled trajectories stay this far (relative) below the binding limit.
const ENVELOPE_MARGIN: f64 = 1e-6;

/// Grid used to find the peak speed/acceleration of a unit-rate Lissajous figure.
const LISSAJOUS_GRID: usize = 100_000;

/// Peak of the quintic smoothstep's first and second derivatives on `[0, 1]`.
const QUINTIC_PEAK_VEL: f64 = 1.875;
const QUINTIC_PEAK_ACC: f64 = 5.773_502_691_896_258; // 10 / sqrt(3)

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrajectorySpec {
    pub shape: Shape,
    /// Seconds.
    pub duration: f64,
    pub v_max: f64,
    pub a_max: f64,
}

/// Shape of the trajectory. Optional timing parameters are chosen as fast as
/// the envelope allows when left out.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum Shape {
    Hover {
        position: [f64; 3],
    },
    /// Rest-to-rest move from `start` to `end`, beginning at `start_time`.
    Line {
        start: [f64; 3],
        end: [f64; 3],
        #[serde(default)]
        start_time: f64,
        #[serde(default)]
        move_time: Option<f64>,
    },
    /// Horizontal circle.
    Circle {
        center: [f64; 3],
        radius: f64,
        #[serde(default)]
        period: Option<f64>,
    },
    /// `center + amplitude * sin(ratio * 2π t / period + phase)` per axis.
    Lissajous {
        center: [f64; 3],
        amplitude: [f64; 3],
        ratio: [u32; 3],
        #[serde(default)]
        phase: [f64; 3],
        #[serde(default)]
        period: Option<f64>,
    },
    /// Rest-to-rest moves through each point in turn, then hold.
    Waypoints {
        points: Vec<[f64; 3]>,
        #[serde(default)]
        segment_time: Option<f64>,
    },
}

/// Kinematic state at one instant.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Kinematics {
    pub position: Position3,
    pub velocity: Vector3<f64>,
    pub acceleration: Vector3<f64>,
}

impl Kinematics {
    fn at_rest(position: Position3) -> Self {
        Self {
            position,
            velocity: Vector3::zeros(),
            acceleration: Vector3::zeros(),
        }
    }
}

#[derive(Clone, Debug)]
struct Segment {
    start_time: f64,
    duration: f64,
    from: Position3,
    to: Position3,
}

impl Segment {
    fn eval(&self, t: f64) -> Kinematics {
        let tau = ((t - self.start_time) / self.duration).clamp(0.0, 1.0);
        let (t2, t3) = (tau * tau, tau * tau * tau);
        let s = t3 * (10.0 - 15.0 * tau + 6.0 * t2);
        let ds = 30.0 * t2 * (1.0 - tau) * (1.0 - tau) / self.duration;
        let dds = (60.0 * tau - 180.0 * t2 + 120.0 * t3) / (self.duration * self.duration);
        let delta = self.to - self.from;
        Kinematics {
            position: self.from + delta * s,
            velocity: delta * ds,
            acceleration: delta * dds,
        }
    }

    /// Shortest rest-to-rest duration that respects both limits.
    fn min_duration(length: f64, v_max: f64, a_max: f64) -> f64 {
        let by_speed = QUINTIC_PEAK_VEL * length / v_max;
        let by_accel = (QUINTIC_PEAK_ACC * length / a_max).sqrt();
        by_speed.max(by_accel) * (1.0 + ENVELOPE_MARGIN)
    }
}

#[derive(Clone, Debug)]
enum Resolved {
    Hover(Position3),
    Segments {
        hold: Position3,
        segments: Vec<Segment>,
    },
    Circle {
        center: Position3,
        radius: f64,
        omega: f64,
    },
    Lissajous {
        center: Position3,
        amplitude: Vector3<f64>,
        ratio: Vector3<f64>,
        phase: Vector3<f64>,
        omega: f64,
    },
}

/// A trajectory with all timing resolved; evaluable at any time.
#[derive(Clone, Debug)]
pub struct Trajectory {
    resolved: Resolved,
    duration: f64,
}

impl Trajectory {
    /// Resolves timing and checks the envelope by dense sampling.
    pub fn new(spec: &TrajectorySpec) -> Result<Self> {
        let bad = |m: String| Err(Error::Config(format!("trajectory: {m}")));
        if !(spec.duration > 0.0 && spec.duration.is_finite()) {
            return bad("duration must be > 0".into());
        }
        if !(spec.v_max > 0.0 && spec.a_max > 0.0) {
            return bad("v_max and a_max must be > 0".into());
        }
        let (v_max, a_max) = (spec.v_max, spec.a_max);
        let resolved = match &spec.shape {
            Shape::Hover { position } => Resolved::Hover(Position3::from(*position)),
            Shape::Line {
                start,
                end,
                start_time,
                move_time,
            } => {
                let (from, to) = (Position3::from(*start), Position3::from(*end));
                let length = (to - from).norm();
                if *start_time < 0.0 {
                    return bad("line start_time must be >= 0".into());
                }
                let duration = match move_time {
                    Some(d) if *d > 0.0 => *d,
                    Some(_) => return bad("line move_time must be > 0".into()),
                    None if length == 0.0 => 1.0,
                    None => Segment::min_duration(length, v_max, a_max),
                };
                Resolved::Segments {
                    hold: from,
                    segments: vec![Segment {
                        start_time: *start_time,
                        duration,
                        from,
                        to,
                    }],
                }
            }
            Shape::Circle {
                center,
                radius,
                period,
            } => {
                if !(*radius > 0.0) {
                    return bad("circle radius must be > 0".into());
                }
                let omega = match period {
                    Some(p) if *p > 0.0 => TAU / p,
                    Some(_) => return bad("circle period must be > 0".into()),
                    None => (v_max / radius).min((a_max / radius).sqrt()) * (1.0 - ENVELOPE_MARGIN),
                };
                Resolved::Circle {
                    center: Position3::from(*center),
                    radius: *radius,
                    omega,
                }
            }
            Shape::Lissajous {
                center,
                amplitude,
                ratio,
                phase,
                period,
            } => {
                if ratio.contains(&0) {
                    return bad("lissajous ratios must be positive integers".into());
                }
                let amplitude = Vector3::from(*amplitude);
                let ratio = Vector3::new(ratio[0] as f64, ratio[1] as f64, ratio[2] as f64);
                let phase = Vector3::from(*phase);
                let omega = match period {
                    Some(p) if *p > 0.0 => TAU / p,
                    Some(_) => return bad("lissajous period must be > 0".into()),
                    None => {
                        let (speed, accel) = lissajous_unit_peaks(&amplitude, &ratio, &phase);
                        if speed == 0.0 {
                            1.0
                        } else {
                            (v_max / speed).min((a_max / accel).sqrt()) * (1.0 - ENVELOPE_MARGIN)
                        }
                    }
                };
                Resolved::Lissajous {
                    center: Position3::from(*center),
                    amplitude,
                    ratio,
                    phase,
                    omega,
                }
            }
            Shape::Waypoints {
                points,
                segment_time,
            } => {
                if points.is_empty() {
                    return bad("waypoints needs at least one point".into());
                }
                let mut segments = Vec::new();
                let mut clock = 0.0;
                for pair in points.windows(2) {
                    let (from, to) = (Position3::from(pair[0]), Position3::from(pair[1]));
                    let length = (to - from).norm();
                    let duration = match segment_time {
                        Some(d) if *d > 0.0 => *d,
                        Some(_) => return bad("waypoint segment_time must be > 0".into()),
                        None if length == 0.0 => 1.0,
                        None => Segment::min_duration(length, v_max, a_max),
                    };
                    segments.push(Segment {
                        start_time: clock,
                        duration,
                        from,
                        to,
                    });
                    clock += duration;
                }
                Resolved::Segments {
                    hold: Position3::from(points[0]),
                    segments,
                }
            }
        };
        let trajectory = Self {
            resolved,
            duration: spec.duration,
        };
        trajectory.check_envelope(v_max, a_max)?;
        Ok(trajectory)
    }

    pub fn duration(&self) -> f64 {
        self.duration
    }

    pub fn at(&self, t: f64) -> Kinematics {
        match &self.resolved {
            Resolved::Hover(p) => Kinematics::at_rest(*p),
            Resolved::Segments { hold, segments } => {
                match segments.iter().rev().find(|s| t >= s.start_time) {
                    Some(seg) => seg.eval(t),
                    None => Kinematics::at_rest(*hold),
                }
            }
            Resolved::Circle {
                center,
                radius,
                omega,
            } => {
                let (s, c) = (omega * t).sin_cos();
                Kinematics {
                    position: center + Vector3::new(radius * c, radius * s, 0.0),
                    velocity: Vector3::new(-radius * omega * s, radius * omega * c, 0.0),
                    acceleration: Vector3::new(c, s, 0.0) * (-radius * omega * omega),
                }
            }
            Resolved::Lissajous {
                center,
                amplitude,
                ratio,
                phase,
                omega,
            } => {
                let mut k = Kinematics::at_rest(*center);
                for i in 0..3 {
                    let w = ratio[i] * omega;
                    let (s, c) = (w * t + phase[i]).sin_cos();
                    k.position[i] += amplitude[i] * s;
                    k.velocity[i] = amplitude[i] * w * c;
                    k.acceleration[i] = -amplitude[i] * w * w * s;
                }
                k
            }
        }
    }

    /// Peak speed and acceleration over `[0, duration]`, sampled at [`ENVELOPE_CHECK_HZ`].
    pub fn sampled_peaks(&self) -> (f64, f64) {
        let n = (self.duration * ENVELOPE_CHECK_HZ).ceil() as usize;
        (0..=n)
            .map(|i| self.at(i as f64 / ENVELOPE_CHECK_HZ))
            .fold((0.0f64, 0.0f64), |(v, a), k| {
                (v.max(k.velocity.norm()), a.max(k.acceleration.norm()))
            })
    }

    fn check_envelope(&self, v_max: f64, a_max: f64) -> Result<()> {
        let (speed, accel) = self.sampled_peaks();
        if speed > v_max + 1e-9 {
            return Err(Error::EnvelopeViolation(format!(
                "peak speed {speed:.4} m/s exceeds v_max {v_max} m/s"
            )));
        }
        if accel > a_max + 1e-9 {
            return Err(Error::EnvelopeViolation(format!(
                "peak acceleration {accel:.4} m/s^2 exceeds a_max {a_max} m/s^2"
            )));
        }
        Ok(())
    }
}

/// Peak speed and acceleration of the Lissajous figure at base rate 1 rad/s.
/// Integer ratios make the figure 2π-periodic, so one period suffices.
fn lissajous_unit_peaks(
    amplitude: &Vector3<f64>,
    ratio: &Vector3<f64>,
    phase: &Vector3<f64>,
) -> (f64, f64) {
    let mut peaks = (0.0f64, 0.0f64);
    for i in 0..LISSAJOUS_GRID {
        let theta = TAU * i as f64 / LISSAJOUS_GRID as f64;
        let mut v = Vector3::zeros();
        let mut a = Vector3::zeros();
        for axis in 0..3 {
            let (s, c) = (ratio[axis] * theta + phase[axis]).sin_cos();
            v[axis] = amplitude[axis] * ratio[axis] * c;
            a[axis] = amplitude[axis] * ratio[axis] * ratio[axis] * s;
        }
        peaks.0 = peaks.0.max(v.norm());
        peaks.1 = peaks.1.max(a.norm());
    }
    peaks
}
