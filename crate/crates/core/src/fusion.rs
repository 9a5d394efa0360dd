//! UWB + IMU fusion EKF with accelerometer-bias states.
//!
//! State layout is `[p_x, v_x, b_x, p_y, v_y, b_y, p_z, v_z, b_z]`. IMU
//! acceleration enters as a control input held zero-order between samples;
//! the bias states absorb the slowly varying accelerometer offset.

use nalgebra::{Matrix3, SMatrix, SVector, Vector3};
use serde::{Deserialize, Serialize};

use crate::ekf::{check_finite, range_update, symmetrize, FilterState, Gate, UpdateOutcome};
use crate::error::{Error, Result};
use crate::geometry::{AnchorMap, Position3, StateLayout};
use crate::measurement::{ImuSample, RangeSample};

pub type Matrix9 = SMatrix<f64, 9, 9>;
pub type Vector9 = SVector<f64, 9>;
pub type FusionState = FilterState<9>;

pub const LAYOUT: StateLayout = StateLayout::Fusion9;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FusionConfig {
    /// IMU white-noise intensity. Tuning value, not a published constant.
    pub tau_a: f64,
    /// Bias random-walk intensity. Tuning value, not a published constant.
    pub tau_b: f64,
    /// Innovation gate on `|r̄ - r|`, meters.
    pub gate_threshold: f64,
    /// Accepted updates before the gate arms.
    pub gate_warmup: usize,
    pub r_floor: f64,
    pub initial_position_var: f64,
    pub initial_velocity_var: f64,
    pub initial_bias_var: f64,
}

impl Default for FusionConfig {
    fn default() -> Self {
        Self {
            tau_a: 0.5,
            tau_b: 0.01,
            gate_threshold: 2.0,
            gate_warmup: 50,
            r_floor: 0.01,
            initial_position_var: 1.0,
            initial_velocity_var: 1.0,
            initial_bias_var: 0.5,
        }
    }
}

impl FusionConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(format!("fusion: {m}")));
        if !(self.tau_a > 0.0 && self.tau_a.is_finite()) {
            return bad("tau_a must be > 0");
        }
        if !(self.tau_b > 0.0 && self.tau_b.is_finite()) {
            return bad("tau_b must be > 0");
        }
        if !(self.gate_threshold > 0.0) {
            return bad("gate_threshold must be > 0");
        }
        if !(self.r_floor >= 0.0 && self.r_floor.is_finite()) {
            return bad("r_floor must be >= 0");
        }
        if !(self.initial_position_var > 0.0
            && self.initial_velocity_var > 0.0
            && self.initial_bias_var > 0.0)
        {
            return bad("initial variances must be > 0");
        }
        Ok(())
    }

    pub fn gate(&self) -> Gate {
        Gate {
            threshold: Some(self.gate_threshold),
            warmup: self.gate_warmup,
        }
    }
}

fn block_diagonal(block: &Matrix3<f64>) -> Matrix9 {
    let mut m = Matrix9::zeros();
    for axis in 0..3 {
        m.fixed_view_mut::<3, 3>(3 * axis, 3 * axis)
            .copy_from(block);
    }
    m
}

pub fn build_a(dt: f64) -> Matrix9 {
    #[rustfmt::skip]
    let block = Matrix3::new(
        1.0, dt,  -dt * dt / 2.0,
        0.0, 1.0, -dt,
        0.0, 0.0, 1.0,
    );
    block_diagonal(&block)
}

pub fn build_b(dt: f64) -> Matrix9 {
    #[rustfmt::skip]
    let block = Matrix3::new(
        dt * dt / 2.0, 0.0, 0.0,
        dt,            0.0, 0.0,
        0.0,           0.0, 0.0,
    );
    block_diagonal(&block)
}

/// Control vector with the measured acceleration in the position slots of each axis block.
pub fn build_u(accel: &Vector3<f64>) -> Vector9 {
    let mut u = Vector9::zeros();
    for (axis, a) in accel.iter().enumerate() {
        u[3 * axis] = *a;
    }
    u
}

pub fn build_q(dt: f64, tau_a: f64, tau_b: f64) -> Matrix9 {
    let t2 = dt * dt;
    let t3 = t2 * dt;
    let t4 = t3 * dt;
    let t5 = t4 * dt;
    let pp = t3 * tau_a / 3.0 + t5 * tau_b / 20.0;
    let pv = t2 * tau_a / 2.0 + t4 * tau_b / 8.0;
    let pb = -t3 * tau_b / 6.0;
    let vv = dt * tau_a + t3 * tau_b / 3.0;
    let vb = -t2 * tau_b / 2.0;
    let bb = dt * tau_b;
    #[rustfmt::skip]
    let block = Matrix3::new(
        pp, pv, pb,
        pv, vv, vb,
        pb, vb, bb,
    );
    block_diagonal(&block)
}

pub fn initial_state(position: Position3, t: f64, cfg: &FusionConfig) -> FusionState {
    let mut x = Vector9::zeros();
    let mut diag = Vector9::zeros();
    for axis in 0..3 {
        x[3 * axis] = position[axis];
        diag[3 * axis] = cfg.initial_position_var;
        diag[3 * axis + 1] = cfg.initial_velocity_var;
        diag[3 * axis + 2] = cfg.initial_bias_var;
    }
    FusionState {
        x,
        p: Matrix9::from_diagonal(&diag),
        t,
    }
}

/// Propagates the state to `imu.t`, applying `imu.accel` over the whole interval.
pub fn time_update(
    state: &FusionState,
    imu: &ImuSample,
    cfg: &FusionConfig,
) -> Result<FusionState> {
    if !(imu.t >= state.t) {
        return Err(Error::NonMonotonicTime {
            previous: state.t,
            next: imu.t,
        });
    }
    let dt = imu.t - state.t;
    let a = build_a(dt);
    let x = a * state.x + build_b(dt) * build_u(&imu.accel);
    let mut p = a * state.p * a.transpose() + build_q(dt, cfg.tau_a, cfg.tau_b);
    symmetrize(&mut p);
    check_finite(FusionState { x, p, t: imu.t }, "time update")
}

/// Scalar range update with the 9-state Jacobian; rejects when `gate_armed`
/// and `|r̄ - r|` exceeds the configured threshold.
pub fn measurement_update(
    state: &FusionState,
    sample: &RangeSample,
    anchors: &AnchorMap,
    cfg: &FusionConfig,
    gate_armed: bool,
) -> Result<(FusionState, UpdateOutcome)> {
    range_update(
        state,
        sample,
        anchors,
        LAYOUT,
        cfg.r_floor,
        Some(cfg.gate_threshold),
        gate_armed,
    )
}

impl FilterState<9> {
    pub fn position(&self) -> Position3 {
        self.position_in(LAYOUT)
    }

    pub fn velocity(&self) -> Vector3<f64> {
        Vector3::new(self.x[1], self.x[4], self.x[7])
    }

    pub fn bias(&self) -> Vector3<f64> {
        Vector3::new(self.x[2], self.x[5], self.x[8])
    }
}

/// Event-driven fusion filter: a time update per IMU sample, a measurement
/// update per range sample, with the last acceleration held in between.
#[derive(Clone, Debug)]
pub struct FusionEkf {
    state: FusionState,
    config: FusionConfig,
    held_accel: Vector3<f64>,
    accepted: usize,
    rejected: usize,
}

impl FusionEkf {
    pub fn new(position: Position3, t: f64, config: FusionConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            state: initial_state(position, t, &config),
            config,
            held_accel: Vector3::zeros(),
            accepted: 0,
            rejected: 0,
        })
    }

    pub fn state(&self) -> &FusionState {
        &self.state
    }

    pub fn config(&self) -> &FusionConfig {
        &self.config
    }

    pub fn accepted(&self) -> usize {
        self.accepted
    }

    pub fn rejected(&self) -> usize {
        self.rejected
    }

    pub fn held_accel(&self) -> Vector3<f64> {
        self.held_accel
    }

    /// Sets the acceleration applied until the next IMU sample, without propagating.
    pub fn hold_accel(&mut self, accel: Vector3<f64>) {
        self.held_accel = accel;
    }

    /// Propagates to `t` with the currently held acceleration.
    pub fn propagate_to(&mut self, t: f64) -> Result<()> {
        let input = ImuSample {
            t,
            accel: self.held_accel,
        };
        self.state = time_update(&self.state, &input, &self.config)?;
        Ok(())
    }

    pub fn process_imu(&mut self, imu: &ImuSample) -> Result<()> {
        self.propagate_to(imu.t)?;
        self.held_accel = imu.accel;
        Ok(())
    }

    pub fn process_range(
        &mut self,
        sample: &RangeSample,
        anchors: &AnchorMap,
    ) -> Result<UpdateOutcome> {
        self.propagate_to(sample.t)?;
        let armed = self.config.gate().armed(self.accepted);
        let (posterior, outcome) =
            measurement_update(&self.state, sample, anchors, &self.config, armed)?;
        self.state = posterior;
        match outcome {
            UpdateOutcome::Accepted { .. } => self.accepted += 1,
            UpdateOutcome::Rejected { .. } => self.rejected += 1,
        }
        Ok(outcome)
    }
}
