//! Constant-velocity EKF over UWB ranges.
//!
//! State layout is `[p_x, v_x, p_y, v_y, p_z, v_z]`. One filter iteration is
//! one incoming range sample, so the transition interval is the gap between
//! consecutive range timestamps.

use nalgebra::{Matrix2, SMatrix, SVector, Vector3};
use serde::{Deserialize, Serialize};

use crate::ekf::{check_finite, range_update, symmetrize, FilterState, Gate, UpdateOutcome};
use crate::error::{Error, Result};
use crate::geometry::{AnchorMap, Position3, StateLayout};
use crate::measurement::RangeSample;

pub type Matrix6 = SMatrix<f64, 6, 6>;
pub type Vector6 = SVector<f64, 6>;
pub type VanillaState = FilterState<6>;

pub const LAYOUT: StateLayout = StateLayout::Vanilla6;

/// Which process-noise matrix to use.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum QForm {
    /// `[[σ T⁴/3, σ T³/2], [σ T³/2, T/2]]` per axis, entries exactly as published.
    #[default]
    Paper,
    /// Discrete white-noise acceleration, `σ [[T⁴/4, T³/2], [T³/2, T²]]` per axis,
    /// with σ the acceleration variance.
    Standard,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VanillaConfig {
    /// Process-noise intensity.
    pub sigma_a: f64,
    pub q_form: QForm,
    /// Lower bound on the measurement standard deviation (m).
    pub r_floor: f64,
    /// Innovation gate in meters; `None` disables gating.
    pub gate_threshold: Option<f64>,
    /// Number of accepted updates before the gate arms.
    pub gate_warmup: usize,
    pub initial_position_var: f64,
    pub initial_velocity_var: f64,
}

impl Default for VanillaConfig {
    fn default() -> Self {
        Self {
            sigma_a: 0.125,
            q_form: QForm::Paper,
            r_floor: 0.01,
            gate_threshold: None,
            gate_warmup: 50,
            initial_position_var: 1.0,
            initial_velocity_var: 1.0,
        }
    }
}

impl VanillaConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(format!("vanilla: {m}")));
        if !(self.sigma_a > 0.0 && self.sigma_a.is_finite()) {
            return bad("sigma_a must be > 0");
        }
        if !(self.r_floor >= 0.0 && self.r_floor.is_finite()) {
            return bad("r_floor must be >= 0");
        }
        if let Some(g) = self.gate_threshold {
            if !(g > 0.0) {
                return bad("gate_threshold must be > 0");
            }
        }
        if !(self.initial_position_var > 0.0 && self.initial_velocity_var > 0.0) {
            return bad("initial variances must be > 0");
        }
        Ok(())
    }

    pub fn gate(&self) -> Gate {
        Gate {
            threshold: self.gate_threshold,
            warmup: self.gate_warmup,
        }
    }
}

fn block_diagonal(block: &Matrix2<f64>) -> Matrix6 {
    let mut m = Matrix6::zeros();
    for axis in 0..3 {
        m.fixed_view_mut::<2, 2>(2 * axis, 2 * axis)
            .copy_from(block);
    }
    m
}

/// State transition for a constant-velocity model.
pub fn build_a(dt: f64) -> Matrix6 {
    block_diagonal(&Matrix2::new(1.0, dt, 0.0, 1.0))
}

pub fn build_q(dt: f64, sigma_a: f64, form: QForm) -> Matrix6 {
    let (t2, t3, t4) = (dt * dt, dt * dt * dt, dt * dt * dt * dt);
    let block = match form {
        QForm::Paper => Matrix2::new(
            sigma_a * t4 / 3.0,
            sigma_a * t3 / 2.0,
            sigma_a * t3 / 2.0,
            dt / 2.0,
        ),
        QForm::Standard => Matrix2::new(t4 / 4.0, t3 / 2.0, t3 / 2.0, t2) * sigma_a,
    };
    block_diagonal(&block)
}

pub fn initial_state(position: Position3, t: f64, cfg: &VanillaConfig) -> VanillaState {
    let mut x = Vector6::zeros();
    let mut diag = Vector6::from_element(cfg.initial_velocity_var);
    for (slot, p) in LAYOUT.position_slots().into_iter().zip(position.iter()) {
        x[slot] = *p;
        diag[slot] = cfg.initial_position_var;
    }
    VanillaState {
        x,
        p: Matrix6::from_diagonal(&diag),
        t,
    }
}

/// Propagates mean and covariance by `dt` seconds.
pub fn time_update(state: &VanillaState, dt: f64, cfg: &VanillaConfig) -> Result<VanillaState> {
    if !(dt >= 0.0) {
        return Err(Error::NonMonotonicTime {
            previous: state.t,
            next: state.t + dt,
        });
    }
    let a = build_a(dt);
    let x = a * state.x;
    let mut p = a * state.p * a.transpose() + build_q(dt, cfg.sigma_a, cfg.q_form);
    symmetrize(&mut p);
    check_finite(
        VanillaState {
            x,
            p,
            t: state.t + dt,
        },
        "time update",
    )
}

/// Scalar range update; `gate_armed` enables the innovation gate for this call.
pub fn measurement_update(
    state: &VanillaState,
    sample: &RangeSample,
    anchors: &AnchorMap,
    cfg: &VanillaConfig,
    gate_armed: bool,
) -> Result<(VanillaState, UpdateOutcome)> {
    range_update(
        state,
        sample,
        anchors,
        LAYOUT,
        cfg.r_floor,
        cfg.gate_threshold,
        gate_armed,
    )
}

impl FilterState<6> {
    pub fn position(&self) -> Position3 {
        self.position_in(LAYOUT)
    }

    pub fn velocity(&self) -> Vector3<f64> {
        Vector3::new(self.x[1], self.x[3], self.x[5])
    }
}

/// Stateful wrapper that tracks the gate warmup and outcome counts.
#[derive(Clone, Debug)]
pub struct VanillaEkf {
    state: VanillaState,
    config: VanillaConfig,
    accepted: usize,
    rejected: usize,
}

impl VanillaEkf {
    pub fn new(position: Position3, t: f64, config: VanillaConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            state: initial_state(position, t, &config),
            config,
            accepted: 0,
            rejected: 0,
        })
    }

    pub fn state(&self) -> &VanillaState {
        &self.state
    }

    pub fn config(&self) -> &VanillaConfig {
        &self.config
    }

    pub fn accepted(&self) -> usize {
        self.accepted
    }

    pub fn rejected(&self) -> usize {
        self.rejected
    }

    /// Advances to the sample's timestamp, then applies it.
    pub fn process_range(
        &mut self,
        sample: &RangeSample,
        anchors: &AnchorMap,
    ) -> Result<UpdateOutcome> {
        if sample.t < self.state.t {
            return Err(Error::NonMonotonicTime {
                previous: self.state.t,
                next: sample.t,
            });
        }
        let predicted = time_update(&self.state, sample.t - self.state.t, &self.config)?;
        // Pin the timestamp exactly; `t + (s - t)` can be off by an ulp.
        let predicted = VanillaState {
            t: sample.t,
            ..predicted
        };
        let armed = self.config.gate().armed(self.accepted);
        let (posterior, outcome) =
            measurement_update(&predicted, sample, anchors, &self.config, armed)?;
        self.state = posterior;
        match outcome {
            UpdateOutcome::Accepted { .. } => self.accepted += 1,
            UpdateOutcome::Rejected { .. } => self.rejected += 1,
        }
        Ok(outcome)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn sample(anchor_id: u8, range: f64, sigma_r: f64) -> RangeSample {
        RangeSample {
            t: 0.0,
            anchor_id,
            range,
            sigma_r,
            truth_outlier: false,
        }
    }

    #[test]
    fn transition_examples() {
        assert_eq!(build_a(0.0), Matrix6::identity());
        let a = build_a(0.0125);
        for axis in 0..3 {
            let b = a.fixed_view::<2, 2>(2 * axis, 2 * axis);
            assert_eq!(b, Matrix2::new(1.0, 0.0125, 0.0, 1.0));
        }
        assert_eq!(a[(0, 2)], 0.0);
        assert_eq!(a[(1, 3)], 0.0);
    }

    #[test]
    fn transition_composes() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            let (d1, d2) = (rng.random_range(0.0..2.0), rng.random_range(0.0..2.0));
            let lhs = build_a(d1) * build_a(d2);
            let rhs = build_a(d1 + d2);
            assert!((lhs - rhs).amax() < 1e-15);
        }
    }

    #[test]
    fn process_noise_verbatim_block() {
        for form in [QForm::Paper, QForm::Standard] {
            assert_eq!(build_q(0.0, 0.125, form), Matrix6::zeros());
        }
        let q = build_q(1.0, 0.125, QForm::Paper);
        let expected = Matrix2::new(0.125 / 3.0, 0.125 / 2.0, 0.125 / 2.0, 0.5);
        for axis in 0..3 {
            assert_eq!(q.fixed_view::<2, 2>(2 * axis, 2 * axis), expected);
        }
        assert_eq!(q, q.transpose());
    }

    #[test]
    fn process_noise_standard_is_psd() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..100 {
            let dt = rng.random_range(0.0..1.0);
            let sigma = rng.random_range(0.01..2.0);
            let q = build_q(dt, sigma, QForm::Standard);
            let block = q.fixed_view::<2, 2>(0, 0);
            let expected = Matrix2::new(
                dt.powi(4) / 4.0,
                dt.powi(3) / 2.0,
                dt.powi(3) / 2.0,
                dt * dt,
            ) * sigma;
            assert!((block.into_owned() - expected).amax() < 1e-15);
            let min = q.symmetric_eigenvalues().min();
            assert!(min >= -1e-15, "eigenvalue {min} at dt {dt}");
        }
    }

    #[test]
    fn time_update_moves_position_by_velocity() {
        let cfg = VanillaConfig::default();
        let mut state = initial_state(Position3::new(1.0, 0.0, 0.0), 0.0, &cfg);
        state.x[1] = 2.0;
        let next = time_update(&state, 0.5, &cfg).unwrap();
        assert_eq!(next.x[0], 2.0);
        assert_eq!(next.x[1], 2.0);
        assert_eq!(next.t, 0.5);

        let same = time_update(&state, 0.0, &cfg).unwrap();
        assert_eq!(same, state);

        assert!(matches!(
            time_update(&state, -0.1, &cfg),
            Err(Error::NonMonotonicTime { .. })
        ));
    }

    #[test]
    fn time_update_adds_exactly_q() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for form in [QForm::Paper, QForm::Standard] {
            let cfg = VanillaConfig {
                q_form: form,
                ..Default::default()
            };
            for _ in 0..50 {
                let l = Matrix6::from_fn(|_, _| rng.random_range(-1.0..1.0));
                let state = VanillaState {
                    x: Vector6::from_fn(|_, _| rng.random_range(-5.0..5.0)),
                    p: l * l.transpose(),
                    t: 0.0,
                };
                let dt = rng.random_range(0.001..0.5);
                let next = time_update(&state, dt, &cfg).unwrap();
                let a = build_a(dt);
                let propagated = a * state.p * a.transpose();
                let q = build_q(dt, cfg.sigma_a, form);
                assert!(((next.p - propagated) - q).amax() < 1e-12);
            }
        }
    }

    #[test]
    fn zero_innovation_keeps_mean_and_shrinks_covariance() {
        let anchors = AnchorMap::default();
        let cfg = VanillaConfig::default();
        let state = initial_state(Position3::new(3.0, 4.0, 0.0), 0.0, &cfg);
        let (post, outcome) =
            measurement_update(&state, &sample(0, 5.0, 0.1), &anchors, &cfg, false).unwrap();
        assert_eq!(post.x, state.x);
        assert!(outcome.is_accepted());
        // Variance shrinks along the line of sight, is untouched across it.
        assert!(post.p[(0, 0)] < state.p[(0, 0)]);
        assert!(post.p[(2, 2)] < state.p[(2, 2)]);
        assert_eq!(post.p[(4, 4)], state.p[(4, 4)]);
    }

    #[test]
    fn uninformative_measurement_changes_nothing() {
        let anchors = AnchorMap::default();
        let cfg = VanillaConfig::default();
        let state = initial_state(Position3::new(7.0, 12.0, 1.5), 0.0, &cfg);
        let (post, _) =
            measurement_update(&state, &sample(2, 30.0, 1e9), &anchors, &cfg, false).unwrap();
        assert!((post.x - state.x).norm() < 1e-9);
    }

    #[test]
    fn zero_sigma_is_floored() {
        let anchors = AnchorMap::default();
        let cfg = VanillaConfig::default();
        let state = initial_state(Position3::new(7.0, 12.0, 1.5), 0.0, &cfg);
        let (_, outcome) =
            measurement_update(&state, &sample(1, 15.0, 0.0), &anchors, &cfg, false).unwrap();
        match outcome {
            UpdateOutcome::Accepted { variance, .. } => assert!(variance >= 1e-4),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn gating_is_off_by_default() {
        let anchors = AnchorMap::default();
        let cfg = VanillaConfig {
            gate_warmup: 0,
            ..Default::default()
        };
        let mut ekf = VanillaEkf::new(Position3::new(7.0, 12.0, 1.5), 0.0, cfg).unwrap();
        let mut s = sample(0, 100.0, 0.1);
        s.t = 0.0125;
        assert!(ekf.process_range(&s, &anchors).unwrap().is_accepted());
    }

    #[test]
    fn gating_when_enabled_leaves_state_bit_identical() {
        let anchors = AnchorMap::default();
        let cfg = VanillaConfig {
            gate_threshold: Some(2.0),
            gate_warmup: 0,
            ..Default::default()
        };
        let state = initial_state(Position3::new(7.0, 12.0, 1.5), 0.0, &cfg);
        let r = crate::geometry::predict_range(&state.position(), anchors.get(3).unwrap());
        let (post, outcome) =
            measurement_update(&state, &sample(3, r + 5.0, 0.1), &anchors, &cfg, true).unwrap();
        assert_eq!(post, state);
        assert!(
            matches!(outcome, UpdateOutcome::Rejected { distance } if (distance - 5.0).abs() < 1e-12)
        );
    }

    #[test]
    fn stale_sample_is_an_error() {
        let anchors = AnchorMap::default();
        let mut ekf = VanillaEkf::new(
            Position3::new(7.0, 12.0, 1.5),
            1.0,
            VanillaConfig::default(),
        )
        .unwrap();
        assert!(matches!(
            ekf.process_range(&sample(0, 14.0, 0.1), &anchors),
            Err(Error::NonMonotonicTime { .. })
        ));
    }

    #[test]
    fn config_validation() {
        assert!(VanillaConfig::default().validate().is_ok());
        let bad = VanillaConfig {
            sigma_a: 0.0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let bad = VanillaConfig {
            gate_threshold: Some(-1.0),
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let err = serde_json::from_str::<VanillaConfig>(r#"{"sigma_b": 1.0}"#);
        assert!(err.is_err());
    }
}
