//! Pieces shared by the 6-state and 9-state filters: the state container,
//! the scalar range update and the innovation gate.

use nalgebra::{SMatrix, SVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{range_jacobian_fixed, AnchorMap, Position3, StateLayout};
use crate::measurement::RangeSample;

/// An `N`-dimensional filter state with its covariance, valid at time `t`.
#[derive(Clone, Debug, PartialEq)]
pub struct FilterState<const N: usize> {
    pub x: SVector<f64, N>,
    pub p: SMatrix<f64, N, N>,
    /// Seconds.
    pub t: f64,
}

impl<const N: usize> FilterState<N> {
    pub fn is_finite(&self) -> bool {
        self.t.is_finite()
            && self.x.iter().all(|v| v.is_finite())
            && self.p.iter().all(|v| v.is_finite())
    }

    /// Largest absolute difference between `P` and its transpose.
    pub fn asymmetry(&self) -> f64 {
        (self.p - self.p.transpose()).amax()
    }

    pub fn min_eigenvalue(&self) -> f64 {
        nalgebra::DMatrix::from_column_slice(N, N, self.p.as_slice())
            .symmetric_eigenvalues()
            .min()
    }

    pub(crate) fn position_in(&self, layout: StateLayout) -> Position3 {
        let [i, j, k] = layout.position_slots();
        Position3::new(self.x[i], self.x[j], self.x[k])
    }
}

/// Result of processing one range sample.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "lowercase")]
pub enum UpdateOutcome {
    /// The update was applied. `variance` is `H P̄ Hᵀ + R`.
    Accepted { innovation: f64, variance: f64 },
    /// `|r̄ - r|` exceeded the gate; the state was left untouched.
    Rejected { distance: f64 },
}

impl UpdateOutcome {
    pub fn is_accepted(&self) -> bool {
        matches!(self, UpdateOutcome::Accepted { .. })
    }

    /// `|r̄ - r|` for either variant.
    pub fn distance(&self) -> f64 {
        match *self {
            UpdateOutcome::Accepted { innovation, .. } => innovation.abs(),
            UpdateOutcome::Rejected { distance } => distance,
        }
    }
}

/// Range-innovation gate: once `warmup` updates have been accepted, samples with
/// `|r̄ - r| > threshold` are skipped.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Gate {
    pub threshold: Option<f64>,
    pub warmup: usize,
}

impl Gate {
    pub fn armed(&self, accepted_so_far: usize) -> bool {
        self.threshold.is_some() && accepted_so_far >= self.warmup
    }
}

pub(crate) fn symmetrize<const N: usize>(p: &mut SMatrix<f64, N, N>) {
    let sym = (*p + p.transpose()) * 0.5;
    *p = sym;
}

pub(crate) fn check_finite<const N: usize>(
    state: FilterState<N>,
    stage: &'static str,
) -> Result<FilterState<N>> {
    if state.is_finite() {
        Ok(state)
    } else {
        Err(Error::NonFiniteState { stage })
    }
}

/// EKF update with a single range sample. `armed` says whether the gate may reject.
pub(crate) fn range_update<const N: usize>(
    prior: &FilterState<N>,
    sample: &RangeSample,
    anchors: &AnchorMap,
    layout: StateLayout,
    r_floor: f64,
    gate_threshold: Option<f64>,
    armed: bool,
) -> Result<(FilterState<N>, UpdateOutcome)> {
    let anchor = anchors.get(sample.anchor_id)?;
    let mobile = prior.position_in(layout);
    let (predicted, h) = range_jacobian_fixed::<N>(&mobile, anchor, layout)?;
    let innovation = sample.range - predicted;

    if let (true, Some(threshold)) = (armed, gate_threshold) {
        let distance = innovation.abs();
        if distance > threshold {
            return Ok((prior.clone(), UpdateOutcome::Rejected { distance }));
        }
    }

    let sigma = sample.sigma_r.max(r_floor);
    let ph_t = prior.p * h.transpose();
    let variance = (h * ph_t)[(0, 0)] + sigma * sigma;
    let gain = ph_t / variance;

    let x = prior.x + gain * innovation;
    let mut p = (SMatrix::<f64, N, N>::identity() - gain * h) * prior.p;
    symmetrize(&mut p);

    let posterior = check_finite(FilterState { x, p, t: prior.t }, "measurement update")?;
    Ok((
        posterior,
        UpdateOutcome::Accepted {
            innovation,
            variance,
        },
    ))
}
