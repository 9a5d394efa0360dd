use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Position3;
use crate::log::{EstimateRecord, TruthRecord};

/// Position error statistics of one estimator over one run.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorStats {
    pub max_error: f64,
    pub mean_error: f64,
    pub rmse_per_axis: [f64; 3],
    /// Estimates that entered the statistics.
    pub samples: usize,
}

/// Linear interpolation of the truth position at `t`; `None` outside the covered span.
pub fn truth_position_at(truth: &[TruthRecord], t: f64) -> Option<Position3> {
    let (first, last) = (truth.first()?, truth.last()?);
    if t < first.t || t > last.t {
        return None;
    }
    let hi = truth.partition_point(|s| s.t < t);
    if hi == 0 {
        return Some(first.position);
    }
    let (a, b) = (&truth[hi - 1], &truth[hi]);
    if b.t == t {
        return Some(b.position);
    }
    let w = (t - a.t) / (b.t - a.t);
    Some(a.position + (b.position - a.position) * w)
}

/// Euclidean position errors against linearly interpolated truth, skipping
/// estimates earlier than `warmup` seconds after the start of the truth track
/// and any estimate the truth does not cover.
pub fn position_errors(
    estimates: &[EstimateRecord],
    truth: &[TruthRecord],
    warmup: f64,
) -> Result<ErrorStats> {
    let start = truth
        .first()
        .ok_or_else(|| Error::InsufficientInput("no truth records".into()))?
        .t
        + warmup;
    let mut max_error = 0.0f64;
    let mut sum = 0.0;
    let mut sum_sq = Vector3::<f64>::zeros();
    let mut samples = 0usize;
    for e in estimates.iter().filter(|e| e.t >= start) {
        let Some(reference) = truth_position_at(truth, e.t) else {
            continue;
        };
        let delta = e.position - reference;
        let err = delta.norm();
        max_error = max_error.max(err);
        sum += err;
        sum_sq += delta.component_mul(&delta);
        samples += 1;
    }
    if samples == 0 {
        return Err(Error::InsufficientInput(
            "no estimates overlap the truth track after the warmup window".into(),
        ));
    }
    let n = samples as f64;
    let rmse = (sum_sq / n).map(f64::sqrt);
    Ok(ErrorStats {
        max_error,
        mean_error: sum / n,
        rmse_per_axis: [rmse.x, rmse.y, rmse.z],
        samples,
    })
}
