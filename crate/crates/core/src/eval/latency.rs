//! Estimation delay from the peak of the normalized cross-correlation between
//! the truth and estimate position series on one axis.

use crate::error::{Error, Result};
use crate::log::{EstimateRecord, TruthRecord};

use super::metrics::truth_position_at;

pub const GRID_HZ: f64 = 100.0;
/// Lags searched on either side of zero, in grid steps (±2 s).
pub const MAX_LAG_STEPS: i64 = 200;
pub const MIN_OVERLAP_S: f64 = 10.0;
pub const MIN_TRUTH_VARIANCE: f64 = 1e-4;

fn estimate_at(estimates: &[EstimateRecord], t: f64, axis: usize) -> Option<f64> {
    let (first, last) = (estimates.first()?, estimates.last()?);
    if t < first.t || t > last.t {
        return None;
    }
    let hi = estimates.partition_point(|e| e.t < t);
    if hi == 0 || estimates[hi].t == t {
        return Some(estimates[hi].position[axis]);
    }
    let (a, b) = (&estimates[hi - 1], &estimates[hi]);
    let w = (t - a.t) / (b.t - a.t);
    Some(a.position[axis] + (b.position[axis] - a.position[axis]) * w)
}

fn variance(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n
}

/// Pearson correlation of two equal-length series; 0 when either is flat.
fn correlation(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa == 0.0 || sbb == 0.0 {
        0.0
    } else {
        sab / (saa * sbb).sqrt()
    }
}

/// Both series resampled onto the common 100 Hz grid.
struct Resampled {
    truth: [Vec<f64>; 3],
    estimate: [Vec<f64>; 3],
}

fn resample(estimates: &[EstimateRecord], truth: &[TruthRecord]) -> Result<Resampled> {
    let span = |first: Option<f64>, last: Option<f64>| first.zip(last);
    let (Some((ts, te)), Some((es, ee))) = (
        span(truth.first().map(|s| s.t), truth.last().map(|s| s.t)),
        span(
            estimates.first().map(|e| e.t),
            estimates.last().map(|e| e.t),
        ),
    ) else {
        return Err(Error::InsufficientInput(
            "latency needs truth and estimates".into(),
        ));
    };
    let (start, end) = (ts.max(es), te.min(ee));
    if end - start < MIN_OVERLAP_S {
        return Err(Error::InsufficientInput(format!(
            "latency needs {MIN_OVERLAP_S} s of overlapping data, got {:.2} s",
            (end - start).max(0.0)
        )));
    }
    let first = (start * GRID_HZ).ceil() as i64;
    let last = (end * GRID_HZ).floor() as i64;
    let mut out = Resampled {
        truth: Default::default(),
        estimate: Default::default(),
    };
    for k in first..=last {
        let t = k as f64 / GRID_HZ;
        let (Some(p), Some(_)) = (truth_position_at(truth, t), estimate_at(estimates, t, 0)) else {
            continue;
        };
        for axis in 0..3 {
            out.truth[axis].push(p[axis]);
            out.estimate[axis].push(estimate_at(estimates, t, axis).expect("inside span"));
        }
    }
    Ok(out)
}

/// Axis with the largest truth variance.
pub fn dominant_axis(truth: &[TruthRecord]) -> usize {
    let series: Vec<Vec<f64>> = (0..3)
        .map(|axis| truth.iter().map(|s| s.position[axis]).collect())
        .collect();
    (0..3)
        .max_by(|&a, &b| variance(&series[a]).total_cmp(&variance(&series[b])))
        .unwrap_or(0)
}

/// Lag in seconds (positive when the estimate trails the truth) that maximizes
/// the normalized cross-correlation on `axis`, searched over ±2 s in 0.01 s steps.
/// `axis = None` picks [`dominant_axis`].
pub fn latency(
    estimates: &[EstimateRecord],
    truth: &[TruthRecord],
    axis: Option<usize>,
) -> Result<f64> {
    let axis = axis.unwrap_or_else(|| dominant_axis(truth));
    if axis > 2 {
        return Err(Error::Config(format!(
            "latency axis {axis} is not 0, 1 or 2"
        )));
    }
    let grid = resample(estimates, truth)?;
    let (x, y) = (&grid.truth[axis], &grid.estimate[axis]);
    let truth_var = variance(x);
    if truth_var < MIN_TRUTH_VARIANCE {
        return Err(Error::InsufficientExcitation {
            axis,
            variance: truth_var,
        });
    }
    let n = x.len() as i64;
    let mut best = (f64::NEG_INFINITY, 0i64);
    for lag in -MAX_LAG_STEPS..=MAX_LAG_STEPS {
        // truth[i] against estimate[i + lag].
        let (lo, hi) = (0.max(-lag), n.min(n - lag));
        if hi - lo < 2 {
            continue;
        }
        let a = &x[lo as usize..hi as usize];
        let b = &y[(lo + lag) as usize..(hi + lag) as usize];
        let score = correlation(a, b);
        if score > best.0 {
            best = (score, lag);
        }
    }
    Ok(best.1 as f64 / GRID_HZ)
}
