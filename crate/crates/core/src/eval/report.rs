use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::log::{EstimateRecord, FilterKind, OutcomeRecord, TruthRecord};
use crate::measurement::RangeSample;

use super::latency::{dominant_axis, latency};
use super::metrics::{position_errors, truth_position_at};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    /// Seconds at the start of the run excluded from error statistics and gating counts.
    pub warmup: f64,
    /// Axis for the latency estimate; `None` uses the axis with the largest truth variance.
    pub latency_axis: Option<usize>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            warmup: 2.0,
            latency_axis: None,
        }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.warmup >= 0.0 && self.warmup.is_finite()) {
            return Err(Error::Config("eval: warmup must be >= 0".into()));
        }
        if matches!(self.latency_axis, Some(a) if a > 2) {
            return Err(Error::Config("eval: latency_axis must be 0, 1 or 2".into()));
        }
        Ok(())
    }
}

/// Gate decisions scored against the simulator's outlier labels.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GatingStats {
    pub outliers: usize,
    pub outliers_rejected: usize,
    pub clean: usize,
    pub clean_rejected: usize,
}

impl GatingStats {
    pub fn outlier_rejection_rate(&self) -> f64 {
        ratio(self.outliers_rejected, self.outliers)
    }

    pub fn false_rejection_rate(&self) -> f64 {
        ratio(self.clean_rejected, self.clean)
    }
}

fn ratio(a: usize, b: usize) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

/// Joins outcomes to their range samples by `(t, anchor)` and counts decisions
/// for samples at or after `from_t`.
pub fn gating_stats(
    ranges: &[RangeSample],
    outcomes: &[OutcomeRecord],
    from_t: f64,
) -> GatingStats {
    let mut stats = GatingStats::default();
    let mut cursor = 0;
    for o in outcomes.iter().filter(|o| o.t >= from_t) {
        while cursor < ranges.len()
            && (ranges[cursor].t < o.t
                || (ranges[cursor].t == o.t && ranges[cursor].anchor_id != o.anchor))
        {
            cursor += 1;
        }
        let Some(sample) = ranges.get(cursor) else {
            break;
        };
        if sample.t != o.t {
            continue;
        }
        if sample.truth_outlier {
            stats.outliers += 1;
            stats.outliers_rejected += usize::from(!o.accepted);
        } else {
            stats.clean += 1;
            stats.clean_rejected += usize::from(!o.accepted);
        }
    }
    stats
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EstimatorReport {
    pub filter: FilterKind,
    pub max_error: f64,
    pub mean_error: f64,
    pub rmse_per_axis: [f64; 3],
    /// Seconds the estimate trails the truth; `None` when the motion is too small to measure it.
    pub latency: Option<f64>,
    pub latency_axis: usize,
    pub accepted_count: usize,
    pub rejected_count: usize,
    pub samples: usize,
    pub gating: GatingStats,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub warmup: f64,
    pub estimators: Vec<EstimatorReport>,
}

/// One estimator's output as read back from a log.
pub struct EstimatorRun<'a> {
    pub filter: FilterKind,
    pub estimates: &'a [EstimateRecord],
    pub outcomes: &'a [OutcomeRecord],
}

pub fn evaluate(
    truth: &[TruthRecord],
    ranges: &[RangeSample],
    runs: &[EstimatorRun<'_>],
    cfg: &EvalConfig,
) -> Result<EvalReport> {
    cfg.validate()?;
    let axis = cfg.latency_axis.unwrap_or_else(|| dominant_axis(truth));
    let from_t = truth.first().map_or(0.0, |s| s.t) + cfg.warmup;
    let mut estimators = Vec::with_capacity(runs.len());
    for run in runs {
        let stats = position_errors(run.estimates, truth, cfg.warmup)?;
        let latency = match latency(run.estimates, truth, Some(axis)) {
            Ok(lag) => Some(lag),
            Err(Error::InsufficientExcitation { .. } | Error::InsufficientInput(_)) => None,
            Err(e) => return Err(e),
        };
        let accepted = run.outcomes.iter().filter(|o| o.accepted).count();
        estimators.push(EstimatorReport {
            filter: run.filter,
            max_error: stats.max_error,
            mean_error: stats.mean_error,
            rmse_per_axis: stats.rmse_per_axis,
            latency,
            latency_axis: axis,
            accepted_count: accepted,
            rejected_count: run.outcomes.len() - accepted,
            samples: stats.samples,
            gating: gating_stats(ranges, run.outcomes, from_t),
        });
    }
    Ok(EvalReport {
        warmup: cfg.warmup,
        estimators,
    })
}

impl EvalReport {
    pub fn estimator(&self, filter: FilterKind) -> Option<&EstimatorReport> {
        self.estimators.iter().find(|e| e.filter == filter)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    /// `(metric, estimator, value)` rows; latency is omitted when unavailable.
    pub fn metric_rows(&self) -> Vec<(&'static str, FilterKind, f64)> {
        let mut rows = Vec::new();
        for e in &self.estimators {
            rows.push(("max_error", e.filter, e.max_error));
            rows.push(("mean_error", e.filter, e.mean_error));
            rows.push(("rmse_x", e.filter, e.rmse_per_axis[0]));
            rows.push(("rmse_y", e.filter, e.rmse_per_axis[1]));
            rows.push(("rmse_z", e.filter, e.rmse_per_axis[2]));
            if let Some(lag) = e.latency {
                rows.push(("latency", e.filter, lag));
            }
            rows.push(("accepted_count", e.filter, e.accepted_count as f64));
            rows.push(("rejected_count", e.filter, e.rejected_count as f64));
        }
        rows
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "metric,estimator,value")?;
        for (metric, filter, value) in self.metric_rows() {
            writeln!(out, "{metric},{filter},{value}")?;
        }
        Ok(())
    }

    /// Two-column summary: maximum and mean error, then latency.
    pub fn table(&self) -> String {
        let mut s = String::new();
        s.push_str(&format!(
            "{:<12} {:>17} {:>14} {:>12}\n",
            "", "Maximum Error (m)", "Mean Error (m)", "Latency (s)"
        ));
        for e in &self.estimators {
            let name = match e.filter {
                FilterKind::Vanilla => "Vanilla EKF",
                FilterKind::Fusion => "Fusion EKF",
            };
            let lag = e
                .latency
                .map_or_else(|| "n/a".to_string(), |l| format!("{l:.2}"));
            s.push_str(&format!(
                "{name:<12} {:>17.2} {:>14.2} {:>12}\n",
                e.max_error, e.mean_error, lag
            ));
        }
        s
    }
}

/// Per-timestep truth vs estimate, for plotting.
pub fn write_timeseries_csv<W: Write>(
    mut out: W,
    estimates: &[EstimateRecord],
    truth: &[TruthRecord],
) -> Result<()> {
    writeln!(
        out,
        "t,truth_x,truth_y,truth_z,est_x,est_y,est_z,error,bias_x,bias_y,bias_z"
    )?;
    for e in estimates {
        let Some(p) = truth_position_at(truth, e.t) else {
            continue;
        };
        let bias = e
            .bias
            .map_or_else(|| ",,".to_string(), |b| format!("{},{},{}", b.x, b.y, b.z));
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            e.t,
            p.x,
            p.y,
            p.z,
            e.position.x,
            e.position.y,
            e.position.z,
            (e.position - p).norm(),
            bias
        )?;
    }
    Ok(())
}

/// Mean and sample standard deviation of a metric across runs.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Spread {
    pub mean: f64,
    pub std: f64,
}

impl Spread {
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let std = if values.len() > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        Some(Self { mean, std })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EstimatorSummary {
    pub filter: FilterKind,
    pub runs: usize,
    pub max_error: Spread,
    pub mean_error: Spread,
    /// Over the runs where latency was measurable.
    pub latency: Option<Spread>,
}

/// Aggregates a seed sweep.
pub fn summarize(reports: &[EvalReport]) -> Vec<EstimatorSummary> {
    FilterKind::ALL
        .iter()
        .filter_map(|&filter| {
            let rows: Vec<&EstimatorReport> =
                reports.iter().filter_map(|r| r.estimator(filter)).collect();
            let pick = |f: fn(&EstimatorReport) -> f64| -> Vec<f64> {
                rows.iter().map(|r| f(r)).collect()
            };
            let latencies: Vec<f64> = rows.iter().filter_map(|r| r.latency).collect();
            Some(EstimatorSummary {
                filter,
                runs: rows.len(),
                max_error: Spread::of(&pick(|r| r.max_error))?,
                mean_error: Spread::of(&pick(|r| r.mean_error))?,
                latency: Spread::of(&latencies),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn outcome(t: f64, anchor: u8, accepted: bool) -> OutcomeRecord {
        OutcomeRecord {
            t,
            filter: FilterKind::Fusion,
            anchor,
            accepted,
            distance: 0.0,
        }
    }

    fn range(t: f64, anchor_id: u8, truth_outlier: bool) -> RangeSample {
        RangeSample {
            t,
            anchor_id,
            range: 1.0,
            sigma_r: 0.1,
            truth_outlier,
        }
    }

    #[test]
    fn gating_join() {
        let ranges = vec![
            range(0.0, 0, false),
            range(1.0, 1, true),
            range(2.0, 2, false),
            range(3.0, 3, true),
            range(4.0, 4, false),
        ];
        let outcomes = vec![
            outcome(1.0, 1, false),
            outcome(2.0, 2, true),
            outcome(3.0, 3, true),
            outcome(4.0, 4, false),
        ];
        let s = gating_stats(&ranges, &outcomes, 0.5);
        assert_eq!(
            s,
            GatingStats {
                outliers: 2,
                outliers_rejected: 1,
                clean: 2,
                clean_rejected: 1
            }
        );
        assert_eq!(s.outlier_rejection_rate(), 0.5);
        let late = gating_stats(&ranges, &outcomes, 2.5);
        assert_eq!(late.outliers + late.clean, 2);
    }

    #[test]
    fn spread() {
        let s = Spread::of(&[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(s.mean, 2.0);
        assert!((s.std - 1.0).abs() < 1e-15);
        assert!(Spread::of(&[]).is_none());
    }

    fn finite() -> impl Strategy<Value = f64> {
        any::<f64>().prop_filter("finite", |v| v.is_finite())
    }

    proptest! {
        #[test]
        fn report_json_round_trips(
            max in finite(), mean in finite(), rmse in (finite(), finite(), finite()),
            lag in proptest::option::of(finite()), a in 0usize..100000, r in 0usize..1000,
        ) {
            let report = EvalReport {
                warmup: 2.0,
                estimators: vec![EstimatorReport {
                    filter: FilterKind::Fusion,
                    max_error: max,
                    mean_error: mean,
                    rmse_per_axis: [rmse.0, rmse.1, rmse.2],
                    latency: lag,
                    latency_axis: 1,
                    accepted_count: a,
                    rejected_count: r,
                    samples: a,
                    gating: GatingStats { outliers: r, outliers_rejected: r, clean: a, clean_rejected: 0 },
                }],
            };
            let back = EvalReport::from_json(&report.to_json().unwrap()).unwrap();
            prop_assert_eq!(back, report);
        }
    }
}
