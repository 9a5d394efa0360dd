//! Replays logs through the filters and scores them against ground truth.

mod latency;
mod metrics;
mod replay;
mod report;

pub use latency::{dominant_axis, latency, GRID_HZ, MAX_LAG_STEPS, MIN_OVERLAP_S};
pub use metrics::{position_errors, truth_position_at, ErrorStats};
pub use replay::{replay, FilterSettings, ReplayOutput, StateEstimate};
pub use report::{
    evaluate, gating_stats, summarize, write_timeseries_csv, EstimatorReport, EstimatorRun,
    EstimatorSummary, EvalConfig, EvalReport, GatingStats, Spread,
};
