//! One-shot simulate → filter → evaluate pipeline.

use crate::config::RunConfig;
use crate::error::Result;
use crate::eval::{evaluate, replay, EstimatorRun, EvalReport, ReplayOutput};
use crate::log::{sim_records, FilterKind, LogData, Record};
use crate::sim::simulate;

#[derive(Clone, Debug)]
pub struct Experiment {
    /// The simulated log, sorted.
    pub log: Vec<Record>,
    pub outputs: Vec<(FilterKind, ReplayOutput)>,
    pub report: EvalReport,
}

pub fn simulate_log(cfg: &RunConfig) -> Result<Vec<Record>> {
    let run = simulate(&cfg.trajectory, &cfg.anchors, &cfg.noise)?;
    Ok(sim_records(&run))
}

/// Simulates the configured flight and scores both filters on it.
pub fn run_experiment(cfg: &RunConfig) -> Result<Experiment> {
    cfg.validate()?;
    let log = simulate_log(cfg)?;
    let outputs = FilterKind::ALL
        .iter()
        .map(|&kind| Ok((kind, replay(&log, kind, &cfg.filters, &cfg.anchors)?)))
        .collect::<Result<Vec<_>>>()?;
    let data = LogData::from_records(&log);
    let estimates: Vec<_> = outputs.iter().map(|(_, o)| o.estimate_records()).collect();
    let runs: Vec<EstimatorRun<'_>> = outputs
        .iter()
        .zip(&estimates)
        .map(|((kind, out), est)| EstimatorRun {
            filter: *kind,
            estimates: est,
            outcomes: &out.outcomes,
        })
        .collect();
    let report = evaluate(&data.truth, &data.ranges, &runs, &cfg.eval)?;
    Ok(Experiment {
        log,
        outputs,
        report,
    })
}
