use nalgebra::{DMatrix, DVector, Vector3};
use serde::{Deserialize, Serialize};

use crate::ekf::{FilterState, UpdateOutcome};
use crate::error::{Error, Result};
use crate::fusion::{FusionConfig, FusionEkf};
use crate::geometry::{AnchorMap, Position3, StateLayout, ANCHOR_COUNT};
use crate::log::{EstimateRecord, FilterKind, OutcomeRecord, Record};
use crate::measurement::{ImuSample, RangeSample};
use crate::multilateration::solve_position;
use crate::vanilla::{VanillaConfig, VanillaEkf};

/// Configuration of both estimators.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FilterSettings {
    pub vanilla: VanillaConfig,
    pub fusion: FusionConfig,
}

impl FilterSettings {
    pub fn validate(&self) -> Result<()> {
        self.vanilla.validate()?;
        self.fusion.validate()
    }
}

/// Full filter output at one instant.
#[derive(Clone, Debug, PartialEq)]
pub struct StateEstimate {
    pub t: f64,
    pub filter: FilterKind,
    /// 6 or 9 entries depending on `filter`.
    pub state: DVector<f64>,
    pub covariance: DMatrix<f64>,
}

impl StateEstimate {
    fn from_state<const N: usize>(filter: FilterKind, s: &FilterState<N>) -> Self {
        Self {
            t: s.t,
            filter,
            state: DVector::from_column_slice(s.x.as_slice()),
            covariance: DMatrix::from_column_slice(N, N, s.p.as_slice()),
        }
    }

    pub fn layout(&self) -> StateLayout {
        match self.filter {
            FilterKind::Vanilla => StateLayout::Vanilla6,
            FilterKind::Fusion => StateLayout::Fusion9,
        }
    }

    pub fn position(&self) -> Position3 {
        let [i, j, k] = self.layout().position_slots();
        Position3::new(self.state[i], self.state[j], self.state[k])
    }

    pub fn velocity(&self) -> Vector3<f64> {
        let [i, j, k] = self.layout().position_slots();
        Vector3::new(self.state[i + 1], self.state[j + 1], self.state[k + 1])
    }

    pub fn bias(&self) -> Option<Vector3<f64>> {
        match self.filter {
            FilterKind::Vanilla => None,
            FilterKind::Fusion => Some(Vector3::new(self.state[2], self.state[5], self.state[8])),
        }
    }

    pub fn to_record(&self) -> EstimateRecord {
        let slots = self.layout().position_slots();
        EstimateRecord {
            t: self.t,
            filter: self.filter,
            position: self.position(),
            velocity: self.velocity(),
            position_std: Vector3::from_fn(|i, _| self.covariance[(slots[i], slots[i])].sqrt()),
            bias: self.bias(),
        }
    }
}

/// Everything a replay produces: one estimate and one outcome per range sample
/// after initialization.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ReplayOutput {
    pub estimates: Vec<StateEstimate>,
    pub outcomes: Vec<OutcomeRecord>,
}

impl ReplayOutput {
    pub fn accepted(&self) -> usize {
        self.outcomes.iter().filter(|o| o.accepted).count()
    }

    pub fn rejected(&self) -> usize {
        self.outcomes.len() - self.accepted()
    }

    pub fn estimate_records(&self) -> Vec<EstimateRecord> {
        self.estimates
            .iter()
            .map(StateEstimate::to_record)
            .collect()
    }

    /// Outcome and estimate records interleaved in log order.
    pub fn records(&self) -> Vec<Record> {
        self.outcomes
            .iter()
            .zip(&self.estimates)
            .flat_map(|(o, e)| [Record::Outcome(*o), Record::Estimate(e.to_record())])
            .collect()
    }
}

trait RangeFilter {
    fn process_imu(&mut self, imu: &ImuSample) -> Result<()>;
    fn process_range(&mut self, sample: &RangeSample, anchors: &AnchorMap)
        -> Result<UpdateOutcome>;
    fn snapshot(&self) -> StateEstimate;
}

impl RangeFilter for VanillaEkf {
    fn process_imu(&mut self, _: &ImuSample) -> Result<()> {
        Ok(())
    }

    fn process_range(&mut self, s: &RangeSample, anchors: &AnchorMap) -> Result<UpdateOutcome> {
        VanillaEkf::process_range(self, s, anchors)
    }

    fn snapshot(&self) -> StateEstimate {
        StateEstimate::from_state(FilterKind::Vanilla, self.state())
    }
}

impl RangeFilter for FusionEkf {
    fn process_imu(&mut self, imu: &ImuSample) -> Result<()> {
        FusionEkf::process_imu(self, imu)
    }

    fn process_range(&mut self, s: &RangeSample, anchors: &AnchorMap) -> Result<UpdateOutcome> {
        FusionEkf::process_range(self, s, anchors)
    }

    fn snapshot(&self) -> StateEstimate {
        StateEstimate::from_state(FilterKind::Fusion, self.state())
    }
}

/// Index of the range record that completes the first full anchor round, and
/// the position fix computed from the latest range to each anchor.
fn initial_fix(records: &[Record], anchors: &AnchorMap) -> Result<Option<(usize, Position3)>> {
    let mut latest: [Option<f64>; ANCHOR_COUNT] = [None; ANCHOR_COUNT];
    for (idx, record) in records.iter().enumerate() {
        let Record::Range(sample) = record else {
            continue;
        };
        anchors.get(sample.anchor_id)?;
        latest[sample.anchor_id as usize] = Some(sample.range);
        if latest.iter().all(Option::is_some) {
            let observations: Vec<_> = anchors
                .iter()
                .zip(latest)
                .map(|(a, r)| (a.position, r.expect("all anchors seen")))
                .collect();
            let fix = solve_position(&observations, anchors.centroid())?;
            return Ok(Some((idx, fix)));
        }
    }
    Ok(None)
}

fn check_sorted(records: &[Record]) -> Result<()> {
    for pair in records.windows(2) {
        let (a, b) = (pair[0].t(), pair[1].t());
        if b < a {
            return Err(Error::NonMonotonicTime {
                previous: a,
                next: b,
            });
        }
    }
    Ok(())
}

/// Runs one filter over a time-sorted log.
///
/// The filter is seeded by a batch position fix over the first full round of
/// six anchors (velocity zero), timestamped at the round's last sample; those
/// samples are not re-applied. The vanilla filter ignores IMU records; the
/// fusion filter holds the latest IMU acceleration from before the seed time.
pub fn replay(
    records: &[Record],
    kind: FilterKind,
    settings: &FilterSettings,
    anchors: &AnchorMap,
) -> Result<ReplayOutput> {
    check_sorted(records)?;
    let has_ranges = records.iter().any(|r| matches!(r, Record::Range(_)));
    if !has_ranges {
        return Ok(ReplayOutput::default());
    }
    if kind == FilterKind::Fusion && !records.iter().any(|r| matches!(r, Record::Imu(_))) {
        return Err(Error::InsufficientInput(
            "the log contains no `imu` records; the fusion filter needs them".into(),
        ));
    }
    let Some((start, fix)) = initial_fix(records, anchors)? else {
        return Err(Error::InsufficientInput(
            "the log never contains `range` records from all 6 anchors".into(),
        ));
    };
    let t0 = records[start].t();

    match kind {
        FilterKind::Vanilla => {
            let filter = VanillaEkf::new(fix, t0, settings.vanilla.clone())?;
            run(filter, kind, &records[start + 1..], anchors)
        }
        FilterKind::Fusion => {
            let mut filter = FusionEkf::new(fix, t0, settings.fusion.clone())?;
            if let Some(accel) = records[..start].iter().rev().find_map(|r| match r {
                Record::Imu(imu) => Some(imu.accel),
                _ => None,
            }) {
                filter.hold_accel(accel);
            }
            run(filter, kind, &records[start + 1..], anchors)
        }
    }
}

fn run<F: RangeFilter>(
    mut filter: F,
    kind: FilterKind,
    records: &[Record],
    anchors: &AnchorMap,
) -> Result<ReplayOutput> {
    let mut out = ReplayOutput::default();
    for record in records {
        match record {
            Record::Imu(imu) => filter.process_imu(imu)?,
            Record::Range(sample) => {
                let outcome = filter.process_range(sample, anchors)?;
                out.outcomes.push(OutcomeRecord {
                    t: sample.t,
                    filter: kind,
                    anchor: sample.anchor_id,
                    accepted: outcome.is_accepted(),
                    distance: outcome.distance(),
                });
                out.estimates.push(filter.snapshot());
            }
            _ => {}
        }
    }
    Ok(out)
}
