//! Line-delimited JSON log shared by every stage of the pipeline.
//!
//! One object per line, each with a `t` (seconds) and a `type`:
//!
//! ```text
//! {"t":0.0125,"type":"range","anchor":1,"r":7.52,"sigma":0.1,"outlier":false}
//! {"t":0.02,"type":"imu","ax":0.01,"ay":-0.2,"az":0.03}
//! {"t":0.01,"type":"truth","px":..,"py":..,"pz":..,"vx":..,"vy":..,"vz":..,"abx":..,"aby":..,"abz":..}
//! {"t":0.0125,"type":"outcome","filter":"fusion","anchor":1,"accepted":true,"d":0.04,"innovation":-0.04}
//! {"t":0.0125,"type":"estimate","filter":"fusion","px":..,"py":..,"pz":..,"vx":..,"vy":..,"vz":..,"spx":..,"spy":..,"spz":..,"abx":..,"aby":..,"abz":..}
//! ```
//!
//! Records are sorted by `t`; equal timestamps order as
//! truth < imu < range < outcome < estimate.

use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use nalgebra::Vector3;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::geometry::Position3;
use crate::measurement::{ImuSample, RangeSample};
use crate::sim::{SimRun, TruthSample};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FilterKind {
    Vanilla,
    Fusion,
}

impl FilterKind {
    pub const ALL: [FilterKind; 2] = [FilterKind::Vanilla, FilterKind::Fusion];

    pub fn as_str(self) -> &'static str {
        match self {
            FilterKind::Vanilla => "vanilla",
            FilterKind::Fusion => "fusion",
        }
    }
}

impl fmt::Display for FilterKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for FilterKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "vanilla" => Ok(FilterKind::Vanilla),
            "fusion" => Ok(FilterKind::Fusion),
            other => Err(Error::Config(format!(
                "unknown filter `{other}` (expected vanilla or fusion)"
            ))),
        }
    }
}

/// Ground truth as logged (acceleration is not part of the record).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TruthRecord {
    pub t: f64,
    pub position: Position3,
    pub velocity: Vector3<f64>,
    pub bias: Vector3<f64>,
}

impl From<&TruthSample> for TruthRecord {
    fn from(s: &TruthSample) -> Self {
        Self {
            t: s.t,
            position: s.position,
            velocity: s.velocity,
            bias: s.bias,
        }
    }
}

/// Per-update gating record.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OutcomeRecord {
    pub t: f64,
    pub filter: FilterKind,
    pub anchor: u8,
    pub accepted: bool,
    /// `|r̄ - r|`.
    pub distance: f64,
}

/// Filter output after one range sample.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EstimateRecord {
    pub t: f64,
    pub filter: FilterKind,
    pub position: Position3,
    pub velocity: Vector3<f64>,
    /// Position standard deviations from the covariance diagonal.
    pub position_std: Vector3<f64>,
    /// Accelerometer bias, fusion filter only.
    pub bias: Option<Vector3<f64>>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Record {
    Truth(TruthRecord),
    Imu(ImuSample),
    Range(RangeSample),
    Outcome(OutcomeRecord),
    Estimate(EstimateRecord),
}

impl Record {
    pub fn t(&self) -> f64 {
        match self {
            Record::Truth(r) => r.t,
            Record::Imu(r) => r.t,
            Record::Range(r) => r.t,
            Record::Outcome(r) => r.t,
            Record::Estimate(r) => r.t,
        }
    }

    /// Tie-break rank for equal timestamps.
    pub fn rank(&self) -> u8 {
        match self {
            Record::Truth(_) => 0,
            Record::Imu(_) => 1,
            Record::Range(_) => 2,
            Record::Outcome(_) => 3,
            Record::Estimate(_) => 4,
        }
    }

    pub fn type_name(&self) -> &'static str {
        match self {
            Record::Truth(_) => "truth",
            Record::Imu(_) => "imu",
            Record::Range(_) => "range",
            Record::Outcome(_) => "outcome",
            Record::Estimate(_) => "estimate",
        }
    }

    pub fn to_line(&self) -> Result<String> {
        let t = self.t();
        let kind = self.type_name();
        let line = match self {
            Record::Truth(r) => line_json(t, kind, &TruthBody::from(r)),
            Record::Imu(r) => line_json(t, kind, &ImuBody::from(r)),
            Record::Range(r) => line_json(t, kind, &RangeBody::from(r)),
            Record::Outcome(r) => line_json(t, kind, &OutcomeBody::from(r)),
            Record::Estimate(r) => line_json(t, kind, &EstimateBody::from(r)),
        }?;
        Ok(line)
    }

    /// Parses one line; `line_no` is only used for error messages.
    pub fn from_line(text: &str, line_no: usize) -> Result<Self> {
        let schema = |message: String| Error::Schema {
            line: line_no,
            message,
        };
        let value: Value =
            serde_json::from_str(text).map_err(|e| schema(format!("invalid JSON: {e}")))?;
        let Value::Object(mut map) = value else {
            return Err(schema("expected a JSON object".into()));
        };
        let t = map
            .remove("t")
            .and_then(|v| v.as_f64())
            .ok_or_else(|| schema("missing or non-numeric `t`".into()))?;
        if !t.is_finite() {
            return Err(schema("non-finite `t`".into()));
        }
        let kind = match map.remove("type") {
            Some(Value::String(s)) => s,
            _ => return Err(schema("missing or non-string `type`".into())),
        };
        let body = Value::Object(map);
        fn parse<T: DeserializeOwned>(body: Value) -> std::result::Result<T, String> {
            serde_json::from_value(body).map_err(|e| e.to_string())
        }
        let record = match kind.as_str() {
            "truth" => parse::<TruthBody>(body).map(|b| Record::Truth(b.into_record(t))),
            "imu" => parse::<ImuBody>(body).map(|b| Record::Imu(b.into_record(t))),
            "range" => parse::<RangeBody>(body).and_then(|b| b.into_record(t)),
            "outcome" => parse::<OutcomeBody>(body).map(|b| Record::Outcome(b.into_record(t))),
            "estimate" => parse::<EstimateBody>(body).map(|b| Record::Estimate(b.into_record(t))),
            other => Err(format!("unknown record type `{other}`")),
        }
        .map_err(|m| schema(format!("{kind} record: {m}")))?;
        Ok(record)
    }
}

#[derive(Serialize)]
struct Line<'a, T: Serialize> {
    t: f64,
    #[serde(rename = "type")]
    kind: &'a str,
    #[serde(flatten)]
    body: &'a T,
}

fn line_json<T: Serialize>(t: f64, kind: &str, body: &T) -> serde_json::Result<String> {
    serde_json::to_string(&Line { t, kind, body })
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TruthBody {
    px: f64,
    py: f64,
    pz: f64,
    vx: f64,
    vy: f64,
    vz: f64,
    abx: f64,
    aby: f64,
    abz: f64,
}

impl From<&TruthRecord> for TruthBody {
    fn from(r: &TruthRecord) -> Self {
        Self {
            px: r.position.x,
            py: r.position.y,
            pz: r.position.z,
            vx: r.velocity.x,
            vy: r.velocity.y,
            vz: r.velocity.z,
            abx: r.bias.x,
            aby: r.bias.y,
            abz: r.bias.z,
        }
    }
}

impl TruthBody {
    fn into_record(self, t: f64) -> TruthRecord {
        TruthRecord {
            t,
            position: Position3::new(self.px, self.py, self.pz),
            velocity: Vector3::new(self.vx, self.vy, self.vz),
            bias: Vector3::new(self.abx, self.aby, self.abz),
        }
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ImuBody {
    ax: f64,
    ay: f64,
    az: f64,
}

impl From<&ImuSample> for ImuBody {
    fn from(r: &ImuSample) -> Self {
        Self {
            ax: r.accel.x,
            ay: r.accel.y,
            az: r.accel.z,
        }
    }
}

impl ImuBody {
    fn into_record(self, t: f64) -> ImuSample {
        ImuSample {
            t,
            accel: Vector3::new(self.ax, self.ay, self.az),
        }
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RangeBody {
    anchor: u8,
    r: f64,
    sigma: f64,
    outlier: bool,
}

impl From<&RangeSample> for RangeBody {
    fn from(r: &RangeSample) -> Self {
        Self {
            anchor: r.anchor_id,
            r: r.range,
            sigma: r.sigma_r,
            outlier: r.truth_outlier,
        }
    }
}

impl RangeBody {
    fn into_record(self, t: f64) -> std::result::Result<Record, String> {
        if !(self.r >= 0.0) {
            return Err(format!("range {} must be >= 0", self.r));
        }
        if !(self.sigma > 0.0) {
            return Err(format!("sigma {} must be > 0", self.sigma));
        }
        Ok(Record::Range(RangeSample {
            t,
            anchor_id: self.anchor,
            range: self.r,
            sigma_r: self.sigma,
            truth_outlier: self.outlier,
        }))
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct OutcomeBody {
    filter: FilterKind,
    anchor: u8,
    accepted: bool,
    d: f64,
}

impl From<&OutcomeRecord> for OutcomeBody {
    fn from(r: &OutcomeRecord) -> Self {
        Self {
            filter: r.filter,
            anchor: r.anchor,
            accepted: r.accepted,
            d: r.distance,
        }
    }
}

impl OutcomeBody {
    fn into_record(self, t: f64) -> OutcomeRecord {
        OutcomeRecord {
            t,
            filter: self.filter,
            anchor: self.anchor,
            accepted: self.accepted,
            distance: self.d,
        }
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct EstimateBody {
    filter: FilterKind,
    px: f64,
    py: f64,
    pz: f64,
    vx: f64,
    vy: f64,
    vz: f64,
    spx: f64,
    spy: f64,
    spz: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    abx: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    aby: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    abz: Option<f64>,
}

impl From<&EstimateRecord> for EstimateBody {
    fn from(r: &EstimateRecord) -> Self {
        Self {
            filter: r.filter,
            px: r.position.x,
            py: r.position.y,
            pz: r.position.z,
            vx: r.velocity.x,
            vy: r.velocity.y,
            vz: r.velocity.z,
            spx: r.position_std.x,
            spy: r.position_std.y,
            spz: r.position_std.z,
            abx: r.bias.map(|b| b.x),
            aby: r.bias.map(|b| b.y),
            abz: r.bias.map(|b| b.z),
        }
    }
}

impl EstimateBody {
    fn into_record(self, t: f64) -> EstimateRecord {
        let bias = match (self.abx, self.aby, self.abz) {
            (Some(x), Some(y), Some(z)) => Some(Vector3::new(x, y, z)),
            _ => None,
        };
        EstimateRecord {
            t,
            filter: self.filter,
            position: Position3::new(self.px, self.py, self.pz),
            velocity: Vector3::new(self.vx, self.vy, self.vz),
            position_std: Vector3::new(self.spx, self.spy, self.spz),
            bias,
        }
    }
}

/// Sorts by timestamp, breaking ties by record type. Stable.
pub fn sort_records(records: &mut [Record]) {
    records.sort_by(|a, b| a.t().total_cmp(&b.t()).then(a.rank().cmp(&b.rank())));
}

pub fn write_records<W: Write>(mut out: W, records: &[Record]) -> Result<()> {
    for r in records {
        writeln!(out, "{}", r.to_line()?)?;
    }
    out.flush()?;
    Ok(())
}

/// Reads a log, skipping blank lines. Line numbers in errors are 1-based.
pub fn read_records<R: BufRead>(input: R) -> Result<Vec<Record>> {
    let mut records = Vec::new();
    for (idx, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        records.push(Record::from_line(&line, idx + 1)?);
    }
    Ok(records)
}

/// Merges a simulated run into one sorted record stream.
pub fn sim_records(run: &SimRun) -> Vec<Record> {
    let mut records: Vec<Record> = run
        .truth
        .iter()
        .map(|s| Record::Truth(s.into()))
        .chain(run.imu.iter().copied().map(Record::Imu))
        .chain(run.ranges.iter().copied().map(Record::Range))
        .collect();
    sort_records(&mut records);
    records
}

/// A log split by record type, each list in file order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct LogData {
    pub truth: Vec<TruthRecord>,
    pub imu: Vec<ImuSample>,
    pub ranges: Vec<RangeSample>,
    pub outcomes: Vec<OutcomeRecord>,
    pub estimates: Vec<EstimateRecord>,
}

impl LogData {
    pub fn from_records(records: &[Record]) -> Self {
        let mut data = LogData::default();
        for r in records {
            match r {
                Record::Truth(x) => data.truth.push(*x),
                Record::Imu(x) => data.imu.push(*x),
                Record::Range(x) => data.ranges.push(*x),
                Record::Outcome(x) => data.outcomes.push(*x),
                Record::Estimate(x) => data.estimates.push(*x),
            }
        }
        data
    }
}
