//! Run configuration and the built-in experiment presets.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::{EvalConfig, FilterSettings};
use crate::geometry::AnchorMap;
use crate::sim::{NoiseSpec, Shape, TrajectorySpec};
use crate::vanilla::QForm;

/// Everything needed to regenerate a run: trajectory, noise (including the
/// seed), both filter configurations and the evaluation settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub trajectory: TrajectorySpec,
    #[serde(default)]
    pub noise: NoiseSpec,
    #[serde(default)]
    pub filters: FilterSettings,
    #[serde(default)]
    pub eval: EvalConfig,
    #[serde(default)]
    pub anchors: AnchorMap,
    /// Output directory; a command-line concern, never written to provenance.
    #[serde(default, skip_serializing)]
    pub output: Option<PathBuf>,
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        crate::sim::Trajectory::new(&self.trajectory)?;
        self.noise.validate()?;
        self.filters.validate()?;
        self.eval.validate()
    }

    pub fn seed(&self) -> u64 {
        self.noise.seed
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.noise.seed = seed;
        self
    }

    pub fn preset(name: &str) -> Result<Self> {
        Preset::from_name(name).map(Preset::config)
    }
}

/// Flight envelope of the reference vehicle.
pub const V_MAX: f64 = 1.2;
pub const A_MAX: f64 = 2.0;

/// Middle of the default anchor volume, at flight height.
const HALL_CENTER: [f64; 3] = [7.3, 12.75, 2.0];

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Preset {
    Hover,
    Line,
    Circle,
    Lissajous,
    /// Lissajous at full speed with range outliers and a constant IMU bias.
    /// The vanilla filter uses the standard process-noise form here.
    Table1Proxy,
}

impl Preset {
    pub const ALL: [Preset; 5] = [
        Preset::Hover,
        Preset::Line,
        Preset::Circle,
        Preset::Lissajous,
        Preset::Table1Proxy,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Preset::Hover => "hover",
            Preset::Line => "line",
            Preset::Circle => "circle",
            Preset::Lissajous => "lissajous",
            Preset::Table1Proxy => "table1-proxy",
        }
    }

    pub fn from_name(name: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|p| p.name() == name)
            .ok_or_else(|| {
                let names: Vec<_> = Self::ALL.iter().map(|p| p.name()).collect();
                Error::Config(format!(
                    "unknown preset `{name}` (available: {})",
                    names.join(", ")
                ))
            })
    }

    pub fn config(self) -> RunConfig {
        let trajectory = |shape, duration| TrajectorySpec {
            shape,
            duration,
            v_max: V_MAX,
            a_max: A_MAX,
        };
        let base = |trajectory| RunConfig {
            trajectory,
            noise: NoiseSpec::default(),
            filters: FilterSettings::default(),
            eval: EvalConfig::default(),
            anchors: AnchorMap::default(),
            output: None,
        };
        match self {
            Preset::Hover => base(trajectory(
                Shape::Hover {
                    position: [7.3, 12.75, 1.5],
                },
                30.0,
            )),
            Preset::Line => base(trajectory(
                Shape::Line {
                    start: [3.0, 5.0, 1.5],
                    end: [12.0, 20.0, 2.5],
                    start_time: 2.0,
                    move_time: None,
                },
                30.0,
            )),
            Preset::Circle => base(trajectory(
                Shape::Circle {
                    center: HALL_CENTER,
                    radius: 2.0,
                    period: None,
                },
                60.0,
            )),
            Preset::Lissajous => base(trajectory(lissajous_shape(), 60.0)),
            Preset::Table1Proxy => {
                let mut cfg = base(trajectory(lissajous_shape(), 90.0));
                cfg.noise = NoiseSpec {
                    range_sigma: 0.10,
                    outlier_rate: 0.02,
                    bias_initial: [0.2; 3],
                    ..NoiseSpec::default()
                };
                cfg.filters.vanilla.q_form = QForm::Standard;
                cfg
            }
        }
    }
}

fn lissajous_shape() -> Shape {
    Shape::Lissajous {
        center: HALL_CENTER,
        amplitude: [1.0, 1.0, 0.3],
        ratio: [1, 2, 3],
        phase: [0.0, 0.5, 1.0],
        period: None,
    }
}
