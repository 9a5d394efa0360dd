use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use uwbloc_core::{FilterKind, QForm};

/// Simulate UWB/IMU flights and score the vanilla and fusion EKFs on them.
///
/// Every option can also be set through an environment variable with the
/// `UWBLOC_` prefix, e.g. `UWBLOC_SEED=7`.
#[derive(Debug, Parser)]
#[command(name = "uwbloc", version)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a simulated sensor log with ground truth.
    Simulate {
        #[command(flatten)]
        common: Common,
    },
    /// Run one or both filters over a log.
    Fuse {
        /// Log produced by `simulate` (or any log with the same schema).
        #[arg(long, env = "UWBLOC_LOG")]
        log: Option<PathBuf>,
        /// Filter to run; both when omitted.
        #[arg(long, env = "UWBLOC_FILTER")]
        filter: Option<FilterArg>,
        #[command(flatten)]
        common: Common,
    },
    /// Score filter estimates against the truth in a log.
    Eval {
        #[arg(long, env = "UWBLOC_LOG")]
        log: Option<PathBuf>,
        /// Estimates produced by `fuse`.
        #[arg(long, env = "UWBLOC_ESTIMATES")]
        estimates: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Simulate and evaluate both filters in one step.
    Compare {
        /// Number of consecutive seeds to sweep, starting at `--seed`.
        #[arg(long, env = "UWBLOC_SEEDS", default_value_t = 1)]
        seeds: u64,
        /// Worker threads for a seed sweep; 0 uses all cores.
        #[arg(long, env = "UWBLOC_JOBS", default_value_t = 0)]
        jobs: usize,
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Debug, Args, Default)]
pub struct Common {
    /// Run configuration file (TOML or JSON).
    #[arg(long, env = "UWBLOC_CONFIG")]
    pub config: Option<PathBuf>,
    /// Built-in configuration: hover, line, circle, lissajous or table1-proxy.
    #[arg(long, env = "UWBLOC_PRESET")]
    pub preset: Option<String>,
    /// Repeat the run recorded in a provenance file.
    #[arg(long, env = "UWBLOC_FROM_PROVENANCE")]
    pub from_provenance: Option<PathBuf>,
    #[arg(long, env = "UWBLOC_SEED")]
    pub seed: Option<u64>,
    /// Flight duration in seconds.
    #[arg(long, env = "UWBLOC_DURATION")]
    pub duration: Option<f64>,
    /// Anchor file with one `id x y z` line per anchor.
    #[arg(long, env = "UWBLOC_ANCHORS")]
    pub anchors: Option<PathBuf>,
    /// Process-noise form of the vanilla filter.
    #[arg(long, env = "UWBLOC_Q_FORM")]
    pub q_form: Option<QFormArg>,
    /// Innovation gate of the fusion filter, meters.
    #[arg(long, env = "UWBLOC_GATE")]
    pub gate: Option<f64>,
    /// Output directory.
    #[arg(long, env = "UWBLOC_OUT", default_value = ".")]
    pub out: PathBuf,
}

impl Common {
    /// Options that change the configuration, as `(flag, is_set)`.
    pub fn overrides(&self) -> [(&'static str, bool); 7] {
        [
            ("--config", self.config.is_some()),
            ("--preset", self.preset.is_some()),
            ("--duration", self.duration.is_some()),
            ("--anchors", self.anchors.is_some()),
            ("--q-form", self.q_form.is_some()),
            ("--gate", self.gate.is_some()),
            ("--seed", self.seed.is_some()),
        ]
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum FilterArg {
    Vanilla,
    Fusion,
}

impl From<FilterArg> for FilterKind {
    fn from(f: FilterArg) -> Self {
        match f {
            FilterArg::Vanilla => FilterKind::Vanilla,
            FilterArg::Fusion => FilterKind::Fusion,
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum QFormArg {
    Paper,
    Standard,
}

impl From<QFormArg> for QForm {
    fn from(q: QFormArg) -> Self {
        match q {
            QFormArg::Paper => QForm::Paper,
            QFormArg::Standard => QForm::Standard,
        }
    }
}
