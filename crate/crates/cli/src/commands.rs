use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;
use uwbloc_core::eval::{
    evaluate, replay, summarize, write_timeseries_csv, EstimatorRun, EstimatorSummary, EvalReport,
};
use uwbloc_core::experiment::{run_experiment, simulate_log};
use uwbloc_core::log::{read_records, sort_records, write_records, LogData, Record};
use uwbloc_core::{AnchorMap, Error, FilterKind, Result, RunConfig};

use crate::args::{Command, Common, FilterArg};
use crate::provenance::{sha256_hex, write_atomic, InputFile, Provenance, RunEntry, VERSION};

pub const DEFAULT_PRESET: &str = "lissajous";
pub const LOG_FILE: &str = "log.jsonl";
pub const ESTIMATES_FILE: &str = "estimates.jsonl";

pub fn run(command: Command) -> Result<()> {
    match command {
        Command::Simulate { common } => simulate(&common),
        Command::Fuse {
            log,
            filter,
            common,
        } => fuse(log, filter, &common),
        Command::Eval {
            log,
            estimates,
            common,
        } => eval(log, estimates, &common),
        Command::Compare {
            seeds,
            jobs,
            common,
        } => compare(seeds, jobs, &common),
    }
}

/// Exit status for an error: 2 for bad configuration or input files, 1 otherwise.
pub fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_)
        | Error::AnchorParse { .. }
        | Error::InvalidAnchors(_)
        | Error::EnvelopeViolation(_) => 2,
        _ => 1,
    }
}

fn simulate(common: &Common) -> Result<()> {
    let cfg = match recorded_entry(common, "simulate")? {
        Some(entry) => entry.config,
        None => resolve_config(common, None)?,
    };
    cfg.validate()?;
    let records = simulate_log(&cfg)?;
    let mut out = Output::create(&common.out)?;
    let path = out.write(LOG_FILE, &encode(&records)?)?;
    println!("wrote {} records to {}", records.len(), path.display());
    out.finish(
        "simulate",
        Some(cfg.seed()),
        None,
        vec![],
        cfg,
        BTreeMap::new(),
    )
}

fn fuse(log: Option<PathBuf>, filter: Option<FilterArg>, common: &Common) -> Result<()> {
    let recorded = recorded_entry(common, "fuse")?;
    let log_path = input_path(recorded.as_ref(), "log", log, "--log")?;
    let (log_input, records) = read_log(&log_path)?;
    if let Some(entry) = &recorded {
        verify_input(entry, "log", &log_input)?;
    }
    let producer = producer_entry(&log_path);
    let log_seed = producer.as_ref().and_then(|e| e.seed);

    let (cfg, filters, seed) = match recorded {
        Some(entry) => (entry.config, entry.filters, entry.seed),
        None => {
            if let (Some(asked), Some(logged)) = (common.seed, log_seed) {
                if asked != logged {
                    return Err(Error::ProvenanceMismatch(format!(
                        "--seed {asked} but {} was simulated with seed {logged}",
                        log_path.display()
                    )));
                }
            }
            let cfg = resolve_config(common, producer.map(|e| e.config))?;
            let filters = match filter {
                Some(f) => vec![f.into()],
                None => FilterKind::ALL.to_vec(),
            };
            (cfg, filters, log_seed.or(common.seed))
        }
    };
    cfg.validate()?;

    let mut output = Vec::new();
    for &kind in &filters {
        output.extend(replay(&records, kind, &cfg.filters, &cfg.anchors)?.records());
    }
    sort_records(&mut output);
    let mut out = Output::create(&common.out)?;
    let path = out.write(ESTIMATES_FILE, &encode(&output)?)?;
    println!("wrote {} records to {}", output.len(), path.display());
    let inputs = BTreeMap::from([("log".to_string(), log_input)]);
    out.finish("fuse", seed, None, filters, cfg, inputs)
}

fn eval(log: Option<PathBuf>, estimates: Option<PathBuf>, common: &Common) -> Result<()> {
    let recorded = recorded_entry(common, "eval")?;
    let log_path = input_path(recorded.as_ref(), "log", log, "--log")?;
    let est_path = input_path(recorded.as_ref(), "estimates", estimates, "--estimates")?;
    let (log_input, log_records) = read_log(&log_path)?;
    let (est_input, est_records) = read_log(&est_path)?;
    if let Some(entry) = &recorded {
        verify_input(entry, "log", &log_input)?;
        verify_input(entry, "estimates", &est_input)?;
    }
    let seed = check_pairing(&log_path, &log_input, &est_path)?;

    let cfg = match recorded {
        Some(entry) => entry.config,
        None => {
            let base = producer_entry(&est_path)
                .or_else(|| producer_entry(&log_path))
                .map(|e| e.config);
            resolve_config(common, base)?
        }
    };
    cfg.validate()?;

    let log = LogData::from_records(&log_records);
    let est = LogData::from_records(&est_records);
    let mut per_filter = Vec::new();
    for kind in FilterKind::ALL {
        let estimates: Vec<_> = est
            .estimates
            .iter()
            .filter(|e| e.filter == kind)
            .copied()
            .collect();
        let outcomes: Vec<_> = est
            .outcomes
            .iter()
            .filter(|o| o.filter == kind)
            .copied()
            .collect();
        if !estimates.is_empty() {
            per_filter.push((kind, estimates, outcomes));
        }
    }
    if per_filter.is_empty() {
        return Err(Error::InsufficientInput(format!(
            "{} contains no `estimate` records",
            est_path.display()
        )));
    }
    let runs: Vec<EstimatorRun<'_>> = per_filter
        .iter()
        .map(|(kind, estimates, outcomes)| EstimatorRun {
            filter: *kind,
            estimates,
            outcomes,
        })
        .collect();
    let report = evaluate(&log.truth, &log.ranges, &runs, &cfg.eval)?;

    let mut out = Output::create(&common.out)?;
    write_report(&mut out, &report)?;
    for (kind, estimates, _) in &per_filter {
        let mut csv = Vec::new();
        write_timeseries_csv(&mut csv, estimates, &log.truth)?;
        out.write(&format!("timeseries_{kind}.csv"), &csv)?;
    }
    print!("{}", report.table());
    let inputs = BTreeMap::from([
        ("estimates".to_string(), est_input),
        ("log".to_string(), log_input),
    ]);
    let filters = per_filter.iter().map(|(k, _, _)| *k).collect();
    out.finish("eval", seed, None, filters, cfg, inputs)
}

fn compare(seeds: u64, jobs: usize, common: &Common) -> Result<()> {
    let (cfg, seeds) = match recorded_entry(common, "compare")? {
        Some(entry) => (entry.config, entry.seeds.unwrap_or(1)),
        None => (resolve_config(common, None)?, seeds),
    };
    cfg.validate()?;
    if seeds == 0 {
        return Err(Error::Config("--seeds must be at least 1".into()));
    }
    let mut out = Output::create(&common.out)?;
    if seeds == 1 {
        let exp = run_experiment(&cfg)?;
        out.write(LOG_FILE, &encode(&exp.log)?)?;
        let mut estimates: Vec<Record> =
            exp.outputs.iter().flat_map(|(_, o)| o.records()).collect();
        sort_records(&mut estimates);
        out.write(ESTIMATES_FILE, &encode(&estimates)?)?;
        write_report(&mut out, &exp.report)?;
        let truth = LogData::from_records(&exp.log).truth;
        for (kind, output) in &exp.outputs {
            let mut csv = Vec::new();
            write_timeseries_csv(&mut csv, &output.estimate_records(), &truth)?;
            out.write(&format!("timeseries_{kind}.csv"), &csv)?;
        }
        print!("{}", exp.report.table());
        return out.finish(
            "compare",
            Some(cfg.seed()),
            None,
            FilterKind::ALL.to_vec(),
            cfg,
            BTreeMap::new(),
        );
    }

    let first = cfg.seed();
    let last = first
        .checked_add(seeds - 1)
        .ok_or_else(|| Error::Config("seed range overflows u64".into()))?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::Config(format!("--jobs: {e}")))?;
    let reports = pool.install(|| {
        (first..=last)
            .into_par_iter()
            .map(|seed| Ok(run_experiment(&cfg.clone().with_seed(seed))?.report))
            .collect::<Result<Vec<EvalReport>>>()
    })?;
    let summary = summarize(&reports);
    let sweep = Sweep {
        seeds: (first..=last).collect(),
        summary: summary.clone(),
        reports,
    };
    out.write(
        "sweep.json",
        (serde_json::to_string_pretty(&sweep)? + "\n").as_bytes(),
    )?;
    out.write("sweep.csv", sweep_csv(&summary).as_bytes())?;
    print!("{}", sweep_table(&summary));
    out.finish(
        "compare",
        Some(first),
        Some(seeds),
        FilterKind::ALL.to_vec(),
        cfg,
        BTreeMap::new(),
    )
}

#[derive(Serialize)]
struct Sweep {
    seeds: Vec<u64>,
    summary: Vec<EstimatorSummary>,
    reports: Vec<EvalReport>,
}

fn sweep_csv(summary: &[EstimatorSummary]) -> String {
    let mut s = String::from("metric,estimator,mean,std\n");
    for e in summary {
        let mut row = |metric: &str, spread: uwbloc_core::eval::Spread| {
            s.push_str(&format!(
                "{metric},{},{},{}\n",
                e.filter, spread.mean, spread.std
            ));
        };
        row("max_error", e.max_error);
        row("mean_error", e.mean_error);
        if let Some(lag) = e.latency {
            row("latency", lag);
        }
    }
    s
}

fn sweep_table(summary: &[EstimatorSummary]) -> String {
    let runs = summary.first().map_or(0, |e| e.runs);
    let mut s = format!(
        "{:<12} {:>17} {:>14} {:>14}   ({runs} seeds, mean ± std)\n",
        "", "Maximum Error (m)", "Mean Error (m)", "Latency (s)"
    );
    for e in summary {
        let name = match e.filter {
            FilterKind::Vanilla => "Vanilla EKF",
            FilterKind::Fusion => "Fusion EKF",
        };
        let lag = e.latency.map_or_else(
            || "n/a".to_string(),
            |l| format!("{:.2} ± {:.2}", l.mean, l.std),
        );
        s.push_str(&format!(
            "{name:<12} {:>17} {:>14} {:>14}\n",
            format!("{:.2} ± {:.2}", e.max_error.mean, e.max_error.std),
            format!("{:.2} ± {:.2}", e.mean_error.mean, e.mean_error.std),
            lag
        ));
    }
    s
}

fn write_report(out: &mut Output, report: &EvalReport) -> Result<()> {
    out.write("report.json", report.to_json()?.as_bytes())?;
    let mut csv = Vec::new();
    report.write_csv(&mut csv)?;
    out.write("metrics.csv", &csv)?;
    Ok(())
}

/// Files written by one command, flushed to the provenance file at the end.
struct Output {
    dir: PathBuf,
    written: BTreeMap<String, String>,
}

impl Output {
    fn create(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir)?;
        Ok(Self {
            dir: dir.to_path_buf(),
            written: BTreeMap::new(),
        })
    }

    fn write(&mut self, name: &str, bytes: &[u8]) -> Result<PathBuf> {
        let path = self.dir.join(name);
        write_atomic(&path, bytes)?;
        self.written.insert(name.to_string(), sha256_hex(bytes));
        Ok(path)
    }

    fn finish(
        self,
        command: &str,
        seed: Option<u64>,
        seeds: Option<u64>,
        filters: Vec<FilterKind>,
        config: RunConfig,
        inputs: BTreeMap<String, InputFile>,
    ) -> Result<()> {
        let entry = RunEntry {
            seed,
            seeds,
            filters,
            config,
            inputs,
            outputs: self.written,
        };
        Provenance::record(&self.dir, command, entry)
    }
}

fn encode(records: &[Record]) -> Result<Vec<u8>> {
    let mut bytes = Vec::new();
    write_records(&mut bytes, records)?;
    Ok(bytes)
}

fn read_log(path: &Path) -> Result<(InputFile, Vec<Record>)> {
    let bytes = fs::read(path).map_err(|e| {
        Error::Io(std::io::Error::new(
            e.kind(),
            format!("{}: {e}", path.display()),
        ))
    })?;
    let records = read_records(&bytes[..]).map_err(|e| match e {
        Error::Schema { line, message } => Error::Schema {
            line,
            message: format!("{}: {message}", path.display()),
        },
        other => other,
    })?;
    Ok((InputFile::new(path, &bytes), records))
}

/// The provenance entry of the command that wrote `file`, if recorded.
fn producer_entry(file: &Path) -> Option<RunEntry> {
    let name = file.file_name()?.to_str()?;
    let prov = Provenance::beside(file)?;
    prov.producer_of(name).map(|(_, e)| e.clone())
}

/// Refuses estimates that were not computed from this log.
fn check_pairing(log_path: &Path, log: &InputFile, est_path: &Path) -> Result<Option<u64>> {
    let log_seed = producer_entry(log_path).and_then(|e| e.seed);
    let Some(fused) = producer_entry(est_path) else {
        return Ok(log_seed);
    };
    if let (Some(a), Some(b)) = (log_seed, fused.seed) {
        if a != b {
            return Err(Error::ProvenanceMismatch(format!(
                "{} comes from seed {a} but {} comes from seed {b}",
                log_path.display(),
                est_path.display()
            )));
        }
    }
    if let Some(source) = fused.inputs.get("log") {
        if source.sha256 != log.sha256 {
            return Err(Error::ProvenanceMismatch(format!(
                "{} was computed from {}, whose contents differ from {}",
                est_path.display(),
                source.path.display(),
                log_path.display()
            )));
        }
    }
    Ok(log_seed.or(fused.seed))
}

/// Loads the entry for `command` when `--from-provenance` is given.
fn recorded_entry(common: &Common, command: &str) -> Result<Option<RunEntry>> {
    let Some(path) = &common.from_provenance else {
        return Ok(None);
    };
    let prov = Provenance::load(path)?;
    if prov.version != VERSION {
        return Err(Error::ProvenanceMismatch(format!(
            "{} was written by version {}, this is {VERSION}",
            path.display(),
            prov.version
        )));
    }
    let entry = prov
        .entry(command)
        .cloned()
        .ok_or_else(|| Error::Config(format!("{}: no `{command}` run recorded", path.display())))?;
    if let Some(seed) = common.seed {
        if entry.seed != Some(seed) {
            return Err(Error::ProvenanceMismatch(format!(
                "--seed {seed} differs from the recorded seed {}",
                entry
                    .seed
                    .map_or_else(|| "(none)".to_string(), |s| s.to_string())
            )));
        }
    }
    if let Some((flag, _)) = common
        .overrides()
        .into_iter()
        .find(|(flag, set)| *set && *flag != "--seed")
    {
        return Err(Error::Config(format!(
            "{flag} cannot be combined with --from-provenance"
        )));
    }
    Ok(Some(entry))
}

fn input_path(
    recorded: Option<&RunEntry>,
    role: &str,
    given: Option<PathBuf>,
    flag: &str,
) -> Result<PathBuf> {
    match (recorded, given) {
        (Some(_), Some(_)) => Err(Error::Config(format!(
            "{flag} cannot be combined with --from-provenance"
        ))),
        (Some(entry), None) => entry
            .inputs
            .get(role)
            .map(|i| i.path.clone())
            .ok_or_else(|| Error::Config(format!("the recorded run has no `{role}` input"))),
        (None, Some(path)) => Ok(path),
        (None, None) => Err(Error::Config(format!("{flag} is required"))),
    }
}

fn verify_input(entry: &RunEntry, role: &str, actual: &InputFile) -> Result<()> {
    match entry.inputs.get(role) {
        Some(expected) if expected.sha256 != actual.sha256 => {
            Err(Error::ProvenanceMismatch(format!(
                "{} changed since the recorded run (sha256 {} expected, found {})",
                actual.path.display(),
                expected.sha256,
                actual.sha256
            )))
        }
        _ => Ok(()),
    }
}

/// Base configuration (file, preset, or `fallback`) with command-line overrides applied.
fn resolve_config(common: &Common, fallback: Option<RunConfig>) -> Result<RunConfig> {
    let mut cfg = match (&common.config, &common.preset) {
        (Some(_), Some(_)) => {
            return Err(Error::Config(
                "--config and --preset are mutually exclusive".into(),
            ))
        }
        (Some(path), None) => load_config(path)?,
        (None, Some(name)) => RunConfig::preset(name)?,
        (None, None) => match fallback {
            Some(cfg) => cfg,
            None => RunConfig::preset(DEFAULT_PRESET)?,
        },
    };
    if let Some(seed) = common.seed {
        cfg.noise.seed = seed;
    }
    if let Some(duration) = common.duration {
        cfg.trajectory.duration = duration;
    }
    if let Some(path) = &common.anchors {
        cfg.anchors = AnchorMap::load(path).map_err(|e| match e {
            Error::Io(io) => Error::Config(format!("{}: {io}", path.display())),
            other => other,
        })?;
    }
    if let Some(q) = common.q_form {
        cfg.filters.vanilla.q_form = q.into();
    }
    if let Some(gate) = common.gate {
        cfg.filters.fusion.gate_threshold = gate;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn load_config(path: &Path) -> Result<RunConfig> {
    let err = |m: String| Error::Config(format!("{}: {m}", path.display()));
    let text = fs::read_to_string(path).map_err(|e| err(e.to_string()))?;
    let is_toml = path.extension().is_some_and(|e| e == "toml");
    if is_toml {
        toml::from_str(&text).map_err(|e| err(e.to_string()))
    } else {
        serde_json::from_str(&text).map_err(|e| err(e.to_string()))
    }
}
