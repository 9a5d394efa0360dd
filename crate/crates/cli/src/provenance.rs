//! `provenance.json`: what each command wrote into a directory and how to redo it.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use uwbloc_core::{Error, FilterKind, Result, RunConfig};

pub const FILE_NAME: &str = "provenance.json";
pub const TOOL: &str = env!("CARGO_PKG_NAME");
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Provenance {
    pub tool: String,
    pub version: String,
    /// Keyed by command name.
    pub runs: BTreeMap<String, RunEntry>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunEntry {
    /// Seed of the simulated data, when known.
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seeds: Option<u64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub filters: Vec<FilterKind>,
    pub config: RunConfig,
    /// Input role (`log`, `estimates`) to file.
    #[serde(default)]
    pub inputs: BTreeMap<String, InputFile>,
    /// Output file name to SHA-256.
    pub outputs: BTreeMap<String, String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InputFile {
    pub path: PathBuf,
    pub sha256: String,
}

impl InputFile {
    pub fn new(path: &Path, bytes: &[u8]) -> Self {
        Self {
            path: path.to_path_buf(),
            sha256: sha256_hex(bytes),
        }
    }
}

impl Default for Provenance {
    fn default() -> Self {
        Self {
            tool: TOOL.into(),
            version: VERSION.into(),
            runs: BTreeMap::new(),
        }
    }
}

impl Provenance {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    /// The provenance file next to `file`, if there is a readable one.
    pub fn beside(file: &Path) -> Option<Self> {
        let dir = file.parent().unwrap_or(Path::new("."));
        Self::load(&dir.join(FILE_NAME)).ok()
    }

    pub fn entry(&self, command: &str) -> Option<&RunEntry> {
        self.runs.get(command)
    }

    /// The entry that produced `file_name`, if any.
    pub fn producer_of(&self, file_name: &str) -> Option<(&str, &RunEntry)> {
        self.runs
            .iter()
            .find(|(_, e)| e.outputs.contains_key(file_name))
            .map(|(k, e)| (k.as_str(), e))
    }

    /// Adds or replaces `command` in `dir/provenance.json`.
    pub fn record(dir: &Path, command: &str, entry: RunEntry) -> Result<()> {
        let path = dir.join(FILE_NAME);
        let mut prov = if path.exists() {
            Self::load(&path).unwrap_or_default()
        } else {
            Self::default()
        };
        prov.tool = TOOL.into();
        prov.version = VERSION.into();
        prov.runs.insert(command.into(), entry);
        let text = serde_json::to_string_pretty(&prov)? + "\n";
        write_atomic(&path, text.as_bytes())
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

/// Writes through a temporary file so a failed run never leaves a truncated output.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)?;
    Ok(())
}
