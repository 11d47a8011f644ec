//! Run manifests: `<output>.manifest.json` next to every output.
//!
//! ```json
//! {
//!   "command": "train",
//!   "argv": ["corrnn", "train", "--data", "d.crns", ...],
//!   "seed": 1,
//!   "format_versions": {"crns": 1, "crnm": 1},
//!   "outputs": ["m.crnm", "m.crnm.loss.tsv"],
//!   "tool_version": "0.1.0",
//!   "timestamp": 1760000000
//! }
//! ```
//!
//! Everything except `timestamp` is a function of the command line.

use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use corrnn_core::dataio::CRNS_VERSION;
use corrnn_core::trainer::CRNM_VERSION;

use crate::Failure;

#[derive(Debug, Serialize, Deserialize, PartialEq)]
pub struct FormatVersions {
    pub crns: u16,
    pub crnm: u16,
}

#[derive(Debug, Serialize, Deserialize, PartialEq)]
pub struct RunManifest {
    pub command: String,
    pub argv: Vec<String>,
    pub seed: u64,
    pub format_versions: FormatVersions,
    pub outputs: Vec<String>,
    pub tool_version: String,
    pub timestamp: u64,
}

pub fn manifest_path(output: &str) -> String {
    format!("{output}.manifest.json")
}

pub fn write(
    command: &str,
    argv: &[String],
    seed: u64,
    outputs: Vec<String>,
) -> Result<(), Failure> {
    let primary = outputs
        .first()
        .cloned()
        .ok_or_else(|| Failure::Usage("no output to describe".into()))?;
    let m = RunManifest {
        command: command.to_string(),
        argv: argv.to_vec(),
        seed,
        format_versions: FormatVersions {
            crns: CRNS_VERSION,
            crnm: CRNM_VERSION,
        },
        outputs,
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        timestamp: SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map_or(0, |d| d.as_secs()),
    };
    let text = serde_json::to_string_pretty(&m).map_err(|e| Failure::Io(e.to_string()))?;
    std::fs::write(manifest_path(&primary), text + "\n")
        .map_err(|e| Failure::Io(format!("{primary}: {e}")))
}

pub fn read_argv(path: &str) -> Result<Vec<String>, Failure> {
    let text = std::fs::read_to_string(path).map_err(|e| Failure::Io(format!("{path}: {e}")))?;
    let m: RunManifest =
        serde_json::from_str(&text).map_err(|e| Failure::Io(format!("{path}: {e}")))?;
    Ok(m.argv)
}
