//! `record.json`: the machine-readable envelope of one run.

use std::path::{Path, PathBuf};

use henon_core::Precision;
use serde::{Deserialize, Serialize};
use serde_json::Value;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Complete,
    Partial,
    Failed,
}

impl Status {
    /// Process exit code: 0 iff complete.
    pub fn exit_code(self) -> i32 {
        match self {
            Status::Complete => 0,
            Status::Failed => 1,
            Status::Partial => 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Artifact {
    /// Relative to the record directory.
    pub path: PathBuf,
    pub schema: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorRecord {
    pub kind: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentRecord {
    pub schema_version: u32,
    pub tool: String,
    pub version: String,
    pub subcommand: String,
    pub config_hash: String,
    pub seed: u64,
    pub precision: Precision,
    pub threads: usize,
    pub started_at: String,
    pub finished_at: String,
    pub status: Status,
    pub artifacts: Vec<Artifact>,
    pub summary: Value,
    pub warnings: Vec<String>,
    pub notes: Vec<String>,
    pub error: Option<ErrorRecord>,
}

impl ExperimentRecord {
    pub fn write(&self, dir: &Path) -> std::io::Result<()> {
        std::fs::create_dir_all(dir)?;
        let mut text = serde_json::to_string_pretty(self).expect("record serializes");
        text.push('\n');
        std::fs::write(dir.join("record.json"), text)
    }

    pub fn read(dir: &Path) -> std::io::Result<Self> {
        let text = std::fs::read_to_string(dir.join("record.json"))?;
        serde_json::from_str(&text).map_err(std::io::Error::other)
    }
}
