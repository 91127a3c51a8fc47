use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::formats::{read_json, write_json, SCHEMA_VERSION};

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Record written next to the outputs of every run. `argv` alone suffices to
/// rerun; `parameters` echoes the parsed values including defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub schema_version: u32,
    pub subcommand: String,
    pub argv: Vec<String>,
    pub parameters: serde_json::Value,
    pub seed: Option<u64>,
    pub tool_version: String,
    pub outputs: Vec<PathBuf>,
    pub warnings: Vec<String>,
    pub duration_seconds: f64,
}

impl RunManifest {
    pub fn file_name(subcommand: &str) -> String {
        format!("{subcommand}.manifest.json")
    }

    pub fn write(&self, dir: &Path) -> Result<PathBuf> {
        let path = dir.join(Self::file_name(&self.subcommand));
        write_json(&path, self)?;
        Ok(path)
    }

    pub fn read(path: &Path) -> Result<Self> {
        read_json(path)
    }

    pub fn new(subcommand: &str, argv: Vec<String>, parameters: serde_json::Value, seed: Option<u64>) -> Self {
        RunManifest {
            schema_version: SCHEMA_VERSION,
            subcommand: subcommand.to_owned(),
            argv,
            parameters,
            seed,
            tool_version: TOOL_VERSION.to_owned(),
            outputs: Vec::new(),
            warnings: Vec::new(),
            duration_seconds: 0.0,
        }
    }
}
