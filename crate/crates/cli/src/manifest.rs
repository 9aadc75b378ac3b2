//! Run manifests: what went in, how it was configured, what came out.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::CliError;
use crate::run::RunConfig;

pub const TOOL: &str = "dffoct";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileRecord {
    pub role: String,
    pub path: PathBuf,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StageTiming {
    pub stage: String,
    pub wall_time_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub inputs: Vec<FileRecord>,
    /// Every parameter of the run, defaults included.
    pub config: RunConfig,
    pub stages: Vec<StageTiming>,
    pub outputs: Vec<FileRecord>,
}

pub fn sha256_file(path: &Path) -> Result<String, CliError> {
    let file = File::open(path).map_err(|e| CliError::io(path, e))?;
    let mut hasher = Sha256::new();
    std::io::copy(&mut BufReader::new(file), &mut hasher).map_err(|e| CliError::io(path, e))?;
    Ok(hex::encode(hasher.finalize()))
}

pub fn records(files: &[(String, PathBuf)]) -> Result<Vec<FileRecord>, CliError> {
    files
        .iter()
        .map(|(role, path)| {
            Ok(FileRecord {
                role: role.clone(),
                path: path.clone(),
                sha256: sha256_file(path)?,
            })
        })
        .collect()
}

impl Manifest {
    pub fn write(&self, path: &Path) -> Result<(), CliError> {
        let file = File::create(path).map_err(|e| CliError::io(path, e))?;
        let mut w = BufWriter::new(file);
        serde_json::to_writer_pretty(&mut w, self)
            .map_err(std::io::Error::from)
            .and_then(|_| w.write_all(b"\n"))
            .and_then(|_| w.flush())
            .map_err(|e| CliError::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        crate::run::parse_json(&text, path)
    }
}
