//! CSV and JSON artifacts plus the run manifest.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::CliError;

/// Full-precision decimal: 17 significant digits.
pub fn num(x: f64) -> String {
    format!("{x:.16e}")
}

/// One CSV file with a fixed header.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub file: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(file: impl Into<String>, header: &[&str]) -> Self {
        Self {
            file: file.into(),
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>, CliError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let fail = |e: csv::Error| CliError::Runtime(format!("writing {}: {e}", self.file));
        w.write_record(&self.header).map_err(fail)?;
        for r in &self.rows {
            w.write_record(r).map_err(fail)?;
        }
        w.into_inner().map_err(|e| CliError::Runtime(format!("writing {}: {e}", self.file)))
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct OutputRecord {
    pub file: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Serialize)]
pub struct Manifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub experiment: String,
    pub config: serde_json::Value,
    pub workers: usize,
    pub master_seed: u64,
    pub wall_seconds: f64,
    pub steps: BTreeMap<String, u64>,
    pub warnings: Vec<String>,
    pub outputs: Vec<OutputRecord>,
}

/// Collects artifacts, writing each to disk as it arrives.
pub struct OutputDir {
    root: PathBuf,
    pub records: Vec<OutputRecord>,
}

impl OutputDir {
    pub fn create(root: &Path) -> Result<Self, CliError> {
        fs::create_dir_all(root).map_err(CliError::io(format!("creating {}", root.display())))?;
        Ok(Self { root: root.to_path_buf(), records: Vec::new() })
    }

    pub fn write_bytes(&mut self, file: &str, bytes: &[u8]) -> Result<(), CliError> {
        let path = self.root.join(file);
        fs::write(&path, bytes).map_err(CliError::io(format!("writing {}", path.display())))?;
        self.records.push(OutputRecord {
            file: file.to_string(),
            sha256: Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect(),
            bytes: bytes.len() as u64,
        });
        Ok(())
    }

    pub fn write_table(&mut self, table: &Table) -> Result<(), CliError> {
        let bytes = table.to_bytes()?;
        self.write_bytes(&table.file, &bytes)
    }

    pub fn write_json<T: Serialize>(&mut self, file: &str, value: &T) -> Result<(), CliError> {
        let mut bytes = serde_json::to_vec_pretty(value).map_err(|e| CliError::Runtime(format!("encoding {file}: {e}")))?;
        bytes.push(b'\n');
        self.write_bytes(file, &bytes)
    }

    /// The manifest itself is not listed among the outputs.
    pub fn write_manifest(&self, manifest: &Manifest) -> Result<(), CliError> {
        let path = self.root.join("manifest.json");
        let mut bytes =
            serde_json::to_vec_pretty(manifest).map_err(|e| CliError::Runtime(format!("encoding manifest: {e}")))?;
        bytes.push(b'\n');
        fs::write(&path, bytes).map_err(CliError::io(format!("writing {}", path.display())))
    }
}
