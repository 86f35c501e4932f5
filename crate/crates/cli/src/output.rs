//! Output files, their checksums and the run manifest.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::CliError;

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Collects every file written by a run together with its checksum.
pub struct OutputSet {
    dir: PathBuf,
    checksums: BTreeMap<String, String>,
}

impl OutputSet {
    pub fn new(dir: &Path) -> Result<Self, CliError> {
        std::fs::create_dir_all(dir)?;
        Ok(Self { dir: dir.to_path_buf(), checksums: BTreeMap::new() })
    }

    fn write(&mut self, name: &str, bytes: &[u8]) -> Result<(), CliError> {
        std::fs::write(self.dir.join(name), bytes)?;
        self.checksums.insert(name.to_string(), sha256_hex(bytes));
        Ok(())
    }

    pub fn csv(&mut self, name: &str, header: &[&str], rows: &[Vec<String>]) -> Result<(), CliError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(header)?;
        for row in rows {
            w.write_record(row)?;
        }
        let bytes = w.into_inner().map_err(|e| CliError::Module(format!("csv: {e}")))?;
        self.write(name, &bytes)
    }

    pub fn json(&mut self, name: &str, value: &impl Serialize) -> Result<(), CliError> {
        let mut bytes = serde_json::to_vec_pretty(value)?;
        bytes.push(b'\n');
        self.write(name, &bytes)
    }

    pub fn finish(self, manifest: ManifestInputs) -> Result<RunManifest, CliError> {
        let m = RunManifest {
            config_hash: manifest.config_hash,
            version: env!("CARGO_PKG_VERSION").to_string(),
            seed: manifest.seed,
            wall_clock_seconds: manifest.wall_clock_seconds,
            outputs: self.checksums,
        };
        let mut bytes = serde_json::to_vec_pretty(&m)?;
        bytes.push(b'\n');
        std::fs::write(self.dir.join("manifest.json"), bytes)?;
        Ok(m)
    }
}

pub struct ManifestInputs {
    pub config_hash: String,
    pub seed: u64,
    pub wall_clock_seconds: f64,
}

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub config_hash: String,
    pub version: String,
    pub seed: u64,
    pub wall_clock_seconds: f64,
    /// File name to SHA-256 of its contents.
    pub outputs: BTreeMap<String, String>,
}

/// `summary.json`.
#[derive(Debug, Serialize)]
pub struct Summary {
    pub command: String,
    pub inputs: serde_json::Value,
    pub headline: serde_json::Value,
    pub converged: bool,
    pub errors: Vec<String>,
}

pub fn num(x: f64) -> String {
    if x.is_infinite() && x > 0.0 {
        "inf".into()
    } else if x != 0.0 && (x.abs() < 1e-4 || x.abs() >= 1e15) {
        format!("{x:e}")
    } else {
        format!("{}", x + 0.0)
    }
}

/// `x_k - x_{k-1}` column, empty on the first row.
pub fn differences(values: &[f64]) -> Vec<String> {
    (0..values.len()).map(|k| if k == 0 { String::new() } else { num(values[k] - values[k - 1]) }).collect()
}
