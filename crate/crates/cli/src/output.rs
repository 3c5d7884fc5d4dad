//! Buffered outputs, atomic commit and the run manifest.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::CliError;

pub const OUT_DIR_ENV: &str = "BINREG_OUT_DIR";
pub const DEFAULT_OUT_DIR: &str = "binreg-out";

/// Files produced by a subcommand, held in memory until the run succeeds.
#[derive(Default)]
pub struct Outputs {
    files: Vec<(String, Vec<u8>)>,
}

impl Outputs {
    pub fn add(&mut self, name: &str, bytes: Vec<u8>) {
        self.files.push((name.to_owned(), bytes));
    }

    pub fn add_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), CliError> {
        let mut bytes = serde_json::to_vec_pretty(value)?;
        bytes.push(b'\n');
        self.add(name, bytes);
        Ok(())
    }

    pub fn add_csv<T: Serialize>(&mut self, name: &str, rows: &[T]) -> Result<(), CliError> {
        let mut bytes = Vec::new();
        binreg::experiments::write_csv(&mut bytes, rows)?;
        self.add(name, bytes);
        Ok(())
    }

    pub fn names(&self) -> Vec<String> {
        self.files.iter().map(|(n, _)| n.clone()).collect()
    }
}

pub fn resolve_out_dir(flag: Option<&Path>) -> PathBuf {
    match flag {
        Some(p) => p.to_path_buf(),
        None => std::env::var_os(OUT_DIR_ENV).map_or_else(|| PathBuf::from(DEFAULT_OUT_DIR), PathBuf::from),
    }
}

fn persist(dir: &Path, name: &str, bytes: &[u8]) -> Result<(), CliError> {
    let target = dir.join(name);
    let parent = target.parent().unwrap_or(dir);
    let mut tmp = tempfile::NamedTempFile::new_in(parent)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(&target).map_err(|e| CliError::Io(e.error))?;
    Ok(())
}

/// Writes every output and then the manifest, each through a temp file and rename.
pub fn commit(dir: &Path, outputs: &Outputs, manifest: &RunManifest) -> Result<(), CliError> {
    std::fs::create_dir_all(dir)?;
    for (name, bytes) in &outputs.files {
        persist(dir, name, bytes)?;
    }
    let mut bytes = serde_json::to_vec_pretty(manifest)?;
    bytes.push(b'\n');
    persist(dir, &manifest_name(&manifest.subcommand), &bytes)
}

pub fn manifest_name(subcommand: &str) -> String {
    format!("{subcommand}.manifest.json")
}

pub fn unix_ms() -> u128 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_millis())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub subcommand: String,
    /// SHA-256 of the compact JSON of `config`.
    pub config_hash: String,
    pub master_seed: u64,
    pub started_unix_ms: u128,
    pub finished_unix_ms: u128,
    pub outputs: Vec<String>,
    pub config: serde_json::Value,
}

pub fn config_hash(config: &serde_json::Value) -> String {
    let bytes = serde_json::to_vec(config).expect("JSON value serializes");
    Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect()
}

impl RunManifest {
    pub fn new(subcommand: &str, seed: u64, config: serde_json::Value, started: u128, outputs: Vec<String>) -> Self {
        RunManifest {
            tool_version: env!("CARGO_PKG_VERSION").to_owned(),
            subcommand: subcommand.to_owned(),
            config_hash: config_hash(&config),
            master_seed: seed,
            started_unix_ms: started,
            finished_unix_ms: unix_ms(),
            outputs,
            config,
        }
    }

    pub fn verify(&self) -> bool {
        config_hash(&self.config) == self.config_hash
    }
}
