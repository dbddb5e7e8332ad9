use std::collections::BTreeMap;
use std::io::Read;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::config::PipelineConfig;
use crate::error::CliError;

/// Directory under the artifacts root that holds run manifests.
pub const MANIFEST_DIR: &str = "manifests";

pub fn sha256_file(path: &Path) -> Result<String, CliError> {
    let mut file = std::fs::File::open(path).map_err(|_| CliError::missing(path))?;
    let mut hasher = Sha256::new();
    let mut buf = vec![0u8; 1 << 16];
    loop {
        let n = file
            .read(&mut buf)
            .map_err(|e| CliError::internal(format!("{}: {e}", path.display())))?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
    }
    Ok(hex::encode(hasher.finalize()))
}

#[derive(Serialize)]
struct Manifest<'a> {
    stage: &'a str,
    config_hash: &'a str,
    seed: u64,
    threads: usize,
    inputs: BTreeMap<String, String>,
    outputs: BTreeMap<String, String>,
    timings_s: BTreeMap<String, f64>,
    total_s: f64,
    details: &'a BTreeMap<String, Value>,
    config: &'a PipelineConfig,
}

/// Tracks one stage run: its inputs, outputs, timings and summary values.
pub struct Run {
    pub config: PipelineConfig,
    pub hash: String,
    pub threads: usize,
    pub dir: PathBuf,
    started: Instant,
    inputs: Vec<PathBuf>,
    outputs: Vec<PathBuf>,
    timings: BTreeMap<String, f64>,
    pub details: BTreeMap<String, Value>,
}

impl Run {
    pub fn new(config: PipelineConfig, threads: usize) -> Result<Self, CliError> {
        let dir = config.artifacts();
        std::fs::create_dir_all(&dir).map_err(|e| CliError::internal(format!("{}: {e}", dir.display())))?;
        Ok(Run {
            hash: config.hash(),
            config,
            threads,
            dir,
            started: Instant::now(),
            inputs: Vec::new(),
            outputs: Vec::new(),
            timings: BTreeMap::new(),
            details: BTreeMap::new(),
        })
    }

    /// Records an input that must already exist.
    pub fn input(&mut self, path: PathBuf) -> Result<PathBuf, CliError> {
        if !path.is_file() {
            return Err(CliError::missing(&path));
        }
        self.inputs.push(path.clone());
        Ok(path)
    }

    /// An input produced by an earlier stage inside the artifacts directory.
    pub fn artifact(&mut self, name: &str) -> Result<PathBuf, CliError> {
        self.input(self.dir.join(name))
    }

    pub fn output(&mut self, name: &str) -> PathBuf {
        let path = self.dir.join(name);
        self.outputs.push(path.clone());
        path
    }

    pub fn output_path(&mut self, path: PathBuf) -> PathBuf {
        self.outputs.push(path.clone());
        path
    }

    pub fn time<T>(&mut self, label: &str, f: impl FnOnce() -> T) -> T {
        let t = Instant::now();
        let out = f();
        self.timings.insert(label.to_string(), t.elapsed().as_secs_f64());
        out
    }

    pub fn detail(&mut self, key: &str, value: impl Serialize) {
        self.details
            .insert(key.to_string(), serde_json::to_value(value).expect("detail serialises"));
    }

    /// Writes `manifests/<stage>.json` and returns its path.
    pub fn finish(self, stage: &str) -> Result<PathBuf, CliError> {
        let hashes = |paths: &[PathBuf]| -> Result<BTreeMap<String, String>, CliError> {
            paths
                .iter()
                .map(|p| Ok((p.display().to_string(), sha256_file(p)?)))
                .collect()
        };
        let manifest = Manifest {
            stage,
            config_hash: &self.hash,
            seed: self.config.seed,
            threads: self.threads,
            inputs: hashes(&self.inputs)?,
            outputs: hashes(&self.outputs)?,
            timings_s: self.timings.clone(),
            total_s: self.started.elapsed().as_secs_f64(),
            details: &self.details,
            config: &self.config,
        };
        let dir = self.dir.join(MANIFEST_DIR);
        std::fs::create_dir_all(&dir).map_err(|e| CliError::internal(format!("{}: {e}", dir.display())))?;
        let path = dir.join(format!("{stage}.json"));
        let text = serde_json::to_string_pretty(&manifest).expect("manifest serialises");
        std::fs::write(&path, text + "\n").map_err(|e| CliError::internal(format!("{}: {e}", path.display())))?;
        Ok(path)
    }
}
