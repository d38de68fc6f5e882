//! Run manifests: every command writes one, capturing the fully resolved
//! config, the seed, and content hashes of its deterministic artifacts.
//! Rerunning a command with `--config <manifest>` reproduces the run;
//! timing-bearing log files are listed but not hashed.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::CliError;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub config: serde_json::Value,
    pub seed: u64,
    pub inputs: BTreeMap<String, String>,
    pub outputs: BTreeMap<String, String>,
    pub logs: Vec<String>,
}

impl Manifest {
    pub fn new<C: Serialize>(command: &str, config: &C, seed: u64) -> Result<Self, CliError> {
        Ok(Self {
            command: command.to_string(),
            config: serde_json::to_value(config)
                .map_err(|e| CliError::config(format!("cannot serialize config: {e}")))?,
            seed,
            inputs: BTreeMap::new(),
            outputs: BTreeMap::new(),
            logs: Vec::new(),
        })
    }

    pub fn record_input(&mut self, path: &Path) -> Result<(), CliError> {
        let digest = sha256_file(path)?;
        self.inputs.insert(path.display().to_string(), digest);
        Ok(())
    }

    pub fn record_output(&mut self, path: &Path) -> Result<(), CliError> {
        let digest = sha256_file(path)?;
        self.outputs.insert(path.display().to_string(), digest);
        Ok(())
    }

    pub fn record_log(&mut self, path: &Path) {
        self.logs.push(path.display().to_string());
    }

    pub fn save(&self, path: &Path) -> Result<(), CliError> {
        let file = std::fs::File::create(path)
            .map_err(|e| CliError::config(format!("cannot write manifest {path:?}: {e}")))?;
        serde_json::to_writer_pretty(std::io::BufWriter::new(file), self)
            .map_err(|e| CliError::config(format!("cannot serialize manifest: {e}")))?;
        Ok(())
    }
}

pub fn sha256_file(path: &Path) -> Result<String, CliError> {
    let bytes = std::fs::read(path)
        .map_err(|e| CliError::config(format!("cannot hash {path:?}: {e}")))?;
    let mut hasher = Sha256::new();
    hasher.update(&bytes);
    let digest = hasher.finalize();
    let mut hex = String::with_capacity(64);
    for byte in digest {
        hex.push_str(&format!("{byte:02x}"));
    }
    Ok(hex)
}
