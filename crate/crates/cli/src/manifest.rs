use std::collections::BTreeMap;
use std::path::Path;

use serde::Serialize;
use serde_json::Value;
use sha1::{Digest, Sha1};

use crate::config::RunConfig;
use crate::error::CliResult;

/// Hash of `bytes` as git would name the blob.
pub fn blob_hash(bytes: &[u8]) -> String {
    let mut h = Sha1::new();
    h.update(format!("blob {}\0", bytes.len()).as_bytes());
    h.update(bytes);
    hex::encode(h.finalize())
}

/// Config echo plus content hashes of everything read and written.
#[derive(Debug, Serialize)]
pub struct Manifest {
    pub command: String,
    pub config: RunConfig,
    pub inputs: BTreeMap<String, String>,
    pub outputs: BTreeMap<String, String>,
    pub details: BTreeMap<String, Value>,
}

impl Manifest {
    pub fn new(command: &str, config: &RunConfig) -> Self {
        Self {
            command: command.into(),
            config: config.clone(),
            inputs: BTreeMap::new(),
            outputs: BTreeMap::new(),
            details: BTreeMap::new(),
        }
    }

    pub fn input(&mut self, name: &str, bytes: &[u8]) {
        self.inputs.insert(name.into(), blob_hash(bytes));
    }

    pub fn detail(&mut self, key: &str, value: impl Serialize) {
        self.details
            .insert(key.into(), serde_json::to_value(value).expect("detail serializes"));
    }

    /// Writes `bytes` to `dir/name` and records its hash.
    pub fn write(&mut self, dir: &Path, name: &str, bytes: &[u8]) -> CliResult<()> {
        std::fs::write(dir.join(name), bytes)?;
        self.outputs.insert(name.into(), blob_hash(bytes));
        Ok(())
    }

    pub fn record(&mut self, name: &str, bytes: &[u8]) {
        self.outputs.insert(name.into(), blob_hash(bytes));
    }

    pub fn save(&self, dir: &Path, name: &str) -> CliResult<()> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        std::fs::write(dir.join(name), text)?;
        Ok(())
    }
}
