use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use sonarblob::config::RunConfig;
use sonarblob::io::write_atomic;
use sonarblob::{Error, Result};

pub const MANIFEST_NAME: &str = "manifest.json";

/// Record of one run: enough to repeat it and to check its outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub master_seed: u64,
    pub config: RunConfig,
    /// SHA-256 of input files, keyed by path relative to the input root.
    #[serde(default)]
    pub inputs: BTreeMap<String, String>,
    /// SHA-256 of written files, keyed by path relative to the output root.
    pub artifacts: BTreeMap<String, String>,
}

pub fn sha256_file(path: &Path) -> Result<String> {
    Ok(hex::encode(Sha256::digest(fs::read(path)?)))
}

/// Tracks files written below an output root.
pub struct Outputs {
    root: PathBuf,
    hashes: BTreeMap<String, String>,
}

impl Outputs {
    pub fn new(root: &Path) -> Result<Self> {
        fs::create_dir_all(root)?;
        Ok(Self {
            root: root.to_path_buf(),
            hashes: BTreeMap::new(),
        })
    }

    /// Writes `bytes` atomically to `rel` under the root and records its hash.
    pub fn write(&mut self, rel: &str, bytes: &[u8]) -> Result<()> {
        let path = self.root.join(rel);
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir)?;
        }
        write_atomic(&path, |w| {
            use std::io::Write;
            w.write_all(bytes)?;
            Ok(())
        })?;
        self.hashes
            .insert(rel.to_string(), hex::encode(Sha256::digest(bytes)));
        Ok(())
    }

    pub fn finish(
        self,
        command: &str,
        config: &RunConfig,
        inputs: BTreeMap<String, String>,
    ) -> Result<Manifest> {
        let manifest = Manifest {
            tool: "sonarblob".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: command.into(),
            master_seed: config.master_seed,
            config: config.clone(),
            inputs,
            artifacts: self.hashes,
        };
        let mut text = serde_json::to_string_pretty(&manifest)?;
        text.push('\n');
        write_atomic(&self.root.join(MANIFEST_NAME), |w| {
            use std::io::Write;
            w.write_all(text.as_bytes())?;
            Ok(())
        })?;
        Ok(manifest)
    }
}

/// Loads a run configuration from a TOML/JSON config file or from the
/// manifest of an earlier run.
pub fn load_config(path: &Path) -> Result<RunConfig> {
    let text = fs::read_to_string(path)?;
    if text.trim_start().starts_with('{') {
        let value: serde_json::Value = serde_json::from_str(&text)?;
        if let Some(cfg) = value.get("config") {
            let cfg: RunConfig = serde_json::from_value(cfg.clone())?;
            cfg.validate()?;
            return Ok(cfg);
        }
    }
    RunConfig::parse(&text).map_err(|e| match e {
        Error::Format(msg) => Error::Format(format!("{}: {msg}", path.display())),
        other => other,
    })
}
