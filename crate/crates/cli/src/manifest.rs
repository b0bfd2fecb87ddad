use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::CliError;

pub const MANIFEST_NAME: &str = "MANIFEST.json";

/// Provenance of one output file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub command: String,
    pub args: Vec<String>,
    pub seed: u64,
    pub sha256: String,
    /// Input path → SHA-256 at the time the output was written.
    pub inputs: BTreeMap<String, String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    /// Keyed by output file name.
    pub outputs: BTreeMap<String, ManifestEntry>,
}

pub fn sha256_file(path: &Path) -> Result<String, CliError> {
    let bytes = std::fs::read(path).map_err(|e| CliError::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// Records what produced a set of outputs in a `MANIFEST.json` next to
/// each of them, merging with entries already there.
#[derive(Debug, Clone)]
pub struct Provenance {
    pub command: String,
    pub args: Vec<String>,
    pub seed: u64,
    inputs: Vec<PathBuf>,
}

impl Provenance {
    pub fn new(command: &str, seed: u64) -> Self {
        Self { command: command.into(), args: std::env::args().skip(1).collect(), seed, inputs: Vec::new() }
    }

    pub fn input(&mut self, path: &Path) -> &mut Self {
        self.inputs.push(path.to_path_buf());
        self
    }

    pub fn record(&self, outputs: &[&Path]) -> Result<(), CliError> {
        let mut inputs = BTreeMap::new();
        for p in &self.inputs {
            inputs.insert(p.display().to_string(), sha256_file(p)?);
        }
        for out in outputs {
            let dir = out.parent().filter(|d| !d.as_os_str().is_empty()).unwrap_or(Path::new("."));
            let path = dir.join(MANIFEST_NAME);
            let mut manifest: Manifest = match std::fs::read_to_string(&path) {
                Ok(text) => serde_json::from_str(&text).unwrap_or_default(),
                Err(_) => Manifest::default(),
            };
            let name = out.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
            manifest.outputs.insert(
                name,
                ManifestEntry {
                    command: self.command.clone(),
                    args: self.args.clone(),
                    seed: self.seed,
                    sha256: sha256_file(out)?,
                    inputs: inputs.clone(),
                },
            );
            let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
            std::fs::write(&path, text + "\n").map_err(|e| CliError::io(&path, e))?;
        }
        Ok(())
    }
}
