//! Output manifests: every pipeline command hash-lists the files it read and
//! wrote, so a downstream stage can detect tampered or stale inputs.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{PipelineError, Result};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    /// File name -> sha256 of content.
    pub inputs: BTreeMap<String, String>,
    pub outputs: BTreeMap<String, String>,
    pub config_fingerprint: String,
    pub seed: u64,
}

pub fn sha256_file(path: impl AsRef<Path>) -> Result<String> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| PipelineError::io(path, e))?;
    let mut hasher = Sha256::new();
    hasher.update(&bytes);
    Ok(hex::encode(hasher.finalize()))
}

fn file_key(path: &Path) -> String {
    path.file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string())
}

impl Manifest {
    pub fn new(command: impl Into<String>, config_fingerprint: impl Into<String>, seed: u64) -> Manifest {
        Manifest {
            command: command.into(),
            inputs: BTreeMap::new(),
            outputs: BTreeMap::new(),
            config_fingerprint: config_fingerprint.into(),
            seed,
        }
    }

    pub fn add_input(&mut self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        self.inputs.insert(file_key(path), sha256_file(path)?);
        Ok(())
    }

    pub fn add_output(&mut self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        self.outputs.insert(file_key(path), sha256_file(path)?);
        Ok(())
    }

    /// Write `manifest-<command>.json` into `dir`.
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<std::path::PathBuf> {
        let path = dir.as_ref().join(format!("manifest-{}.json", self.command));
        let json = serde_json::to_string_pretty(self)
            .map_err(|e| PipelineError::Integrity(format!("serialize manifest: {e}")))?;
        fs::write(&path, json).map_err(|e| PipelineError::io(&path, e))?;
        Ok(path)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Manifest> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| PipelineError::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| PipelineError::Schema {
            line: 1,
            message: format!("manifest {}: {e}", path.display()),
        })
    }
}

/// Check `file` against every manifest in its directory that lists it as an
/// output. A hash mismatch means the file changed after it was produced.
pub fn verify_file(file: impl AsRef<Path>) -> Result<()> {
    let file = file.as_ref();
    let Some(dir) = file.parent() else {
        return Ok(());
    };
    let key = file_key(file);
    let entries = match fs::read_dir(dir) {
        Ok(e) => e,
        Err(_) => return Ok(()),
    };
    for entry in entries.flatten() {
        let name = entry.file_name().to_string_lossy().into_owned();
        if !name.starts_with("manifest-") || !name.ends_with(".json") {
            continue;
        }
        let manifest = Manifest::load(entry.path())?;
        if let Some(recorded) = manifest.outputs.get(&key) {
            let actual = sha256_file(file)?;
            if &actual != recorded {
                return Err(PipelineError::ManifestMismatch {
                    path: file.to_path_buf(),
                });
            }
        }
    }
    Ok(())
}
