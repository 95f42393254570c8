//! Run manifests: every emitted file listed with its SHA-256 checksum.
//!
//! A manifest is a function of the resolved config and the output bytes
//! only, so reruns with an identical config and seed produce byte-identical
//! manifests. Wall-clock timing is reported on stderr by the CLI, never
//! stored here.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::fs;
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputRecord {
    /// Path relative to the output directory, with `/` separators.
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub schema_version: u32,
    pub toolkit_version: String,
    /// SHA-256 of the resolved configuration's canonical JSON.
    pub config_sha256: String,
    /// Sorted by path.
    pub outputs: Vec<OutputRecord>,
}

/// SHA-256 of a file's contents, hex-encoded.
pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path)?;
    let mut hasher = Sha256::new();
    hasher.update(&bytes);
    Ok(hex::encode(hasher.finalize()))
}

/// Collects output files as they are written and finalizes the manifest.
pub struct ManifestBuilder {
    out_dir: PathBuf,
    config_sha256: String,
    files: Vec<PathBuf>,
}

impl ManifestBuilder {
    pub fn new(out_dir: &Path, config_sha256: String) -> Self {
        ManifestBuilder {
            out_dir: out_dir.to_path_buf(),
            config_sha256,
            files: Vec::new(),
        }
    }

    /// Register an emitted file (must live under the output directory).
    pub fn add(&mut self, path: &Path) {
        self.files.push(path.to_path_buf());
    }

    pub fn add_all(&mut self, paths: &[PathBuf]) {
        self.files.extend_from_slice(paths);
    }

    /// Hash every registered file and write `manifest.json` into the output
    /// directory. Returns the manifest.
    pub fn finalize(self) -> Result<RunManifest> {
        let mut outputs = Vec::with_capacity(self.files.len());
        for file in &self.files {
            let rel = file.strip_prefix(&self.out_dir).map_err(|_| {
                Error::validation(format!(
                    "output {} is outside the output directory {}",
                    file.display(),
                    self.out_dir.display()
                ))
            })?;
            let meta = fs::metadata(file)?;
            outputs.push(OutputRecord {
                path: rel
                    .components()
                    .map(|c| c.as_os_str().to_string_lossy().into_owned())
                    .collect::<Vec<_>>()
                    .join("/"),
                sha256: sha256_file(file)?,
                bytes: meta.len(),
            });
        }
        outputs.sort_by(|a, b| a.path.cmp(&b.path));

        let manifest = RunManifest {
            schema_version: 1,
            toolkit_version: env!("CARGO_PKG_VERSION").to_string(),
            config_sha256: self.config_sha256,
            outputs,
        };
        let path = self.out_dir.join("manifest.json");
        let text = serde_json::to_string_pretty(&manifest)
            .map_err(|e| Error::validation(format!("manifest serialization failed: {e}")))?
            + "\n";
        fs::write(path, text)?;
        Ok(manifest)
    }
}
