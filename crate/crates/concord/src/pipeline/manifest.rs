//! Run manifest and single-instance lock.
//!
//! Every produced artifact is listed with a sha256 checksum; two runs of the
//! same config and seed must produce identical checksum maps (timestamps
//! live outside the comparison). The lock file guards one CLI instance per
//! output directory.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::hex_string;
use super::PipelineError;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ArtifactEntry {
    /// Path relative to the output directory.
    pub path: String,
    pub sha256: String,
    pub stage: String,
    pub iteration: usize,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct IterationRecord {
    pub index: usize,
    /// Held-out mean sampling consistency at t_max after this iteration.
    #[serde(default)]
    pub mean_consistency: Option<f64>,
    #[serde(default)]
    pub unanimous_fraction: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub config_hash: String,
    /// Wall-clock creation time; excluded from determinism comparisons.
    pub created_unix: u64,
    pub iterations: Vec<IterationRecord>,
    pub artifacts: Vec<ArtifactEntry>,
}

impl RunManifest {
    pub fn new(config_hash: String) -> Self {
        RunManifest {
            config_hash,
            created_unix: std::time::SystemTime::now()
                .duration_since(std::time::UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0),
            iterations: Vec::new(),
            artifacts: Vec::new(),
        }
    }

    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let bytes = std::fs::read(path)?;
        serde_json::from_slice(&bytes)
            .map_err(|e| PipelineError::Config(format!("bad manifest: {e}")))
    }

    pub fn save(&self, path: &Path) -> Result<(), PipelineError> {
        let mut sorted = self.clone();
        sorted.artifacts.sort_by(|a, b| a.path.cmp(&b.path));
        std::fs::write(path, serde_json::to_vec_pretty(&sorted)?)?;
        Ok(())
    }

    /// Registers (or replaces) an artifact with a fresh checksum.
    pub fn record(
        &mut self,
        out_dir: &Path,
        rel_path: &str,
        stage: &str,
        iteration: usize,
    ) -> Result<(), PipelineError> {
        let sha = sha256_file(&out_dir.join(rel_path))?;
        self.artifacts.retain(|a| a.path != rel_path);
        self.artifacts.push(ArtifactEntry {
            path: rel_path.to_string(),
            sha256: sha,
            stage: stage.to_string(),
            iteration,
        });
        Ok(())
    }

    pub fn find(&self, rel_path: &str) -> Option<&ArtifactEntry> {
        self.artifacts.iter().find(|a| a.path == rel_path)
    }

    /// path -> sha256, the determinism comparison surface.
    pub fn checksums(&self) -> BTreeMap<String, String> {
        self.artifacts
            .iter()
            .map(|a| (a.path.clone(), a.sha256.clone()))
            .collect()
    }
}

pub fn sha256_file(path: &Path) -> Result<String, PipelineError> {
    let bytes = std::fs::read(path)?;
    let mut hasher = Sha256::new();
    hasher.update(&bytes);
    Ok(hex_string(&hasher.finalize()))
}

/// Exclusive lock on an output directory; removed on drop.
#[derive(Debug)]
pub struct RunLock {
    path: PathBuf,
}

impl RunLock {
    pub fn acquire(out_dir: &Path) -> Result<Self, PipelineError> {
        let path = out_dir.join(".concord.lock");
        match std::fs::OpenOptions::new()
            .write(true)
            .create_new(true)
            .open(&path)
        {
            Ok(mut f) => {
                use std::io::Write;
                let _ = writeln!(f, "{}", std::process::id());
                Ok(RunLock { path })
            }
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => {
                Err(PipelineError::Locked(path))
            }
            Err(e) => Err(PipelineError::Io(e)),
        }
    }
}

impl Drop for RunLock {
    fn drop(&mut self) {
        let _ = std::fs::remove_file(&self.path);
    }
}
