use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::{Path, PathBuf};
use std::time::Instant;

pub fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

pub fn sha256_file(path: &Path) -> std::io::Result<String> {
    Ok(sha256_hex(&std::fs::read(path)?))
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FileHash {
    pub path: String,
    pub sha256: String,
}

/// Record of one command invocation: the fully resolved configuration,
/// hashes of every input and produced artifact, and the outcome. Written
/// atomically (temp file + rename) whether the command succeeds or fails.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub config: serde_json::Value,
    pub inputs: Vec<FileHash>,
    pub artifacts: Vec<FileHash>,
    pub duration_seconds: f64,
    pub tool_version: String,
    pub status: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// Accumulates manifest contents while a command runs.
pub struct ManifestBuilder {
    command: String,
    config: serde_json::Value,
    inputs: Vec<FileHash>,
    artifacts: Vec<PathBuf>,
    started: Instant,
}

impl ManifestBuilder {
    pub fn new(command: &str, config: serde_json::Value) -> Self {
        ManifestBuilder {
            command: command.to_string(),
            config,
            inputs: Vec::new(),
            artifacts: Vec::new(),
            started: Instant::now(),
        }
    }

    pub fn record_input(&mut self, path: &Path) {
        let sha256 = sha256_file(path).unwrap_or_else(|_| "unreadable".to_string());
        self.inputs.push(FileHash {
            path: path.display().to_string(),
            sha256,
        });
    }

    /// Registers an artifact path; it is hashed when the manifest is
    /// finalized, after the file has been written.
    pub fn record_artifact(&mut self, path: &Path) {
        self.artifacts.push(path.to_path_buf());
    }

    fn build(&self, status: &str, error: Option<String>) -> RunManifest {
        RunManifest {
            command: self.command.clone(),
            config: self.config.clone(),
            inputs: self.inputs.clone(),
            artifacts: self
                .artifacts
                .iter()
                .map(|p| FileHash {
                    path: p.display().to_string(),
                    sha256: sha256_file(p).unwrap_or_else(|_| "missing".to_string()),
                })
                .collect(),
            duration_seconds: self.started.elapsed().as_secs_f64(),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            status: status.to_string(),
            error,
        }
    }

    /// Writes the manifest next to the command's outputs. Failure to write
    /// the manifest itself is swallowed: it must never mask the command's
    /// own outcome.
    pub fn write(&self, manifest_path: &Path, status: &str, error: Option<String>) {
        let manifest = self.build(status, error);
        let _ = write_atomic(manifest_path, &manifest);
    }
}

fn write_atomic(path: &Path, manifest: &RunManifest) -> std::io::Result<()> {
    let body = serde_json::to_string_pretty(manifest)
        .map_err(|e| std::io::Error::other(e.to_string()))?;
    let tmp = path.with_extension("json.tmp");
    std::fs::write(&tmp, body + "\n")?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sha256_matches_known_vector() {
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }

    #[test]
    fn manifest_records_inputs_and_artifacts() {
        let dir = tempfile::tempdir().unwrap();
        let input = dir.path().join("in.txt");
        let artifact = dir.path().join("out.txt");
        std::fs::write(&input, "hello").unwrap();

        let mut builder = ManifestBuilder::new("test", serde_json::json!({"x": 1}));
        builder.record_input(&input);
        builder.record_artifact(&artifact);
        std::fs::write(&artifact, "world").unwrap();

        let manifest_path = dir.path().join("manifest.json");
        builder.write(&manifest_path, "ok", None);

        let loaded: RunManifest =
            serde_json::from_str(&std::fs::read_to_string(&manifest_path).unwrap()).unwrap();
        assert_eq!(loaded.status, "ok");
        assert_eq!(loaded.inputs.len(), 1);
        assert_eq!(loaded.artifacts.len(), 1);
        assert_eq!(loaded.inputs[0].sha256, sha256_hex(b"hello"));
        assert_eq!(loaded.artifacts[0].sha256, sha256_hex(b"world"));
    }
}
