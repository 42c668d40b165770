//! Provenance records written next to every artifact.

use std::fs;
use std::path::{Path, PathBuf};

use chrono::{SecondsFormat, Utc};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::Settings;
use crate::error::{HopeError, Result};

/// SHA-256 over `blob <len>\0` followed by the content, as git computes
/// object ids in SHA-256 repositories.
pub fn git_blob_sha256(content: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(format!("blob {}\0", content.len()).as_bytes());
    h.update(content);
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InputRecord {
    pub path: PathBuf,
    pub bytes: u64,
    pub blob_sha256: String,
}

impl InputRecord {
    pub fn of(path: &Path) -> Result<Self> {
        let content = fs::read(path).map_err(|e| HopeError::io(path, e))?;
        Ok(InputRecord {
            path: path.to_path_buf(),
            bytes: content.len() as u64,
            blob_sha256: git_blob_sha256(&content),
        })
    }
}

/// One command invocation: what ran, with which resolved settings, on which
/// inputs, producing which files.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub command: String,
    pub argv: Vec<String>,
    pub config: Settings,
    pub seed: u64,
    pub inputs: Vec<InputRecord>,
    pub outputs: Vec<PathBuf>,
    pub started_at: String,
    pub finished_at: Option<String>,
}

fn now() -> String {
    Utc::now().to_rfc3339_opts(SecondsFormat::Millis, true)
}

impl RunManifest {
    pub fn start(command: &str, argv: Vec<String>, config: &Settings) -> Self {
        RunManifest {
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.to_string(),
            argv,
            config: config.clone(),
            seed: config.seed(),
            inputs: Vec::new(),
            outputs: Vec::new(),
            started_at: now(),
            finished_at: None,
        }
    }

    /// Records `path` as an input; repeated paths are recorded once.
    pub fn add_input(&mut self, path: &Path) -> Result<()> {
        if self.inputs.iter().all(|r| r.path != path) {
            self.inputs.push(InputRecord::of(path)?);
        }
        Ok(())
    }

    pub fn add_output(&mut self, path: &Path) {
        self.outputs.push(path.to_path_buf());
    }

    pub fn finish(&mut self) {
        self.finished_at = Some(now());
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| HopeError::io(path, e))?;
        serde_json::from_str(&text)
            .map_err(|e| HopeError::Document(format!("{}: {e}", path.display())))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn blob_hash_matches_known_value() {
        // `printf 'hello\n' | git hash-object --object-format=sha256 --stdin`
        assert_eq!(
            git_blob_sha256(b"hello\n"),
            "2cf8d83d9ee29543b34a87727421fdecb7e3f3a183d337639025de576db9ebb4"
        );
    }
}
