//! Run manifest: one per run directory, written at start, finalized at end.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::SystemTime;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::CliError;

pub const MANIFEST_FILE: &str = "run_manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub run_id: String,
    pub command: String,
    /// Fully resolved config, as TOML text.
    pub config: String,
    /// Git-style blob hash (SHA-256 object format) of `config`.
    pub config_hash: String,
    pub started: String,
    pub finished: Option<String>,
    /// `None` while the run is in progress.
    pub exit_status: Option<i32>,
    pub message: Option<String>,
}

/// Hash of `blob <len>\0<content>`, as git computes object ids.
pub fn content_hash(content: &str) -> String {
    let mut h = Sha256::new();
    h.update(format!("blob {}\0", content.len()).as_bytes());
    h.update(content.as_bytes());
    hex::encode(h.finalize())
}

fn now() -> String {
    humantime::format_rfc3339_seconds(SystemTime::now()).to_string()
}

impl RunManifest {
    pub fn start(command: &str, config: String) -> Self {
        let config_hash = content_hash(&config);
        RunManifest {
            run_id: format!("{command}-{}", &config_hash[..12]),
            command: command.to_string(),
            config,
            config_hash,
            started: now(),
            finished: None,
            exit_status: None,
            message: None,
        }
    }

    pub fn finish(&mut self, code: i32, message: Option<String>) {
        self.finished = Some(now());
        self.exit_status = Some(code);
        self.message = message;
    }

    /// Replaces the manifest in `dir` atomically.
    pub fn write(&self, dir: &Path) -> Result<PathBuf, CliError> {
        let path = dir.join(MANIFEST_FILE);
        let io = |e: std::io::Error| CliError::Io(format!("{}: {e}", path.display()));
        let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io)?;
        tmp.write_all(serde_json::to_string_pretty(self).expect("manifest serialises").as_bytes())
            .map_err(io)?;
        tmp.persist(&path).map_err(|e| io(e.error))?;
        Ok(path)
    }

    #[cfg(test)]
    pub fn read(dir: &Path) -> Result<Self, CliError> {
        let path = dir.join(MANIFEST_FILE);
        let text = std::fs::read_to_string(&path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hash_matches_git_blob_format() {
        // `printf 'hello\n' | git hash-object --object-format=sha256 --stdin`
        assert_eq!(
            content_hash("hello\n"),
            "2cf8d83d9ee29543b34a87727421fdecb7e3f3a183d337639025de576db9ebb4"
        );
    }

    #[test]
    fn rewrite_keeps_a_single_manifest() {
        let dir = tempfile::tempdir().unwrap();
        let mut m = RunManifest::start("train", "seed = 1\n".into());
        m.write(dir.path()).unwrap();
        m.finish(0, None);
        m.write(dir.path()).unwrap();
        let files: Vec<_> = std::fs::read_dir(dir.path()).unwrap().collect();
        assert_eq!(files.len(), 1);
        assert_eq!(RunManifest::read(dir.path()).unwrap(), m);
    }
}
