//! Parameter checkpoints.
//!
//! A checkpoint is two files: `<path>` holds every segment's values as
//! little-endian `f64`, in segment order; `<path>.manifest` is text:
//!
//! ```text
//! metaexp-params 1
//! segment w0 2x64
//! segment b0 64
//! sha256 <hex digest of the binary file>
//! ```

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use super::params::ParamVector;

const MAGIC: &str = "metaexp-params 1";

#[derive(Debug, thiserror::Error)]
pub enum CheckpointError {
    #[error("checkpoint io on {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("malformed manifest: {0}")]
    Manifest(String),
    #[error("checkpoint data does not match its manifest digest")]
    Digest,
    #[error("checkpoint schema mismatch: expected {expected}, found {found}")]
    SchemaMismatch { expected: String, found: String },
}

fn manifest_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".manifest");
    PathBuf::from(s)
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> CheckpointError + '_ {
    move |source| CheckpointError::Io { path: path.to_path_buf(), source }
}

fn shape_text(shape: &[usize]) -> String {
    if shape.is_empty() {
        return "scalar".into();
    }
    shape.iter().map(|d| d.to_string()).collect::<Vec<_>>().join("x")
}

fn schema_text(schema: &[(String, Vec<usize>)]) -> String {
    schema
        .iter()
        .map(|(n, s)| format!("{n}:{}", shape_text(s)))
        .collect::<Vec<_>>()
        .join(",")
}

pub fn save_checkpoint(path: &Path, params: &ParamVector) -> Result<(), CheckpointError> {
    let mut bytes = Vec::with_capacity(params.total_len() * 8);
    for v in params.flatten() {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    let mut manifest = format!("{MAGIC}\n");
    for (name, shape) in params.schema() {
        manifest.push_str(&format!("segment {name} {}\n", shape_text(&shape)));
    }
    manifest.push_str(&format!("sha256 {}\n", hex::encode(Sha256::digest(&bytes))));
    fs::write(path, &bytes).map_err(io_err(path))?;
    let mpath = manifest_path(path);
    fs::write(&mpath, manifest).map_err(io_err(&mpath))?;
    Ok(())
}

fn parse_shape(text: &str) -> Result<Vec<usize>, CheckpointError> {
    if text == "scalar" {
        return Ok(Vec::new());
    }
    text.split('x')
        .map(|d| d.parse().map_err(|_| CheckpointError::Manifest(format!("bad shape `{text}`"))))
        .collect()
}

/// Loads a checkpoint whose schema must equal `template`'s.
pub fn load_checkpoint(path: &Path, template: &ParamVector) -> Result<ParamVector, CheckpointError> {
    let mpath = manifest_path(path);
    let manifest = fs::read_to_string(&mpath).map_err(io_err(&mpath))?;
    let bytes = fs::read(path).map_err(io_err(path))?;
    let mut lines = manifest.lines();
    if lines.next() != Some(MAGIC) {
        return Err(CheckpointError::Manifest("missing header".into()));
    }
    let mut schema = Vec::new();
    let mut digest = None;
    for line in lines {
        let parts: Vec<&str> = line.split_whitespace().collect();
        match parts.as_slice() {
            ["segment", name, shape] => schema.push((name.to_string(), parse_shape(shape)?)),
            ["sha256", d] => digest = Some(d.to_string()),
            [] => {}
            _ => return Err(CheckpointError::Manifest(format!("unexpected line `{line}`"))),
        }
    }
    let digest = digest.ok_or_else(|| CheckpointError::Manifest("missing sha256".into()))?;
    if hex::encode(Sha256::digest(&bytes)) != digest {
        return Err(CheckpointError::Digest);
    }
    let expected = template.schema();
    if schema != expected {
        return Err(CheckpointError::SchemaMismatch {
            expected: schema_text(&expected),
            found: schema_text(&schema),
        });
    }
    if bytes.len() != template.total_len() * 8 {
        return Err(CheckpointError::Manifest("data length does not match segments".into()));
    }
    let flat: Vec<f64> = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect();
    Ok(template.unflatten(&flat))
}
