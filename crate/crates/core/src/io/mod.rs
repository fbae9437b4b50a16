//! On-disk formats: CSV dataset files, the bundle manifest that ties them
//! together, TOML model and simulation configs, and rendered output
//! documents. All writes go through [`write_atomic`] so a failed run never
//! leaves a partial file behind.

pub mod bundle;
pub mod config;
pub mod report;
pub mod schema;

pub use bundle::{export, file_hashes, ingest, Ingested, Manifest, ValidationReport};
pub use report::RunManifest;

use sha2::{Digest, Sha256};
use std::path::Path;

use crate::error::{Error, Result};

/// Write via a hidden temp file in the same directory, then rename into
/// place, so readers only ever see complete files.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let name = path
        .file_name()
        .ok_or_else(|| Error::invalid(format!("not a file path: {}", path.display())))?;
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let tmp = dir.join(format!(".{}.tmp", name.to_string_lossy()));
    std::fs::write(&tmp, bytes)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn sha256_file(path: &Path) -> Result<String> {
    Ok(sha256_hex(&std::fs::read(path)?))
}
