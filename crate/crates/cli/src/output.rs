//! Staged output files and the run manifest.
//!
//! Every output is written to a temporary file in its destination directory
//! and renamed into place only after all outputs of the run succeeded. If the
//! run fails, the temporary files are deleted on drop and existing files at
//! the destination are left untouched.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};
use tempfile::NamedTempFile;

use crate::CliError;

pub const MANIFEST_SCHEMA_VERSION: u32 = 1;

pub struct Staging {
    files: Vec<(NamedTempFile, PathBuf)>,
}

impl Staging {
    pub fn new() -> Self {
        Staging { files: Vec::new() }
    }

    /// Writes `dest` through `write`, staged until [`Staging::commit`].
    pub fn write<F>(&mut self, dest: &Path, write: F) -> Result<(), CliError>
    where
        F: FnOnce(&mut dyn Write) -> Result<(), CliError>,
    {
        let dir = match dest.parent() {
            Some(p) if !p.as_os_str().is_empty() => p,
            _ => Path::new("."),
        };
        let mut tmp = NamedTempFile::new_in(dir).map_err(|e| CliError::io(dest, e))?;
        {
            let mut w = BufWriter::new(tmp.as_file_mut());
            write(&mut w)?;
            w.flush().map_err(|e| CliError::io(dest, e))?;
        }
        self.files.push((tmp, dest.to_path_buf()));
        Ok(())
    }

    pub fn write_json<T: Serialize>(&mut self, dest: &Path, value: &T) -> Result<(), CliError> {
        self.write(dest, |w| {
            serde_json::to_writer_pretty(&mut *w, value).map_err(|e| CliError::data(e.to_string()))?;
            writeln!(w).map_err(|e| CliError::io(dest, e))
        })
    }

    pub fn paths(&self) -> Vec<PathBuf> {
        self.files.iter().map(|(_, p)| p.clone()).collect()
    }

    pub fn commit(self) -> Result<(), CliError> {
        for (tmp, dest) in self.files {
            tmp.persist(&dest).map_err(|e| CliError::io(&dest, e.error))?;
        }
        Ok(())
    }
}

#[derive(Debug, Serialize)]
pub struct FileEntry {
    pub path: String,
    pub sha256: String,
}

impl FileEntry {
    pub fn of(path: &Path) -> Result<Self, CliError> {
        let mut file = File::open(path).map_err(|e| CliError::io(path, e))?;
        let mut hasher = Sha256::new();
        let mut buf = [0u8; 64 * 1024];
        loop {
            let n = file.read(&mut buf).map_err(|e| CliError::io(path, e))?;
            if n == 0 {
                break;
            }
            hasher.update(&buf[..n]);
        }
        Ok(FileEntry {
            path: path.display().to_string(),
            sha256: hex::encode(hasher.finalize()),
        })
    }
}

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub schema_version: u32,
    pub tool: &'static str,
    pub tool_version: &'static str,
    pub subcommand: &'static str,
    pub inputs: Vec<FileEntry>,
    pub outputs: Vec<String>,
    pub output_schema_version: u32,
    pub seed: Option<u64>,
    pub config: serde_json::Value,
    pub timestamp: String,
}

impl RunManifest {
    pub fn new(
        subcommand: &'static str,
        inputs: &[&Path],
        seed: Option<u64>,
        config: serde_json::Value,
    ) -> Result<Self, CliError> {
        Ok(RunManifest {
            schema_version: MANIFEST_SCHEMA_VERSION,
            tool: env!("CARGO_PKG_NAME"),
            tool_version: env!("CARGO_PKG_VERSION"),
            subcommand,
            inputs: inputs.iter().map(|p| FileEntry::of(p)).collect::<Result<_, _>>()?,
            outputs: Vec::new(),
            output_schema_version: swfdr_core::io::SCHEMA_VERSION,
            seed,
            config,
            timestamp: timestamp(),
        })
    }

    /// Stages the manifest next to `primary` and commits everything.
    pub fn finish(mut self, mut staging: Staging, primary: &Path) -> Result<(), CliError> {
        self.outputs = staging.paths().iter().map(|p| p.display().to_string()).collect();
        let path = manifest_path(primary);
        staging.write_json(&path, &self)?;
        staging.commit()
    }
}

pub fn manifest_path(primary: &Path) -> PathBuf {
    let mut s = primary.as_os_str().to_owned();
    s.push(".manifest.json");
    PathBuf::from(s)
}

/// Honors `SOURCE_DATE_EPOCH` for reproducible builds of the manifest.
fn timestamp() -> String {
    let now = std::env::var("SOURCE_DATE_EPOCH")
        .ok()
        .and_then(|s| s.trim().parse::<i64>().ok())
        .and_then(|secs| chrono::DateTime::from_timestamp(secs, 0))
        .unwrap_or_else(chrono::Utc::now);
    now.to_rfc3339_opts(chrono::SecondsFormat::Secs, true)
}
