//! Output directory bookkeeping: every artifact is hashed and listed in
//! `manifest.json` together with the config hash and step timings.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::CliError;

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Clone, Debug, Serialize)]
pub struct FileEntry {
    pub path: String,
    pub sha256: String,
    pub bytes: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct Timing {
    pub step: String,
    pub millis: f64,
}

#[derive(Debug, Serialize)]
pub struct Manifest {
    pub command: String,
    pub version: String,
    pub config_sha256: String,
    pub seed: u64,
    pub level: usize,
    pub exit_code: i32,
    pub error: Option<String>,
    pub files: Vec<FileEntry>,
    pub timings: Vec<Timing>,
}

/// Writes artifacts below one directory and remembers their hashes.
pub struct Artifacts {
    dir: PathBuf,
    files: Vec<FileEntry>,
    timings: Vec<Timing>,
}

impl Artifacts {
    pub fn new(dir: &Path) -> Result<Self, CliError> {
        fs::create_dir_all(dir).map_err(|source| CliError::Io { path: dir.display().to_string(), source })?;
        Ok(Artifacts { dir: dir.to_path_buf(), files: Vec::new(), timings: Vec::new() })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    /// Writes `bytes` to `rel` (relative to the output directory).
    pub fn write(&mut self, rel: &str, bytes: &[u8]) -> Result<(), CliError> {
        let path = self.dir.join(rel);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(|source| CliError::Io { path: parent.display().to_string(), source })?;
        }
        fs::write(&path, bytes).map_err(|source| CliError::Io { path: path.display().to_string(), source })?;
        self.record(rel, bytes);
        Ok(())
    }

    /// Records a file written elsewhere (e.g. by a sweep worker).
    pub fn record(&mut self, rel: &str, bytes: &[u8]) {
        self.files.retain(|f| f.path != rel);
        self.files.push(FileEntry { path: rel.to_string(), sha256: sha256_hex(bytes), bytes: bytes.len() });
    }

    pub fn write_json<T: Serialize>(&mut self, rel: &str, value: &T) -> Result<(), CliError> {
        self.write(rel, &to_json(value))
    }

    /// Runs `f` and records its wall time under `step`.
    pub fn timed<T>(&mut self, step: &str, f: impl FnOnce() -> T) -> T {
        let t = Instant::now();
        let out = f();
        self.timings.push(Timing { step: step.to_string(), millis: t.elapsed().as_secs_f64() * 1e3 });
        out
    }

    pub fn files(&self) -> &[FileEntry] {
        &self.files
    }

    pub fn finish(mut self, mut manifest: Manifest) -> Result<Manifest, CliError> {
        self.files.sort_by(|a, b| a.path.cmp(&b.path));
        manifest.files = std::mem::take(&mut self.files);
        manifest.timings = std::mem::take(&mut self.timings);
        let path = self.dir.join("manifest.json");
        fs::write(&path, to_json(&manifest))
            .map_err(|source| CliError::Io { path: path.display().to_string(), source })?;
        Ok(manifest)
    }
}

/// Pretty JSON with a trailing newline.
pub fn to_json<T: Serialize>(value: &T) -> Vec<u8> {
    let mut v = serde_json::to_vec_pretty(value).expect("report types serialize");
    v.push(b'\n');
    v
}
