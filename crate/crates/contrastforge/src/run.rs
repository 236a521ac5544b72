//! Run directories: layout, lock file and the append-only manifest.

use std::collections::BTreeMap;
use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::fsutil::{file_sha256, read_to_string, sha256_hex};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunDir {
    root: PathBuf,
}

impl RunDir {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn manifest_path(&self) -> PathBuf {
        self.root.join("manifest.jsonl")
    }

    pub fn dataset_dir(&self) -> PathBuf {
        self.root.join("dataset")
    }

    pub fn checkpoints_dir(&self) -> PathBuf {
        self.root.join("checkpoints")
    }

    pub fn metrics_dir(&self) -> PathBuf {
        self.root.join("metrics")
    }

    pub fn default_cache_path(&self) -> PathBuf {
        self.root.join("cache.jsonl")
    }

    pub fn create(&self) -> Result<()> {
        for dir in [self.root.clone(), self.dataset_dir(), self.checkpoints_dir(), self.metrics_dir()] {
            fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        }
        Ok(())
    }

    /// Exclusive lock held until the guard drops.
    pub fn lock(&self) -> Result<RunLock> {
        self.create()?;
        let path = self.root.join("lock");
        match OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(mut f) => {
                let _ = writeln!(f, "{}", std::process::id());
                Ok(RunLock { path })
            }
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => Err(Error::Locked(path)),
            Err(e) => Err(Error::io(path, e)),
        }
    }

    pub fn manifest(&self) -> Result<Vec<ManifestEntry>> {
        let path = self.manifest_path();
        if !path.exists() {
            return Ok(Vec::new());
        }
        read_to_string(&path)?
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty())
            .map(|(n, l)| {
                serde_json::from_str(l).map_err(|e| Error::Parse { path: path.clone(), line: n + 1, message: e.to_string() })
            })
            .collect()
    }

    pub fn append_manifest(&self, entry: &ManifestEntry) -> Result<()> {
        let path = self.manifest_path();
        let mut f = OpenOptions::new().create(true).append(true).open(&path).map_err(|e| Error::io(&path, e))?;
        let line = serde_json::to_string(entry).expect("manifest entries serialize");
        writeln!(f, "{line}").and_then(|_| f.sync_all()).map_err(|e| Error::io(&path, e))
    }

    pub fn last_entry(&self, command: &str) -> Result<Option<ManifestEntry>> {
        Ok(self.manifest()?.into_iter().rev().find(|e| e.command == command))
    }

    /// Fails with "run <command> first" unless `command` has completed and
    /// its recorded outputs still exist.
    pub fn require(&self, command: &str) -> Result<ManifestEntry> {
        let missing = || Error::Prerequisite(format!("run {command} first"));
        let entry = self.last_entry(command)?.ok_or_else(missing)?;
        if entry.outputs.keys().any(|p| !self.root.join(p).exists()) {
            return Err(missing());
        }
        Ok(entry)
    }

    /// Run-relative display form of `path` when it lies inside the run.
    pub fn relative(&self, path: &Path) -> String {
        path.strip_prefix(&self.root).unwrap_or(path).to_string_lossy().replace('\\', "/")
    }

    pub fn hashes<'a>(&self, paths: impl IntoIterator<Item = &'a PathBuf>) -> Result<BTreeMap<String, String>> {
        paths.into_iter().map(|p| Ok((self.relative(p), file_sha256(p)?))).collect()
    }
}

pub struct RunLock {
    path: PathBuf,
}

impl Drop for RunLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub command: String,
    pub config_hash: String,
    pub seeds: Vec<u64>,
    /// Path → sha256.
    pub inputs: BTreeMap<String, String>,
    pub outputs: BTreeMap<String, String>,
    #[serde(default)]
    pub details: serde_json::Value,
    pub wall_time_secs: f64,
}

impl ManifestEntry {
    /// Hash of everything except the wall time.
    pub fn digest(&self) -> String {
        let mut e = self.clone();
        e.wall_time_secs = 0.0;
        sha256_hex(serde_json::to_string(&e).expect("manifest entries serialize").as_bytes())
    }
}
