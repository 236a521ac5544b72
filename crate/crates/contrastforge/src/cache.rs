//! Append-only response cache keyed by a content hash of the template id
//! and the rendered prompt.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use contrastforge_core::prompt::TemplateId;
use serde::{Deserialize, Serialize};

use crate::fsutil::sha256_hex;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CacheEntry {
    pub key: String,
    pub template_id: TemplateId,
    pub output: String,
    pub model: String,
    /// Unix seconds.
    pub created_at: u64,
}

pub fn cache_key(template: TemplateId, prompt: &str) -> String {
    let mut bytes = Vec::with_capacity(prompt.len() + 16);
    bytes.extend_from_slice(template.as_str().as_bytes());
    bytes.push(0);
    bytes.extend_from_slice(prompt.as_bytes());
    sha256_hex(&bytes)
}

#[derive(Debug)]
pub struct ResponseCache {
    path: Option<PathBuf>,
    entries: HashMap<String, CacheEntry>,
    writer: Option<File>,
}

impl ResponseCache {
    /// Cache that lives only in memory.
    pub fn in_memory() -> Self {
        Self { path: None, entries: HashMap::new(), writer: None }
    }

    /// Loads `path` if it exists; new entries are appended to it.
    pub fn open(path: &Path) -> Result<Self> {
        let mut cache = Self { path: Some(path.to_path_buf()), entries: HashMap::new(), writer: None };
        if path.exists() {
            let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            for (n, line) in text.lines().enumerate() {
                if line.trim().is_empty() {
                    continue;
                }
                let entry: CacheEntry = serde_json::from_str(line)
                    .map_err(|e| Error::Parse { path: path.to_path_buf(), line: n + 1, message: e.to_string() })?;
                cache.admit(entry)?;
            }
        }
        Ok(cache)
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, key: &str) -> Option<&CacheEntry> {
        self.entries.get(key)
    }

    /// Returns whether the entry is new.
    fn admit(&mut self, entry: CacheEntry) -> Result<bool> {
        match self.entries.get(&entry.key) {
            Some(existing) if existing.output != entry.output => Err(Error::Integrity(format!(
                "key {} maps to two different outputs",
                entry.key
            ))),
            Some(_) => Ok(false),
            None => {
                self.entries.insert(entry.key.clone(), entry);
                Ok(true)
            }
        }
    }

    pub fn insert(&mut self, template: TemplateId, prompt: &str, output: &str, model: &str) -> Result<()> {
        let created_at = SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs());
        let entry = CacheEntry {
            key: cache_key(template, prompt),
            template_id: template,
            output: output.to_string(),
            model: model.to_string(),
            created_at,
        };
        let line = serde_json::to_string(&entry).expect("cache entries serialize");
        if !self.admit(entry)? {
            return Ok(());
        }
        if let Some(path) = &self.path {
            if self.writer.is_none() {
                let f = OpenOptions::new().create(true).append(true).open(path).map_err(|e| Error::io(path, e))?;
                self.writer = Some(f);
            }
            let w = self.writer.as_mut().expect("opened above");
            writeln!(w, "{line}").and_then(|_| w.flush()).map_err(|e| Error::io(path, e))?;
        }
        Ok(())
    }
}
