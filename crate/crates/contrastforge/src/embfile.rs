//! NEGGEMB1 embedding files: 8-byte magic, little-endian `u32` count and
//! `u32` dim, then `count × dim` little-endian `f32`. Row ids live in a
//! sidecar text file (`<path>.ids`, one id per line).

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use contrastforge_core::encode::{AttributeEmbedding, AttributeTable, FieldSlot, FIELDS, FIELD_COUNT};
use contrastforge_core::numerics::Matrix;

use crate::fsutil::{atomic_write, read_to_string};
use crate::{Error, Result};

pub const MAGIC: &[u8; 8] = b"NEGGEMB1";
const HEADER_LEN: usize = 16;

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingFile {
    pub ids: Vec<String>,
    pub dim: usize,
    pub vectors: Vec<f32>,
}

pub fn ids_path(path: &Path) -> PathBuf {
    let mut p = path.as_os_str().to_owned();
    p.push(".ids");
    PathBuf::from(p)
}

impl EmbeddingFile {
    pub fn new(ids: Vec<String>, dim: usize, vectors: Vec<f32>) -> std::result::Result<Self, String> {
        let file = Self { ids, dim, vectors };
        file.check()?;
        Ok(file)
    }

    fn check(&self) -> std::result::Result<(), String> {
        if self.vectors.len() != self.ids.len() * self.dim {
            return Err(format!("{} values for {} ids of dim {}", self.vectors.len(), self.ids.len(), self.dim));
        }
        let mut seen = BTreeSet::new();
        for id in &self.ids {
            if id.is_empty() || id.contains('\n') {
                return Err(format!("invalid id {id:?}"));
            }
            if !seen.insert(id.as_str()) {
                return Err(format!("duplicate id `{id}`"));
            }
        }
        if let Some(k) = self.vectors.iter().position(|v| !v.is_finite()) {
            return Err(format!("non-finite value in row `{}`", self.ids[k / self.dim.max(1)]));
        }
        u32::try_from(self.ids.len()).map_err(|_| "too many rows".to_string())?;
        u32::try_from(self.dim).map_err(|_| "dimension too large".to_string())?;
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn row(&self, k: usize) -> &[f32] {
        &self.vectors[k * self.dim..(k + 1) * self.dim]
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_LEN + 4 * self.vectors.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(self.ids.len() as u32).to_le_bytes());
        out.extend_from_slice(&(self.dim as u32).to_le_bytes());
        for v in &self.vectors {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        self.check().map_err(|m| Error::format(path, m))?;
        atomic_write(path, &self.to_bytes())?;
        let mut ids = String::new();
        for id in &self.ids {
            ids.push_str(id);
            ids.push('\n');
        }
        atomic_write(&ids_path(path), ids.as_bytes())
    }

    pub fn read(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        if bytes.len() < HEADER_LEN || &bytes[..8] != MAGIC {
            return Err(Error::format(path, "bad magic or version"));
        }
        let word = |at: usize| u32::from_le_bytes(bytes[at..at + 4].try_into().expect("4 bytes")) as usize;
        let (count, dim) = (word(8), word(12));
        let expected = count.checked_mul(dim).and_then(|n| n.checked_mul(4)).map(|n| n + HEADER_LEN);
        if expected != Some(bytes.len()) {
            return Err(Error::format(path, format!("payload length {} does not match {count} × {dim}", bytes.len())));
        }
        let vectors: Vec<f32> =
            bytes[HEADER_LEN..].chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes"))).collect();
        let sidecar = ids_path(path);
        let ids: Vec<String> = read_to_string(&sidecar)?.lines().map(str::to_string).collect();
        if ids.len() != count {
            return Err(Error::format(sidecar, format!("{} ids for {count} rows", ids.len())));
        }
        let file = Self { ids, dim, vectors };
        file.check().map_err(|m| Error::format(path, m))?;
        Ok(file)
    }

    /// Rows keyed by id, widened to 64-bit.
    pub fn to_map(&self) -> BTreeMap<String, Vec<f64>> {
        self.ids.iter().enumerate().map(|(k, id)| (id.clone(), self.row(k).iter().map(|&v| v as f64).collect())).collect()
    }
}

fn positive_key(item: &str, slot: FieldSlot) -> String {
    format!("{item}#{}", slot.key())
}

fn negative_slots() -> [FieldSlot; FIELD_COUNT] {
    FIELDS.map(|f| match f {
        contrastforge_core::encode::AttributeField::VisualDescription => FieldSlot::NegativeDescription,
        other => FieldSlot::Positive(other),
    })
}

/// Packs attribute tokens into the positive and negative files, `F`
/// consecutive rows per item.
pub fn attribute_files(embeddings: &[AttributeEmbedding]) -> (EmbeddingFile, EmbeddingFile) {
    let dim = embeddings.first().map_or(0, |e| e.positive.cols());
    let mut pos = EmbeddingFile { ids: Vec::new(), dim, vectors: Vec::new() };
    let mut neg = EmbeddingFile { ids: Vec::new(), dim, vectors: Vec::new() };
    for e in embeddings {
        for (k, (field, neg_slot)) in FIELDS.iter().zip(negative_slots()).enumerate() {
            pos.ids.push(positive_key(&e.item_id, FieldSlot::Positive(*field)));
            pos.vectors.extend(e.positive.row(k).iter().map(|&v| v as f32));
            neg.ids.push(positive_key(&e.item_id, neg_slot));
            neg.vectors.extend(e.negative.row(k).iter().map(|&v| v as f32));
        }
    }
    (pos, neg)
}

/// Inverse of [`attribute_files`], aligned to `item_ids`.
pub fn attribute_table(item_ids: &[String], pos: &EmbeddingFile, neg: &EmbeddingFile, path: &Path) -> Result<AttributeTable> {
    if pos.len() != neg.len() || pos.dim != neg.dim || !pos.len().is_multiple_of(FIELD_COUNT) {
        return Err(Error::format(path, "positive and negative attribute files do not match"));
    }
    let mut embeddings = Vec::with_capacity(pos.len() / FIELD_COUNT);
    for start in (0..pos.len()).step_by(FIELD_COUNT) {
        let item = pos.ids[start].rsplit_once('#').map_or("", |(i, _)| i).to_string();
        let mut p = Vec::with_capacity(FIELD_COUNT * pos.dim);
        let mut n = Vec::with_capacity(FIELD_COUNT * pos.dim);
        for (k, (field, neg_slot)) in FIELDS.iter().zip(negative_slots()).enumerate() {
            let row = start + k;
            if pos.ids[row] != positive_key(&item, FieldSlot::Positive(*field)) || neg.ids[row] != positive_key(&item, neg_slot) {
                return Err(Error::format(path, format!("unexpected row order at `{}`", pos.ids[row])));
            }
            p.extend(pos.row(row).iter().map(|&v| v as f64));
            n.extend(neg.row(row).iter().map(|&v| v as f64));
        }
        embeddings.push(AttributeEmbedding {
            item_id: item,
            positive: Matrix::from_vec(FIELD_COUNT, pos.dim, p)?,
            negative: Matrix::from_vec(FIELD_COUNT, pos.dim, n)?,
        });
    }
    Ok(AttributeTable::new(item_ids, embeddings)?)
}
