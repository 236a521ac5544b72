//! Attribute encoding: each item becomes `F = 4` field vectors for its
//! positive attributes and 4 for its generated negative.

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::hash::Hasher;

use fnv::FnvHasher;

use crate::data::ItemAttributeRecord;
use crate::numerics::{l2_norm, Matrix};
use crate::{Error, Result};

/// Encoded fields in token order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum AttributeField {
    VisualDescription,
    Title,
    Brand,
    Category,
}

pub const FIELDS: [AttributeField; 4] =
    [AttributeField::VisualDescription, AttributeField::Title, AttributeField::Brand, AttributeField::Category];

pub const FIELD_COUNT: usize = FIELDS.len();

impl AttributeField {
    pub fn as_str(self) -> &'static str {
        match self {
            AttributeField::VisualDescription => "visual_description",
            AttributeField::Title => "title",
            AttributeField::Brand => "brand",
            AttributeField::Category => "category",
        }
    }
}

/// Which text is being encoded. The negative side swaps the visual
/// description for the generated negative description.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FieldSlot {
    Positive(AttributeField),
    NegativeDescription,
}

impl FieldSlot {
    /// Key suffix used by precomputed embedding files (`item_id#suffix`).
    pub fn key(self) -> &'static str {
        match self {
            FieldSlot::Positive(f) => f.as_str(),
            FieldSlot::NegativeDescription => "negative_description",
        }
    }
}

pub trait AttributeEncoder {
    fn dim(&self) -> usize;
    fn encode(&self, item_id: &str, slot: FieldSlot, text: &str) -> Result<Vec<f64>>;
}

/// Signed feature hashing of word 1-grams and 2-grams, L2-normalized.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StubEncoder {
    dim: usize,
}

pub const EMPTY_TOKEN: &str = "EMPTY";

impl StubEncoder {
    pub fn new(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidArgument("encoder dimension must be positive".to_string()));
        }
        Ok(Self { dim })
    }

    fn words(text: &str) -> Vec<String> {
        text.split(|c: char| !c.is_alphanumeric())
            .filter(|w| !w.is_empty())
            .map(|w| w.to_lowercase())
            .collect()
    }

    fn hash_features(&self, words: &[String]) -> Vec<f64> {
        let mut v = alloc::vec![0.0; self.dim];
        let mut add = |feature: &[&str]| {
            let mut h = FnvHasher::default();
            for (k, part) in feature.iter().enumerate() {
                if k > 0 {
                    h.write_u8(b' ');
                }
                h.write(part.as_bytes());
            }
            let hash = h.finish();
            let bucket = (hash % self.dim as u64) as usize;
            let sign = if hash >> 63 == 1 { -1.0 } else { 1.0 };
            v[bucket] += sign;
        };
        for w in words {
            add(&[w]);
        }
        for pair in words.windows(2) {
            add(&[&pair[0], &pair[1]]);
        }
        v
    }

    pub fn encode_text(&self, text: &str) -> Vec<f64> {
        let mut words = Self::words(text);
        if words.is_empty() {
            words.push(EMPTY_TOKEN.to_string());
        }
        let mut v = self.hash_features(&words);
        let mut norm = l2_norm(&v);
        if norm == 0.0 {
            // Opposite-signed collisions cancelled out.
            v = self.hash_features(&[EMPTY_TOKEN.to_string()]);
            norm = l2_norm(&v);
        }
        v.iter_mut().for_each(|x| *x /= norm);
        v
    }
}

impl AttributeEncoder for StubEncoder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn encode(&self, _item_id: &str, _slot: FieldSlot, text: &str) -> Result<Vec<f64>> {
        Ok(self.encode_text(text))
    }
}

/// Looks up precomputed vectors keyed `item_id#field`.
#[derive(Debug, Clone, PartialEq)]
pub struct LookupEncoder {
    dim: usize,
    vectors: BTreeMap<String, Vec<f64>>,
}

impl LookupEncoder {
    pub fn new(dim: usize, vectors: BTreeMap<String, Vec<f64>>) -> Result<Self> {
        if let Some((k, _)) = vectors.iter().find(|(_, v)| v.len() != dim) {
            return Err(Error::InvalidInput(alloc::format!("vector `{k}` does not have dimension {dim}")));
        }
        Ok(Self { dim, vectors })
    }
}

impl AttributeEncoder for LookupEncoder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn encode(&self, item_id: &str, slot: FieldSlot, _text: &str) -> Result<Vec<f64>> {
        let key = alloc::format!("{item_id}#{}", slot.key());
        self.vectors.get(&key).cloned().ok_or(Error::MissingAttributes(key))
    }
}

/// Positive and negative field tokens of one item, both `F × d_enc`.
#[derive(Debug, Clone, PartialEq)]
pub struct AttributeEmbedding {
    pub item_id: String,
    pub positive: Matrix,
    pub negative: Matrix,
}

fn field_text(record: &ItemAttributeRecord, field: AttributeField) -> &str {
    match field {
        AttributeField::VisualDescription => record.visual_description.as_deref().unwrap_or(""),
        AttributeField::Title => &record.title,
        AttributeField::Brand => &record.brand,
        AttributeField::Category => &record.category,
    }
}

/// Encodes the four positive fields and their negative counterpart, in which
/// only the visual description is replaced by the generated negative.
pub fn encode_attributes(record: &ItemAttributeRecord, encoder: &dyn AttributeEncoder) -> Result<AttributeEmbedding> {
    let (Some(_), Some(negative)) = (&record.visual_description, &record.negative_description) else {
        return Err(Error::InvalidInput(alloc::format!(
            "item `{}` has not completed the generation pipeline",
            record.item_id
        )));
    };
    let d = encoder.dim();
    let mut pos = Vec::with_capacity(FIELD_COUNT * d);
    let mut neg = Vec::with_capacity(FIELD_COUNT * d);
    for field in FIELDS {
        let text = field_text(record, field);
        let p = encoder.encode(&record.item_id, FieldSlot::Positive(field), text)?;
        let n = if field == AttributeField::VisualDescription {
            encoder.encode(&record.item_id, FieldSlot::NegativeDescription, negative)?
        } else {
            p.clone()
        };
        if p.len() != d || n.len() != d {
            return Err(Error::InvalidInput(alloc::format!("encoder returned a vector of the wrong size for `{}`", record.item_id)));
        }
        pos.extend(p);
        neg.extend(n);
    }
    Ok(AttributeEmbedding {
        item_id: record.item_id.clone(),
        positive: Matrix::from_vec(FIELD_COUNT, d, pos)?,
        negative: Matrix::from_vec(FIELD_COUNT, d, neg)?,
    })
}

/// Attribute tokens indexed by dataset item index.
#[derive(Debug, Clone, PartialEq)]
pub struct AttributeTable {
    item_ids: Vec<String>,
    entries: Vec<Option<(Matrix, Matrix)>>,
    dim: usize,
}

impl AttributeTable {
    /// Aligns embeddings with `item_ids` (the dataset's item order). Items
    /// without an embedding are left empty and reported on access.
    pub fn new(item_ids: &[String], embeddings: impl IntoIterator<Item = AttributeEmbedding>) -> Result<Self> {
        let index: BTreeMap<&str, usize> = item_ids.iter().enumerate().map(|(i, id)| (id.as_str(), i)).collect();
        let mut entries = alloc::vec![None; item_ids.len()];
        let mut dim = None;
        for emb in embeddings {
            let Some(&i) = index.get(emb.item_id.as_str()) else { continue };
            if emb.positive.shape() != emb.negative.shape() {
                return Err(Error::InvalidInput(alloc::format!("token shapes differ for `{}`", emb.item_id)));
            }
            let d = emb.positive.cols();
            if *dim.get_or_insert(d) != d {
                return Err(Error::InvalidInput("attribute embeddings disagree on dimension".to_string()));
            }
            entries[i] = Some((emb.positive, emb.negative));
        }
        Ok(Self { item_ids: item_ids.to_vec(), entries, dim: dim.unwrap_or(0) })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn positive(&self, item: usize) -> Result<&Matrix> {
        self.entries[item].as_ref().map(|e| &e.0).ok_or_else(|| self.missing(item))
    }

    pub fn negative(&self, item: usize) -> Result<&Matrix> {
        self.entries[item].as_ref().map(|e| &e.1).ok_or_else(|| self.missing(item))
    }

    fn missing(&self, item: usize) -> Error {
        Error::MissingAttributes(self.item_ids[item].clone())
    }
}
