//! Deterministic offline stand-ins for the description, masking and
//! completion steps. Outputs depend only on their inputs and seed.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::hash::Hasher;

use fnv::FnvHasher;
use rand::seq::SliceRandom;
use rand::Rng;

use crate::data::{ItemAttributeRecord, MASK_TOKEN};
use crate::numerics::seeded_rng;
use crate::{Error, Result};

/// Lowercased alphanumeric core of a whitespace token ("Cotton," → "cotton").
pub fn normalize_token(token: &str) -> String {
    token.trim_matches(|c: char| !c.is_alphanumeric()).to_lowercase()
}

fn stable_hash(parts: &[&[u8]]) -> u64 {
    let mut h = FnvHasher::default();
    for p in parts {
        h.write(p);
        h.write_u8(0xff);
    }
    h.finish()
}

const DESCRIPTION_TEMPLATES: [&str; 3] = [
    "A {category} item: {title} by {brand}",
    "{title} by {brand}, a {category} item",
    "A {category} item from {brand}: {title}",
];

/// Metadata-only description used when no image model is available.
/// The phrasing variant is picked from `(seed, item_id)`.
pub fn stub_describe(record: &ItemAttributeRecord, seed: u64) -> String {
    let pick = stable_hash(&[&seed.to_le_bytes(), record.item_id.as_bytes()]) as usize % DESCRIPTION_TEMPLATES.len();
    let text = DESCRIPTION_TEMPLATES[pick]
        .replace("{category}", &record.category)
        .replace("{title}", &record.title)
        .replace("{brand}", &record.brand);
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Key feature terms plus corpus document frequencies for the rarity fallback.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Lexicon {
    terms: BTreeSet<String>,
    doc_freq: BTreeMap<String, usize>,
}

impl Lexicon {
    pub fn new<I, S>(terms: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let terms = terms.into_iter().map(|t| normalize_token(t.as_ref())).filter(|t| !t.is_empty()).collect();
        Self { terms, doc_freq: BTreeMap::new() }
    }

    /// Counts, for each normalized token, how many `documents` contain it.
    pub fn with_corpus<'a>(mut self, documents: impl IntoIterator<Item = &'a str>) -> Self {
        for doc in documents {
            let unique: BTreeSet<String> = doc.split_whitespace().map(normalize_token).filter(|t| !t.is_empty()).collect();
            for t in unique {
                *self.doc_freq.entry(t).or_default() += 1;
            }
        }
        self
    }

    pub fn contains(&self, token: &str) -> bool {
        self.terms.contains(&normalize_token(token))
    }

    pub fn doc_freq(&self, token: &str) -> usize {
        self.doc_freq.get(&normalize_token(token)).copied().unwrap_or(0)
    }

    pub fn terms(&self) -> impl Iterator<Item = &str> {
        self.terms.iter().map(String::as_str)
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }
}

/// A description with some tokens replaced by `[MASK]`.
///
/// `originals[p]` is the token that was masked at position `p`, when known.
/// Masked text returned by a remote model carries originals only when its
/// token count matches the source description.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MaskedDescription {
    pub tokens: Vec<String>,
    pub originals: Vec<Option<String>>,
}

impl MaskedDescription {
    pub fn text(&self) -> String {
        self.tokens.join(" ")
    }

    pub fn mask_positions(&self) -> impl Iterator<Item = usize> + '_ {
        self.tokens.iter().enumerate().filter(|(_, t)| *t == MASK_TOKEN).map(|(p, _)| p)
    }

    pub fn mask_count(&self) -> usize {
        self.mask_positions().count()
    }

    /// Wraps masked text produced elsewhere, recovering originals by position
    /// when `source` has the same number of tokens.
    pub fn from_text(masked: &str, source: &str) -> Self {
        let tokens: Vec<String> = masked.split_whitespace().map(String::from).collect();
        let src: Vec<&str> = source.split_whitespace().collect();
        let aligned = src.len() == tokens.len();
        let originals = tokens
            .iter()
            .enumerate()
            .map(|(p, t)| (aligned && t == MASK_TOKEN).then(|| src[p].to_string()))
            .collect();
        Self { tokens, originals }
    }
}

/// Masks up to `max_masks` lexicon tokens. With more hits than `max_masks`
/// a seeded subset is masked; with no hit the single rarest token is masked
/// (lowest document frequency, then longest, then leftmost).
pub fn stub_mask(description: &str, lexicon: &Lexicon, max_masks: usize, seed: u64) -> Result<MaskedDescription> {
    let tokens: Vec<&str> = description.split_whitespace().collect();
    if tokens.is_empty() {
        return Err(Error::InvalidInput("cannot mask an empty description".to_string()));
    }
    let max_masks = max_masks.max(1);
    let mut chosen: Vec<usize> = tokens.iter().enumerate().filter(|(_, t)| lexicon.contains(t)).map(|(p, _)| p).collect();
    if chosen.len() > max_masks {
        let mut rng = seeded_rng(seed, stable_hash(&[description.as_bytes()]));
        chosen.shuffle(&mut rng);
        chosen.truncate(max_masks);
        chosen.sort_unstable();
    }
    if chosen.is_empty() {
        let rarest = (0..tokens.len())
            .min_by_key(|&p| (lexicon.doc_freq(tokens[p]), core::cmp::Reverse(normalize_token(tokens[p]).len()), p))
            .expect("non-empty");
        chosen.push(rarest);
    }
    let mut out_tokens: Vec<String> = tokens.iter().map(|t| t.to_string()).collect();
    let mut originals = alloc::vec![None; tokens.len()];
    for p in chosen {
        originals[p] = Some(out_tokens[p].clone());
        out_tokens[p] = MASK_TOKEN.to_string();
    }
    Ok(MaskedDescription { tokens: out_tokens, originals })
}

/// Preferred replacement per normalized token.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SwapTable {
    swaps: BTreeMap<String, String>,
}

impl SwapTable {
    pub fn new<I, A, B>(pairs: I) -> Self
    where
        I: IntoIterator<Item = (A, B)>,
        A: AsRef<str>,
        B: AsRef<str>,
    {
        let swaps = pairs
            .into_iter()
            .map(|(a, b)| (normalize_token(a.as_ref()), b.as_ref().trim().to_string()))
            .filter(|(a, b)| !a.is_empty() && !b.is_empty())
            .collect();
        Self { swaps }
    }

    pub fn get(&self, token: &str) -> Option<&str> {
        self.swaps.get(&normalize_token(token)).map(String::as_str)
    }

    pub fn alternatives(&self) -> impl Iterator<Item = &str> {
        self.swaps.values().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.swaps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.swaps.is_empty()
    }
}

/// Fills every `[MASK]`: the swap-table entry for the masked original when
/// one exists and differs from it, else a seeded vocabulary draw that
/// excludes the original.
pub fn stub_complete(masked: &MaskedDescription, swaps: &SwapTable, vocabulary: &[String], seed: u64) -> Result<String> {
    if masked.mask_count() == 0 {
        return Err(Error::InvalidInput("completion input has no [MASK] token".to_string()));
    }
    let mut rng = seeded_rng(seed, stable_hash(&[masked.text().as_bytes()]));
    let mut out = masked.tokens.clone();
    for p in masked.mask_positions().collect::<Vec<_>>() {
        let original = masked.originals.get(p).cloned().flatten();
        let original_norm = original.as_deref().map(normalize_token);
        let swapped = original
            .as_deref()
            .and_then(|o| swaps.get(o))
            .filter(|alt| Some(normalize_token(alt)) != original_norm);
        out[p] = match swapped {
            Some(alt) => alt.to_string(),
            None => {
                let pool: Vec<&String> = vocabulary
                    .iter()
                    .filter(|w| !w.trim().is_empty() && Some(normalize_token(w)) != original_norm)
                    .collect();
                if pool.is_empty() {
                    return Err(Error::InvalidInput(alloc::format!(
                        "no replacement available for masked token {:?}",
                        original.unwrap_or_default()
                    )));
                }
                pool[rng.gen_range(0..pool.len())].trim().to_string()
            }
        };
    }
    Ok(out.join(" "))
}

/// Runs the offline chain on one record: describe (only when no
/// description is present), mask, complete.
pub fn stub_enrich(
    record: &mut ItemAttributeRecord,
    lexicon: &Lexicon,
    swaps: &SwapTable,
    vocabulary: &[String],
    max_masks: usize,
    seed: u64,
) -> Result<()> {
    if record.visual_description.is_none() {
        record.visual_description = Some(stub_describe(record, seed));
    }
    let description = record.visual_description.clone().unwrap_or_default();
    let masked = stub_mask(&description, lexicon, max_masks, seed)?;
    record.negative_description = Some(stub_complete(&masked, swaps, vocabulary, seed)?);
    record.masked_description = Some(masked.text());
    record.validate()
}
