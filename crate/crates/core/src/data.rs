//! Interaction datasets: k-core filtering, the per-user 80-10-10 split, and
//! the item attribute record carried through the generation pipeline.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use rand::seq::SliceRandom;

use crate::numerics::seeded_rng;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Interaction {
    pub user: String,
    pub item: String,
    pub timestamp: Option<i64>,
}

/// Unfiltered interaction log, at most one record per (user, item).
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RawInteractions {
    pub records: Vec<Interaction>,
}

impl RawInteractions {
    /// Deduplicates `(user, item)` pairs, keeping the earliest timestamp.
    /// A missing timestamp counts as later than any present one. Records
    /// keep the order of first appearance.
    pub fn from_records(records: impl IntoIterator<Item = Interaction>) -> Result<Self> {
        let mut seen: BTreeMap<(String, String), usize> = BTreeMap::new();
        let mut out: Vec<Interaction> = Vec::new();
        for rec in records {
            if rec.user.is_empty() || rec.item.is_empty() {
                return Err(Error::InvalidInput("empty user or item id".to_string()));
            }
            match seen.get(&(rec.user.clone(), rec.item.clone())) {
                Some(&idx) => {
                    let kept = &mut out[idx];
                    kept.timestamp = match (kept.timestamp, rec.timestamp) {
                        (Some(a), Some(b)) => Some(a.min(b)),
                        (a, b) => a.or(b),
                    };
                }
                None => {
                    seen.insert((rec.user.clone(), rec.item.clone()), out.len());
                    out.push(rec);
                }
            }
        }
        Ok(Self { records: out })
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn user_count(&self) -> usize {
        self.records.iter().map(|r| r.user.as_str()).collect::<BTreeSet<_>>().len()
    }

    pub fn item_count(&self) -> usize {
        self.records.iter().map(|r| r.item.as_str()).collect::<BTreeSet<_>>().len()
    }
}

/// Interactions / (users × items).
pub fn density(users: usize, items: usize, interactions: usize) -> f64 {
    interactions as f64 / (users as f64 * items as f64)
}

/// Keeps the largest subset in which every user and every item has at least
/// `k` interactions. The k-core is unique, so the result does not depend on
/// removal order.
pub fn kcore_filter(raw: &RawInteractions, k: usize) -> Result<RawInteractions> {
    if k == 0 {
        return Err(Error::InvalidArgument("k must be at least 1".to_string()));
    }
    let mut alive: Vec<bool> = alloc::vec![true; raw.records.len()];
    loop {
        let mut user_deg: BTreeMap<&str, usize> = BTreeMap::new();
        let mut item_deg: BTreeMap<&str, usize> = BTreeMap::new();
        for (rec, _) in raw.records.iter().zip(&alive).filter(|(_, a)| **a) {
            *user_deg.entry(rec.user.as_str()).or_default() += 1;
            *item_deg.entry(rec.item.as_str()).or_default() += 1;
        }
        let mut removed = false;
        for (rec, a) in raw.records.iter().zip(alive.iter_mut()) {
            if *a && (user_deg[rec.user.as_str()] < k || item_deg[rec.item.as_str()] < k) {
                *a = false;
                removed = true;
            }
        }
        if !removed {
            break;
        }
    }
    let records: Vec<Interaction> = raw
        .records
        .iter()
        .zip(&alive)
        .filter(|(_, a)| **a)
        .map(|(r, _)| r.clone())
        .collect();
    if records.is_empty() {
        return Err(Error::EmptyAfterFilter { k });
    }
    Ok(RawInteractions { records })
}

/// Which held-out partition to read.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum Split {
    #[cfg_attr(feature = "serde", serde(rename = "val"))]
    Validation,
    Test,
}

/// Dense-indexed interactions with train/validation/test partitions.
///
/// Users and items are indexed in lexicographic id order.
#[derive(Debug, Clone, PartialEq)]
pub struct InteractionDataset {
    pub user_ids: Vec<String>,
    pub item_ids: Vec<String>,
    pub user_index: BTreeMap<String, usize>,
    pub item_index: BTreeMap<String, usize>,
    pub train: Vec<(usize, usize)>,
    pub val: Vec<(usize, usize)>,
    pub test: Vec<(usize, usize)>,
    pub k_core: usize,
    pub seed: u64,
    train_by_user: Vec<Vec<usize>>,
    val_by_user: Vec<Vec<usize>>,
    test_by_user: Vec<Vec<usize>>,
}

impl InteractionDataset {
    /// Assembles a dataset from explicit partitions and checks its invariants:
    /// indices in range, partitions disjoint, and every user has a training
    /// interaction.
    pub fn from_splits(
        user_ids: Vec<String>,
        item_ids: Vec<String>,
        train: Vec<(usize, usize)>,
        val: Vec<(usize, usize)>,
        test: Vec<(usize, usize)>,
        k_core: usize,
        seed: u64,
    ) -> Result<Self> {
        let n_users = user_ids.len();
        let n_items = item_ids.len();
        let user_index = index_of(&user_ids)?;
        let item_index = index_of(&item_ids)?;
        let mut seen = BTreeSet::new();
        for &(u, i) in train.iter().chain(&val).chain(&test) {
            if u >= n_users || i >= n_items {
                return Err(Error::InvalidInput(alloc::format!("pair ({u}, {i}) out of range")));
            }
            if !seen.insert((u, i)) {
                return Err(Error::InvalidInput(alloc::format!(
                    "pair ({}, {}) appears twice",
                    user_ids[u],
                    item_ids[i]
                )));
            }
        }
        let group = |pairs: &[(usize, usize)]| {
            let mut by_user = alloc::vec![Vec::new(); n_users];
            for &(u, i) in pairs {
                by_user[u].push(i);
            }
            by_user.iter_mut().for_each(|v: &mut Vec<usize>| v.sort_unstable());
            by_user
        };
        let train_by_user = group(&train);
        if let Some(u) = train_by_user.iter().position(Vec::is_empty) {
            return Err(Error::InvalidInput(alloc::format!(
                "user `{}` has no training interaction",
                user_ids[u]
            )));
        }
        let val_by_user = group(&val);
        let test_by_user = group(&test);
        Ok(Self {
            user_ids,
            item_ids,
            user_index,
            item_index,
            train,
            val,
            test,
            k_core,
            seed,
            train_by_user,
            val_by_user,
            test_by_user,
        })
    }

    pub fn num_users(&self) -> usize {
        self.user_ids.len()
    }

    pub fn num_items(&self) -> usize {
        self.item_ids.len()
    }

    pub fn num_interactions(&self) -> usize {
        self.train.len() + self.val.len() + self.test.len()
    }

    /// Sorted training items of `user`.
    pub fn train_items(&self, user: usize) -> &[usize] {
        &self.train_by_user[user]
    }

    pub fn is_train_positive(&self, user: usize, item: usize) -> bool {
        self.train_by_user[user].binary_search(&item).is_ok()
    }

    /// Sorted held-out items of `user` in `split`.
    pub fn split_items(&self, user: usize, split: Split) -> &[usize] {
        match split {
            Split::Validation => &self.val_by_user[user],
            Split::Test => &self.test_by_user[user],
        }
    }

    pub fn density(&self) -> f64 {
        density(self.num_users(), self.num_items(), self.num_interactions())
    }
}

fn index_of(ids: &[String]) -> Result<BTreeMap<String, usize>> {
    let mut map = BTreeMap::new();
    for (i, id) in ids.iter().enumerate() {
        if map.insert(id.clone(), i).is_some() {
            return Err(Error::InvalidInput(alloc::format!("duplicate id `{id}`")));
        }
    }
    Ok(map)
}

/// Held-out count for `n` interactions: `max(1, round(0.1·n))`, halves rounded up.
pub fn holdout_count(n: usize) -> usize {
    ((n + 5) / 10).max(1)
}

/// Per-user random 80-10-10 split. Each user contributes
/// [`holdout_count`] interactions to test and to validation; the remainder
/// is training data.
pub fn split_80_10_10(raw: &RawInteractions, k_core: usize, seed: u64) -> Result<InteractionDataset> {
    let user_ids: Vec<String> =
        raw.records.iter().map(|r| r.user.clone()).collect::<BTreeSet<_>>().into_iter().collect();
    let item_ids: Vec<String> =
        raw.records.iter().map(|r| r.item.clone()).collect::<BTreeSet<_>>().into_iter().collect();
    let user_index = index_of(&user_ids)?;
    let item_index = index_of(&item_ids)?;

    let mut per_user: Vec<Vec<usize>> = alloc::vec![Vec::new(); user_ids.len()];
    for r in &raw.records {
        per_user[user_index[&r.user]].push(item_index[&r.item]);
    }

    let mut rng = seeded_rng(seed, 0x7370_6c69);
    let (mut train, mut val, mut test) = (Vec::new(), Vec::new(), Vec::new());
    for (u, items) in per_user.iter_mut().enumerate() {
        let n = items.len();
        if n < 3 {
            return Err(Error::InvalidInput(alloc::format!(
                "user `{}` has {n} interactions; the split needs at least 3",
                user_ids[u]
            )));
        }
        items.sort_unstable();
        items.shuffle(&mut rng);
        let held = holdout_count(n);
        test.extend(items[..held].iter().map(|&i| (u, i)));
        val.extend(items[held..2 * held].iter().map(|&i| (u, i)));
        train.extend(items[2 * held..].iter().map(|&i| (u, i)));
    }
    InteractionDataset::from_splits(user_ids, item_ids, train, val, test, k_core, seed)
}

/// Per-item multi-modal fields plus the generation pipeline's outputs.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct ItemAttributeRecord {
    pub item_id: String,
    pub title: String,
    pub brand: String,
    pub category: String,
    #[cfg_attr(feature = "serde", serde(skip_serializing_if = "Option::is_none"))]
    pub image_ref: Option<String>,
    #[cfg_attr(feature = "serde", serde(skip_serializing_if = "Option::is_none"))]
    pub visual_description: Option<String>,
    #[cfg_attr(feature = "serde", serde(skip_serializing_if = "Option::is_none"))]
    pub masked_description: Option<String>,
    #[cfg_attr(feature = "serde", serde(skip_serializing_if = "Option::is_none"))]
    pub negative_description: Option<String>,
}

pub const MASK_TOKEN: &str = "[MASK]";

impl ItemAttributeRecord {
    pub fn new(item_id: impl Into<String>) -> Self {
        Self { item_id: item_id.into(), ..Self::default() }
    }

    /// Masked descriptions must contain a mask token; negatives must not.
    pub fn validate(&self) -> Result<()> {
        if self.item_id.is_empty() {
            return Err(Error::InvalidInput("attribute record without item_id".to_string()));
        }
        if let Some(m) = &self.masked_description {
            if !m.contains(MASK_TOKEN) {
                return Err(Error::InvalidInput(alloc::format!(
                    "masked_description of `{}` has no {MASK_TOKEN} token",
                    self.item_id
                )));
            }
        }
        if let Some(n) = &self.negative_description {
            if n.contains(MASK_TOKEN) {
                return Err(Error::InvalidInput(alloc::format!(
                    "negative_description of `{}` still contains {MASK_TOKEN}",
                    self.item_id
                )));
            }
        }
        Ok(())
    }
}
