//! Text formats: interaction TSV, attribute JSONL and the prepared dataset.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use contrastforge_core::data::{Interaction, InteractionDataset, ItemAttributeRecord, RawInteractions};
use serde::{Deserialize, Serialize};

use crate::fsutil::{atomic_write, read_to_string};
use crate::{Error, Result};

/// `user_id TAB item_id [TAB unix_seconds]`, one record per line. Blank
/// lines are ignored; duplicate pairs keep the earliest timestamp.
pub fn parse_interactions(text: &str, path: &Path) -> Result<RawInteractions> {
    let mut records = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        let err = |message: String| Error::Parse { path: path.to_path_buf(), line: n + 1, message };
        let fields: Vec<&str> = line.split('\t').collect();
        if !(2..=3).contains(&fields.len()) {
            return Err(err(format!("expected 2 or 3 tab-separated fields, found {}", fields.len())));
        }
        let (user, item) = (fields[0].trim(), fields[1].trim());
        if user.is_empty() || item.is_empty() {
            return Err(err("empty user or item id".to_string()));
        }
        let timestamp = match fields.get(2) {
            Some(t) => Some(t.trim().parse::<i64>().map_err(|e| err(format!("bad timestamp {t:?}: {e}")))?),
            None => None,
        };
        records.push(Interaction { user: user.to_string(), item: item.to_string(), timestamp });
    }
    if records.is_empty() {
        return Err(Error::Core(contrastforge_core::Error::InvalidInput(format!(
            "{} contains no interactions",
            path.display()
        ))));
    }
    Ok(RawInteractions::from_records(records)?)
}

pub fn load_interactions(path: &Path) -> Result<RawInteractions> {
    parse_interactions(&read_to_string(path)?, path)
}

pub fn write_interactions(raw: &RawInteractions, path: &Path) -> Result<()> {
    let mut out = String::new();
    for r in &raw.records {
        match r.timestamp {
            Some(t) => writeln!(out, "{}\t{}\t{t}", r.user, r.item),
            None => writeln!(out, "{}\t{}", r.user, r.item),
        }
        .expect("writing to a String");
    }
    atomic_write(path, out.as_bytes())
}

/// One JSON object per line. Unknown fields are ignored.
pub fn parse_attributes(text: &str, path: &Path) -> Result<BTreeMap<String, ItemAttributeRecord>> {
    let mut out = BTreeMap::new();
    for (n, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let err = |message: String| Error::Parse { path: path.to_path_buf(), line: n + 1, message };
        let record: ItemAttributeRecord = serde_json::from_str(line).map_err(|e| err(e.to_string()))?;
        record.validate().map_err(|e| err(e.to_string()))?;
        if out.contains_key(&record.item_id) {
            return Err(err(format!("duplicate item_id `{}`", record.item_id)));
        }
        out.insert(record.item_id.clone(), record);
    }
    Ok(out)
}

pub fn load_attributes(path: &Path) -> Result<BTreeMap<String, ItemAttributeRecord>> {
    parse_attributes(&read_to_string(path)?, path)
}

pub fn attributes_to_jsonl<'a>(records: impl IntoIterator<Item = &'a ItemAttributeRecord>) -> String {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r).expect("attribute records serialize"));
        out.push('\n');
    }
    out
}

pub fn write_attributes<'a>(records: impl IntoIterator<Item = &'a ItemAttributeRecord>, path: &Path) -> Result<()> {
    atomic_write(path, attributes_to_jsonl(records).as_bytes())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSummary {
    pub users: usize,
    pub items: usize,
    pub interactions: usize,
    pub density: f64,
    pub train: usize,
    pub val: usize,
    pub test: usize,
    pub k_core: usize,
    pub seed: u64,
}

impl DatasetSummary {
    pub fn of(ds: &InteractionDataset) -> Self {
        Self {
            users: ds.num_users(),
            items: ds.num_items(),
            interactions: ds.num_interactions(),
            density: ds.density(),
            train: ds.train.len(),
            val: ds.val.len(),
            test: ds.test.len(),
            k_core: ds.k_core,
            seed: ds.seed,
        }
    }
}

const SPLIT_FILES: [&str; 3] = ["train.tsv", "val.tsv", "test.tsv"];

/// Writes `train.tsv`, `val.tsv`, `test.tsv` (id pairs) and `dataset.json`.
/// Returns the written paths.
pub fn write_dataset(ds: &InteractionDataset, dir: &Path) -> Result<Vec<std::path::PathBuf>> {
    let mut paths = Vec::new();
    for (name, pairs) in SPLIT_FILES.iter().zip([&ds.train, &ds.val, &ds.test]) {
        let mut sorted: Vec<(&str, &str)> =
            pairs.iter().map(|&(u, i)| (ds.user_ids[u].as_str(), ds.item_ids[i].as_str())).collect();
        sorted.sort_unstable();
        let mut out = String::new();
        for (u, i) in sorted {
            writeln!(out, "{u}\t{i}").expect("writing to a String");
        }
        let path = dir.join(name);
        atomic_write(&path, out.as_bytes())?;
        paths.push(path);
    }
    let path = dir.join("dataset.json");
    let summary = serde_json::to_string_pretty(&DatasetSummary::of(ds)).expect("summary serializes");
    atomic_write(&path, (summary + "\n").as_bytes())?;
    paths.push(path);
    Ok(paths)
}

pub fn read_dataset(dir: &Path) -> Result<InteractionDataset> {
    let summary_path = dir.join("dataset.json");
    let summary: DatasetSummary = serde_json::from_str(&read_to_string(&summary_path)?)
        .map_err(|e| Error::format(&summary_path, e.to_string()))?;
    let mut parts: Vec<Vec<(String, String)>> = Vec::new();
    for name in SPLIT_FILES {
        let path = dir.join(name);
        let raw = parse_interactions(&read_to_string(&path)?, &path)?;
        parts.push(raw.records.into_iter().map(|r| (r.user, r.item)).collect());
    }
    let mut user_ids: Vec<String> = parts.iter().flatten().map(|(u, _)| u.clone()).collect();
    let mut item_ids: Vec<String> = parts.iter().flatten().map(|(_, i)| i.clone()).collect();
    user_ids.sort_unstable();
    user_ids.dedup();
    item_ids.sort_unstable();
    item_ids.dedup();
    let uix: BTreeMap<&str, usize> = user_ids.iter().enumerate().map(|(k, s)| (s.as_str(), k)).collect();
    let iix: BTreeMap<&str, usize> = item_ids.iter().enumerate().map(|(k, s)| (s.as_str(), k)).collect();
    let index = |pairs: &[(String, String)]| -> Vec<(usize, usize)> {
        pairs.iter().map(|(u, i)| (uix[u.as_str()], iix[i.as_str()])).collect()
    };
    let (train, val, test) = (index(&parts[0]), index(&parts[1]), index(&parts[2]));
    let ds = InteractionDataset::from_splits(
        user_ids.clone(),
        item_ids.clone(),
        train,
        val,
        test,
        summary.k_core,
        summary.seed,
    )?;
    if ds.num_users() != summary.users || ds.num_items() != summary.items {
        return Err(Error::format(summary_path, "split files disagree with dataset.json counts"));
    }
    Ok(ds)
}
