//! Seeded synthetic datasets for tests and desk-scale runs.
//!
//! * [`block_dataset`]: users and items split into preference blocks;
//!   users mostly interact inside their own block.
//! * [`attribute_dataset`]: item metadata built from small word lists,
//!   with user preferences drawn from a planted low-rank linear model over
//!   the stub-encoded field vectors of each item.

use alloc::string::{String, ToString};
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::data::{split_80_10_10, Interaction, InteractionDataset, ItemAttributeRecord, RawInteractions};
use crate::encode::StubEncoder;
use crate::numerics::{dot, seeded_rng, SeededRng};
use crate::stub::{Lexicon, SwapTable};
use crate::{Error, Result};

pub fn user_id(u: usize) -> String {
    alloc::format!("user{u:04}")
}

pub fn item_id(i: usize) -> String {
    alloc::format!("item{i:04}")
}

fn interaction(u: usize, i: usize, t: i64) -> Interaction {
    Interaction { user: user_id(u), item: item_id(i), timestamp: Some(t) }
}

/// `users` and `items` are divided into `blocks` contiguous groups. Each user
/// draws 8 to 11 items from its own block (with a skewed popularity) and one
/// from elsewhere.
pub fn block_dataset(users: usize, items: usize, blocks: usize, seed: u64) -> Result<InteractionDataset> {
    if blocks == 0 || users < blocks || items < blocks * 12 {
        return Err(Error::InvalidArgument("block dataset needs at least 12 items per block".to_string()));
    }
    let mut rng = seeded_rng(seed, 0x626c_6f63);
    let per_block = items / blocks;
    let mut records = Vec::new();
    let mut t = 0i64;
    for u in 0..users {
        let b = u * blocks / users;
        let block_items: Vec<usize> = (b * per_block..(b + 1) * per_block).collect();
        let weights: Vec<f64> = (0..block_items.len()).map(|r| 1.0 / (r as f64 + 4.0)).collect();
        let n = rng.gen_range(8..12);
        let mut chosen: Vec<usize> = Vec::new();
        while chosen.len() < n {
            let pick = weighted_index(&weights, &mut rng);
            if !chosen.contains(&block_items[pick]) {
                chosen.push(block_items[pick]);
            }
        }
        loop {
            let other = rng.gen_range(0..items);
            if other / per_block != b {
                chosen.push(other);
                break;
            }
        }
        for i in chosen {
            t += 1;
            records.push(interaction(u, i, t));
        }
    }
    split_80_10_10(&RawInteractions::from_records(records)?, 1, seed)
}

fn weighted_index(weights: &[f64], rng: &mut SeededRng) -> usize {
    let total: f64 = weights.iter().sum();
    let mut x = rng.gen_range(0.0..total);
    for (k, w) in weights.iter().enumerate() {
        if x < *w {
            return k;
        }
        x -= w;
    }
    weights.len() - 1
}

pub const COLORS: [&str; 8] = ["red", "blue", "green", "yellow", "black", "white", "pink", "grey"];
pub const MATERIALS: [&str; 8] = ["cotton", "wool", "silk", "leather", "plastic", "bamboo", "steel", "linen"];
pub const NOUNS: [&str; 10] = ["blanket", "towel", "bottle", "bib", "stroller", "rattle", "pillow", "sock", "hat", "mat"];
pub const BRANDS: [&str; 6] = ["Acme", "Nimbus", "Orchard", "Pebble", "Quill", "Tundra"];
pub const CATEGORIES: [&str; 4] = ["Baby", "Bedding", "Feeding", "Toys"];

#[derive(Debug, Clone, PartialEq)]
pub struct AttributeDatasetConfig {
    pub users: usize,
    pub items: usize,
    /// Inclusive range of interactions per user.
    pub min_per_user: usize,
    pub max_per_user: usize,
    /// Rank of the planted preference model.
    pub rank: usize,
    /// Dimension of the field vectors the preferences are defined over.
    pub field_dim: usize,
    /// Weight of each field (appearance, title, brand, category) in the score.
    pub field_weights: [f64; 4],
    /// Scale of the Gumbel noise added before each user's top-n choice.
    pub noise: f64,
    pub seed: u64,
}

impl Default for AttributeDatasetConfig {
    fn default() -> Self {
        Self {
            users: 300,
            items: 150,
            min_per_user: 5,
            max_per_user: 8,
            rank: 4,
            field_dim: 64,
            field_weights: [1.0, 0.5, 0.25, 0.25],
            noise: 0.5,
            seed: 1,
        }
    }
}

/// A synthetic catalog with interactions and everything the stub
/// generation chain needs.
#[derive(Debug, Clone)]
pub struct SyntheticCorpus {
    pub raw: RawInteractions,
    pub dataset: InteractionDataset,
    /// Metadata only; descriptions are left for the generation chain.
    pub records: Vec<ItemAttributeRecord>,
    pub lexicon: Lexicon,
    pub swaps: SwapTable,
    pub vocabulary: Vec<String>,
}

/// Key words are the colors and materials; completion swaps each for the
/// next word in its list.
pub fn key_terms() -> (Lexicon, SwapTable, Vec<String>) {
    let lexicon = Lexicon::new(COLORS.iter().chain(MATERIALS.iter()).copied());
    let cycle = |list: &[&'static str]| -> Vec<(&'static str, &'static str)> {
        (0..list.len()).map(|k| (list[k], list[(k + 1) % list.len()])).collect()
    };
    let mut pairs = cycle(&COLORS);
    pairs.extend(cycle(&MATERIALS));
    let swaps = SwapTable::new(pairs);
    let vocabulary = COLORS.iter().chain(MATERIALS.iter()).map(|s| s.to_string()).collect();
    (lexicon, swaps, vocabulary)
}

fn gaussian(rng: &mut SeededRng) -> f64 {
    // Box-Muller
    let u1: f64 = rng.gen_range(f64::EPSILON..1.0);
    let u2: f64 = rng.gen();
    libm::sqrt(-2.0 * libm::log(u1)) * libm::cos(core::f64::consts::TAU * u2)
}

fn gumbel(rng: &mut SeededRng) -> f64 {
    let u: f64 = rng.gen_range(f64::EPSILON..1.0);
    -libm::log(-libm::log(u))
}

pub fn attribute_dataset(config: &AttributeDatasetConfig) -> Result<SyntheticCorpus> {
    if config.items < config.max_per_user + 1 || config.min_per_user < 3 || config.min_per_user > config.max_per_user {
        return Err(Error::InvalidArgument("inconsistent synthetic dataset sizes".to_string()));
    }
    let mut rng = seeded_rng(config.seed, 0x6174_7472);
    let encoder = StubEncoder::new(config.field_dim)?;

    let mut records = Vec::with_capacity(config.items);
    let mut fields: Vec<[Vec<f64>; 4]> = Vec::with_capacity(config.items);
    for i in 0..config.items {
        let color = COLORS[rng.gen_range(0..COLORS.len())];
        let material = MATERIALS[rng.gen_range(0..MATERIALS.len())];
        let noun = NOUNS[rng.gen_range(0..NOUNS.len())];
        let mut r = ItemAttributeRecord::new(item_id(i));
        r.title = alloc::format!("{color} {material} {noun}");
        r.brand = BRANDS[rng.gen_range(0..BRANDS.len())].to_string();
        r.category = CATEGORIES[rng.gen_range(0..CATEGORIES.len())].to_string();
        r.image_ref = Some(alloc::format!("images/{}.jpg", item_id(i)));
        fields.push([
            encoder.encode_text(&alloc::format!("{color} {material}")),
            encoder.encode_text(&r.title),
            encoder.encode_text(&r.brand),
            encoder.encode_text(&r.category),
        ]);
        records.push(r);
    }

    // w_u^(f) = Σ_r a_ur z_r^(f), z_r^(f) ~ N(0, I)
    let basis: Vec<[Vec<f64>; 4]> = (0..config.rank)
        .map(|_| core::array::from_fn(|_| (0..config.field_dim).map(|_| gaussian(&mut rng)).collect()))
        .collect();
    let noisy: Vec<Vec<f64>> = (0..config.users)
        .map(|_| {
            let a: Vec<f64> = (0..config.rank).map(|_| gaussian(&mut rng)).collect();
            fields
                .iter()
                .map(|x| {
                    let s: f64 = (0..4)
                        .map(|f| {
                            let w_dot: f64 = basis.iter().zip(&a).map(|(z, ar)| ar * dot(&z[f], &x[f])).sum();
                            config.field_weights[f] * w_dot
                        })
                        .sum();
                    s + config.noise * gumbel(&mut rng)
                })
                .collect()
        })
        .collect();
    let mut picks: Vec<Vec<usize>> = noisy
        .iter()
        .map(|row| {
            let mut order: Vec<usize> = (0..config.items).collect();
            order.sort_by(|&x, &y| row[y].total_cmp(&row[x]).then(x.cmp(&y)));
            let n = rng.gen_range(config.min_per_user..=config.max_per_user);
            order.truncate(n);
            order
        })
        .collect();
    // Items nobody picked go to the user who scores them highest.
    for i in 0..config.items {
        if picks.iter().all(|p| !p.contains(&i)) {
            let best = (0..config.users).max_by(|&x, &y| noisy[x][i].total_cmp(&noisy[y][i]).then(y.cmp(&x))).expect("users");
            picks[best].push(i);
        }
    }
    let mut records_out = Vec::new();
    let mut t = 0i64;
    for (u, mut items) in picks.into_iter().enumerate() {
        items.shuffle(&mut rng);
        for i in items {
            t += 1;
            records_out.push(interaction(u, i, t));
        }
    }
    let raw = RawInteractions::from_records(records_out)?;
    let dataset = split_80_10_10(&raw, 1, config.seed)?;
    let (lexicon, swaps, vocabulary) = key_terms();
    let corpus_docs: Vec<String> = records.iter().map(|r| r.title.clone()).collect();
    let lexicon = lexicon.with_corpus(corpus_docs.iter().map(String::as_str));
    Ok(SyntheticCorpus { raw, dataset, records, lexicon, swaps, vocabulary })
}
