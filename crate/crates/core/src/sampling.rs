//! Baseline negative samplers and the BPR gradient diagnostics.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::ToString;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use rand::Rng;

use crate::data::InteractionDataset;
use crate::graph::BaseModel;
use crate::numerics::{dot, l2_norm, sigmoid};
use crate::{Error, Result};

/// Draws an item uniformly from those `user` has not interacted with in
/// training. Held-out positives stay eligible.
pub fn uniform_negative<R: Rng + ?Sized>(user: usize, ds: &InteractionDataset, rng: &mut R) -> Result<usize> {
    let n_items = ds.num_items();
    let positives = ds.train_items(user);
    let eligible = n_items - positives.len();
    if eligible == 0 {
        return Err(Error::NoEligibleNegative { user });
    }
    if positives.len() * 2 <= n_items {
        loop {
            let candidate = rng.gen_range(0..n_items);
            if positives.binary_search(&candidate).is_err() {
                return Ok(candidate);
            }
        }
    }
    // Dense users: index into the complement directly.
    let mut rank = rng.gen_range(0..eligible);
    for item in 0..n_items {
        if positives.binary_search(&item).is_err() {
            if rank == 0 {
                return Ok(item);
            }
            rank -= 1;
        }
    }
    unreachable!("eligible count was positive")
}

/// Dynamic negative sampling: draws `candidates` distinct eligible items
/// and keeps the one the model scores highest. With `candidates == 1` the
/// draw sequence is exactly that of [`uniform_negative`]; when it covers
/// every eligible item the result is the eligible argmax.
pub fn dns_negative<R: Rng + ?Sized>(
    user: usize,
    candidates: usize,
    model: &BaseModel,
    ds: &InteractionDataset,
    rng: &mut R,
) -> Result<usize> {
    if candidates == 0 {
        return Err(Error::InvalidArgument("dns_negative needs at least one candidate".to_string()));
    }
    let positives = ds.train_items(user);
    let eligible = ds.num_items() - positives.len();
    if eligible == 0 {
        return Err(Error::NoEligibleNegative { user });
    }
    let pool: Vec<usize> = if candidates >= eligible {
        (0..ds.num_items()).filter(|i| positives.binary_search(i).is_err()).collect()
    } else {
        let mut seen = BTreeSet::new();
        let mut pool = Vec::with_capacity(candidates);
        while pool.len() < candidates {
            let item = uniform_negative(user, ds, rng)?;
            if seen.insert(item) {
                pool.push(item);
            }
        }
        pool
    };
    let mut best = pool[0];
    let mut best_score = model.score(user, best);
    for &item in &pool[1..] {
        let s = model.score(user, item);
        if s > best_score {
            best = item;
            best_score = s;
        }
    }
    Ok(best)
}

/// `‖∂L_BPR/∂e_neg‖ = ‖e_u‖ · (1 − σ(e_u·(e_i − e_neg)))`.
pub fn gradient_magnitude(e_u: &[f64], e_i: &[f64], e_neg: &[f64]) -> f64 {
    let margin = dot(e_u, e_i) - dot(e_u, e_neg);
    l2_norm(e_u) * sigmoid(-margin)
}

/// NDCG lower bound `(1/|P|) Σ 1/(1 + exp(e_u·e_neg − e_u·e_i))` over
/// `(e_i, e_neg)` pairs.
pub fn ndcg_lower_bound(e_u: &[f64], pairs: &[(&[f64], &[f64])]) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::InvalidArgument("ndcg_lower_bound needs at least one pair".to_string()));
    }
    let total: f64 = pairs.iter().map(|(pos, neg)| sigmoid(dot(e_u, pos) - dot(e_u, neg))).sum();
    Ok(total / pairs.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum Modality {
    Visual,
    Textual,
    Fused,
}

impl Modality {
    pub const ALL: [Modality; 3] = [Modality::Visual, Modality::Textual, Modality::Fused];

    pub fn as_str(self) -> &'static str {
        match self {
            Modality::Visual => "visual",
            Modality::Textual => "textual",
            Modality::Fused => "fused",
        }
    }
}

impl fmt::Display for Modality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Modality {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "visual" => Ok(Modality::Visual),
            "textual" => Ok(Modality::Textual),
            "fused" => Ok(Modality::Fused),
            other => Err(Error::InvalidInput(alloc::format!("unknown modality `{other}`"))),
        }
    }
}

/// Mean negative-sample gradient magnitude per (epoch, modality).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct DiagnosticsTrace {
    values: BTreeMap<(usize, Modality), f64>,
}

impl DiagnosticsTrace {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, epoch: usize, modality: Modality, value: f64) -> Result<()> {
        if !(value >= 0.0) || !value.is_finite() {
            return Err(Error::InvalidInput(alloc::format!("gradient magnitude {value} is not a finite non-negative value")));
        }
        self.values.insert((epoch, modality), value);
        Ok(())
    }

    pub fn get(&self, epoch: usize, modality: Modality) -> Option<f64> {
        self.values.get(&(epoch, modality)).copied()
    }

    /// Entries ordered by epoch, then modality.
    pub fn iter(&self) -> impl Iterator<Item = (usize, Modality, f64)> + '_ {
        self.values.iter().map(|(&(e, m), &v)| (e, m, v))
    }

    pub fn epochs(&self) -> Vec<usize> {
        let set: BTreeSet<usize> = self.values.keys().map(|(e, _)| *e).collect();
        set.into_iter().collect()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}
