//! Full-catalog top-K evaluation and modality gradient diagnostics.
//!
//! Every item except the user's training positives is a candidate. Ranking
//! is by descending score with ties broken by the lower item index.

use alloc::string::ToString;
use alloc::vec::Vec;
use core::cmp::Ordering;

use crate::causal::{item_effect, project, CausalParams};
use crate::data::{InteractionDataset, Split};
use crate::encode::AttributeTable;
use crate::graph::BaseModel;
use crate::numerics::{dot, Matrix};
use crate::sampling::{gradient_magnitude, DiagnosticsTrace, Modality};
use crate::{Error, Result};

fn check_k(k: usize, relevant: &[usize]) -> Result<()> {
    if k == 0 {
        return Err(Error::InvalidArgument("K must be at least 1".to_string()));
    }
    if relevant.is_empty() {
        return Err(Error::NoRelevantItems);
    }
    Ok(())
}

/// `|top-K ∩ relevant| / |relevant|`.
pub fn recall_at_k(ranked: &[usize], relevant: &[usize], k: usize) -> Result<f64> {
    check_k(k, relevant)?;
    let hits = ranked.iter().take(k).filter(|i| relevant.contains(i)).count();
    Ok(hits as f64 / relevant.len() as f64)
}

/// Binary-gain NDCG with `log2` discount and 1-indexed positions.
pub fn ndcg_at_k(ranked: &[usize], relevant: &[usize], k: usize) -> Result<f64> {
    check_k(k, relevant)?;
    let discount = |p: usize| 1.0 / libm::log2(p as f64 + 1.0);
    let dcg: f64 = ranked
        .iter()
        .take(k)
        .enumerate()
        .filter(|(_, i)| relevant.contains(i))
        .map(|(p, _)| discount(p + 1))
        .sum();
    let idcg: f64 = (1..=k.min(relevant.len())).map(discount).sum();
    Ok(dcg / idcg)
}

/// Scores every item for one user.
pub trait Scorer {
    fn num_items(&self) -> usize;
    fn score_user(&self, user: usize, out: &mut [f64]);
}

pub struct BaseScorer<'a>(pub &'a BaseModel);

impl Scorer for BaseScorer<'_> {
    fn num_items(&self) -> usize {
        self.0.averaged().items.rows()
    }

    fn score_user(&self, user: usize, out: &mut [f64]) {
        let e_u = self.0.user(user);
        for (i, s) in out.iter_mut().enumerate() {
            *s = dot(e_u, self.0.item(i));
        }
    }
}

/// `e_u·e_i + λ e_u·e_c` with each item's `e_c` computed from its positive
/// attribute tokens.
pub struct FusedScorer<'a> {
    base: &'a BaseModel,
    effects: Matrix,
    lambda: f64,
}

impl<'a> FusedScorer<'a> {
    pub fn new(base: &'a BaseModel, params: &CausalParams, attrs: &AttributeTable, lambda: f64) -> Result<Self> {
        let n = base.averaged().items.rows();
        if attrs.len() != n {
            return Err(Error::InvalidInput("attribute table does not cover the item catalog".to_string()));
        }
        let mut effects = Matrix::zeros(n, params.out_dim());
        for i in 0..n {
            let e = item_effect(attrs.positive(i)?, params)?;
            effects.row_mut(i).copy_from_slice(&e);
        }
        Ok(Self { base, effects, lambda })
    }

    pub fn effects(&self) -> &Matrix {
        &self.effects
    }
}

impl Scorer for FusedScorer<'_> {
    fn num_items(&self) -> usize {
        self.effects.rows()
    }

    fn score_user(&self, user: usize, out: &mut [f64]) {
        let e_u = self.base.user(user);
        for (i, s) in out.iter_mut().enumerate() {
            *s = dot(e_u, self.base.item(i)) + self.lambda * dot(e_u, self.effects.row(i));
        }
    }
}

fn by_score(scores: &[f64]) -> impl Fn(&usize, &usize) -> Ordering + '_ {
    move |a, b| scores[*b].partial_cmp(&scores[*a]).unwrap_or(Ordering::Equal).then(a.cmp(b))
}

/// The user's top-`k` candidate items (training positives excluded).
pub fn rank_items(scorer: &dyn Scorer, ds: &InteractionDataset, user: usize, k: usize) -> Result<Vec<usize>> {
    let mut scores = alloc::vec![0.0; scorer.num_items()];
    scorer.score_user(user, &mut scores);
    top_k(&scores, ds.train_items(user), k)
}

fn top_k(scores: &[f64], exclude: &[usize], k: usize) -> Result<Vec<usize>> {
    if let Some(i) = scores.iter().position(|s| !s.is_finite()) {
        return Err(Error::NumericalFailure(alloc::format!("score of item {i} is not finite")));
    }
    let mut candidates: Vec<usize> = (0..scores.len()).filter(|i| exclude.binary_search(i).is_err()).collect();
    let cmp = by_score(scores);
    if k < candidates.len() {
        candidates.select_nth_unstable_by(k, &cmp);
        candidates.truncate(k);
    }
    candidates.sort_unstable_by(&cmp);
    Ok(candidates)
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TopKMetrics {
    pub k: usize,
    pub recall: f64,
    pub ndcg: f64,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct MetricsReport {
    pub split: Split,
    pub metrics: Vec<TopKMetrics>,
    pub evaluated_users: usize,
    /// Users with no relevant item in the split.
    pub skipped_users: usize,
    /// Validation Recall per training epoch, when attached.
    #[cfg_attr(feature = "serde", serde(default))]
    pub validation_series: Vec<f64>,
    /// Epoch of the best validation Recall, when attached.
    #[cfg_attr(feature = "serde", serde(default))]
    pub convergence_epoch: Option<usize>,
}

impl MetricsReport {
    pub fn recall_at(&self, k: usize) -> Option<f64> {
        self.metrics.iter().find(|m| m.k == k).map(|m| m.recall)
    }

    pub fn ndcg_at(&self, k: usize) -> Option<f64> {
        self.metrics.iter().find(|m| m.k == k).map(|m| m.ndcg)
    }

    pub fn with_training(mut self, validation_series: Vec<f64>, convergence_epoch: usize) -> Self {
        self.validation_series = validation_series;
        self.convergence_epoch = Some(convergence_epoch);
        self
    }
}

/// Averages Recall@K and NDCG@K over users with at least one relevant item
/// in `split`.
pub fn evaluate_scores(scorer: &dyn Scorer, ds: &InteractionDataset, split: Split, ks: &[usize]) -> Result<MetricsReport> {
    if ks.is_empty() || ks.contains(&0) {
        return Err(Error::InvalidArgument("Ks must be non-empty and positive".to_string()));
    }
    let max_k = *ks.iter().max().expect("non-empty");
    let mut recall = alloc::vec![0.0; ks.len()];
    let mut ndcg = alloc::vec![0.0; ks.len()];
    let mut evaluated = 0usize;
    let mut skipped = 0usize;
    let mut scores = alloc::vec![0.0; scorer.num_items()];
    for user in 0..ds.num_users() {
        let relevant = ds.split_items(user, split);
        if relevant.is_empty() {
            skipped += 1;
            continue;
        }
        scorer.score_user(user, &mut scores);
        let ranked = top_k(&scores, ds.train_items(user), max_k)?;
        for (slot, &k) in ks.iter().enumerate() {
            recall[slot] += recall_at_k(&ranked, relevant, k)?;
            ndcg[slot] += ndcg_at_k(&ranked, relevant, k)?;
        }
        evaluated += 1;
    }
    let denom = evaluated.max(1) as f64;
    let metrics = ks
        .iter()
        .enumerate()
        .map(|(s, &k)| TopKMetrics { k, recall: recall[s] / denom, ndcg: ndcg[s] / denom })
        .collect();
    Ok(MetricsReport {
        split,
        metrics,
        evaluated_users: evaluated,
        skipped_users: skipped,
        validation_series: Vec::new(),
        convergence_epoch: None,
    })
}

/// Evaluates the fused model, or the base model alone when `causal` is
/// `None`.
pub fn evaluate_topk(
    base: &BaseModel,
    causal: Option<(&CausalParams, &AttributeTable)>,
    ds: &InteractionDataset,
    split: Split,
    ks: &[usize],
    lambda: f64,
) -> Result<MetricsReport> {
    match causal {
        None => evaluate_scores(&BaseScorer(base), ds, split, ks),
        Some((params, attrs)) => evaluate_scores(&FusedScorer::new(base, params, attrs, lambda)?, ds, split, ks),
    }
}

/// Per-item modality vectors in the recommender space: the visual field
/// token, the mean of the textual field tokens, and the attention-pooled
/// fusion, each passed through the causal projection.
#[derive(Debug, Clone, PartialEq)]
pub struct ModalityEmbeddings {
    pub visual: Matrix,
    pub textual: Matrix,
    pub fused: Matrix,
}

impl ModalityEmbeddings {
    pub fn compute(params: &CausalParams, attrs: &AttributeTable) -> Result<Self> {
        let n = attrs.len();
        let d = params.out_dim();
        let mut out = Self { visual: Matrix::zeros(n, d), textual: Matrix::zeros(n, d), fused: Matrix::zeros(n, d) };
        for i in 0..n {
            let tokens = attrs.positive(i)?;
            if tokens.rows() < 2 {
                return Err(Error::InvalidInput("modality split needs at least two field tokens".to_string()));
            }
            let textual_mean = Matrix::from_vec(tokens.rows() - 1, tokens.cols(), tokens.as_slice()[tokens.cols()..].to_vec())?
                .mean_row();
            out.visual.row_mut(i).copy_from_slice(&project(tokens.row(0), params)?);
            out.textual.row_mut(i).copy_from_slice(&project(&textual_mean, params)?);
            out.fused.row_mut(i).copy_from_slice(&item_effect(tokens, params)?);
        }
        Ok(out)
    }

    pub fn get(&self, modality: Modality) -> &Matrix {
        match modality {
            Modality::Visual => &self.visual,
            Modality::Textual => &self.textual,
            Modality::Fused => &self.fused,
        }
    }
}

/// User embeddings and item modality vectors at the end of one epoch.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochModalities {
    pub epoch: usize,
    pub users: Matrix,
    pub items: ModalityEmbeddings,
}

/// For every epoch and modality, the mean of
/// `gradient_magnitude(e_u, e_i^(m), e_neg^(m))` over `(user, item, negative)`
/// triples.
pub fn track_modality_gradients(epochs: &[EpochModalities], triples: &[(usize, usize, usize)]) -> Result<DiagnosticsTrace> {
    if triples.is_empty() {
        return Err(Error::InvalidArgument("no training triples to trace".to_string()));
    }
    let mut trace = DiagnosticsTrace::new();
    for snap in epochs {
        for modality in Modality::ALL {
            let items = snap.items.get(modality);
            let total: f64 = triples
                .iter()
                .map(|&(u, i, j)| gradient_magnitude(snap.users.row(u), items.row(i), items.row(j)))
                .sum();
            trace.insert(snap.epoch, modality, total / triples.len() as f64)?;
        }
    }
    Ok(trace)
}
