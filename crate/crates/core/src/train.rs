//! Phase-two optimization of the causal module under the joint objective
//! `L = L_rec + α L_align`, score fusion, and early stopping.

use alloc::collections::BTreeMap;
use alloc::string::ToString;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::causal::{causal_backward, causal_forward_traced, CausalParams, Pooling};
use crate::data::{InteractionDataset, Split};
use crate::encode::AttributeTable;
use crate::eval::evaluate_topk;
use crate::graph::{propagate_backward, BaseModel, EmbeddingTable, NormalizedAdjacency};
use crate::numerics::{adam_step, axpy, dot, seeded_rng, sigmoid, softplus, AdamConfig, AdamState, Matrix};
use crate::{Error, Result};

/// Callbacks invoked during training. All methods default to no-ops.
pub trait TrainHooks {
    /// Wall-clock seconds since training started; recorded per epoch.
    fn elapsed_secs(&mut self) -> f64 {
        0.0
    }

    /// Called after every causal-module epoch with the current parameters.
    fn on_causal_epoch(&mut self, _epoch: usize, _params: &CausalParams, _base: &BaseModel, _improved: bool) {}
}

#[derive(Debug, Clone, Copy, Default)]
pub struct NoHooks;

impl TrainHooks for NoHooks {}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum StopReason {
    EarlyStopped,
    MaxEpochs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Decision {
    pub improved: bool,
    pub stop: bool,
}

/// Stops once `patience` consecutive epochs fail to strictly improve on the
/// best value seen.
#[derive(Debug, Clone, PartialEq)]
pub struct EarlyStopping {
    patience: usize,
    best: Option<f64>,
    best_epoch: usize,
    bad: usize,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Self {
        Self { patience, best: None, best_epoch: 0, bad: 0 }
    }

    pub fn observe(&mut self, epoch: usize, value: f64) -> Decision {
        let improved = match self.best {
            None => !value.is_nan(),
            Some(b) => value > b,
        };
        if improved {
            self.best = Some(value);
            self.best_epoch = epoch;
            self.bad = 0;
        } else {
            self.bad += 1;
        }
        Decision { improved, stop: self.bad >= self.patience }
    }

    pub fn best_epoch(&self) -> usize {
        self.best_epoch
    }

    pub fn best_value(&self) -> f64 {
        self.best.unwrap_or(0.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum AlignVariant {
    /// `(e_c*·e_i − e_c·e_i)/τ`, unbounded below.
    #[default]
    Paper,
    /// `softplus((e_c*·e_i − e_c·e_i)/τ)`.
    Stabilized,
}

/// Where the negative attribute tokens of a training pair come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum NegativeSource {
    /// The item's own generated negative.
    #[default]
    Generated,
    /// Positive tokens of a uniformly drawn other item.
    Uniform,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct TrainConfig {
    pub lambda: f64,
    pub alpha: f64,
    pub tau: f64,
    pub lr: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    /// Projection hidden width; `None` uses the attribute dimension.
    pub hidden: Option<usize>,
    pub seed: u64,
    pub freeze_base: bool,
    pub align_variant: AlignVariant,
    pub negative_source: NegativeSource,
    pub pooling: Pooling,
    pub eval_k: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lambda: 0.5,
            alpha: 0.01,
            tau: 0.1,
            lr: 1e-3,
            batch_size: 2048,
            max_epochs: 1000,
            patience: 20,
            hidden: None,
            seed: 0,
            freeze_base: true,
            align_variant: AlignVariant::Paper,
            negative_source: NegativeSource::Generated,
            pooling: Pooling::Mean,
            eval_k: 20,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0) {
            return Err(Error::InvalidArgument(alloc::format!("tau must be positive, got {}", self.tau)));
        }
        if self.batch_size == 0 || self.patience == 0 || self.eval_k == 0 {
            return Err(Error::InvalidArgument("batch_size, patience and eval_k must be positive".to_string()));
        }
        if !self.lr.is_finite() || self.lr < 0.0 || !self.lambda.is_finite() || !self.alpha.is_finite() {
            return Err(Error::InvalidArgument("lr, lambda and alpha must be finite (lr non-negative)".to_string()));
        }
        Ok(())
    }
}

/// `e_u·e_i + λ (e_u·e_c)`.
pub fn fused_score(e_u: &[f64], e_i: &[f64], e_c: &[f64], lambda: f64) -> f64 {
    dot(e_u, e_i) + lambda * dot(e_u, e_c)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RecLoss {
    pub loss: f64,
    pub grad_user: Vec<f64>,
    pub grad_item: Vec<f64>,
    pub grad_effect: Vec<f64>,
    pub grad_effect_neg: Vec<f64>,
}

/// `−ln σ(λ e_u·e_c + e_u·e_i − e_u·e_c*)`.
pub fn rec_loss(e_u: &[f64], e_i: &[f64], e_c: &[f64], e_c_neg: &[f64], lambda: f64) -> Result<RecLoss> {
    let d = e_u.len();
    if e_i.len() != d || e_c.len() != d || e_c_neg.len() != d {
        return Err(Error::InvalidArgument("rec_loss: dimension mismatch".to_string()));
    }
    let margin = lambda * dot(e_u, e_c) + dot(e_u, e_i) - dot(e_u, e_c_neg);
    let loss = softplus(-margin);
    let dm = -sigmoid(-margin);
    let grad_user = (0..d).map(|k| dm * (lambda * e_c[k] + e_i[k] - e_c_neg[k])).collect();
    Ok(RecLoss {
        loss,
        grad_user,
        grad_item: e_u.iter().map(|u| dm * u).collect(),
        grad_effect: e_u.iter().map(|u| dm * lambda * u).collect(),
        grad_effect_neg: e_u.iter().map(|u| -dm * u).collect(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct AlignLoss {
    pub loss: f64,
    pub grad_effect: Vec<f64>,
    pub grad_effect_neg: Vec<f64>,
    pub grad_item: Vec<f64>,
}

pub fn align_loss(e_c: &[f64], e_c_neg: &[f64], e_i: &[f64], tau: f64, variant: AlignVariant) -> Result<AlignLoss> {
    if !(tau > 0.0) {
        return Err(Error::InvalidArgument(alloc::format!("tau must be positive, got {tau}")));
    }
    if e_c_neg.len() != e_c.len() || e_i.len() != e_c.len() {
        return Err(Error::InvalidArgument("align_loss: dimension mismatch".to_string()));
    }
    let z = (dot(e_c_neg, e_i) - dot(e_c, e_i)) / tau;
    let (loss, dz) = match variant {
        AlignVariant::Paper => (z, 1.0),
        AlignVariant::Stabilized => (softplus(z), sigmoid(z)),
    };
    let s = dz / tau;
    Ok(AlignLoss {
        loss,
        grad_effect: e_i.iter().map(|x| -s * x).collect(),
        grad_effect_neg: e_i.iter().map(|x| s * x).collect(),
        grad_item: e_c.iter().zip(e_c_neg).map(|(p, n)| s * (n - p)).collect(),
    })
}

/// One training example. `negative_item = None` uses the item's generated
/// negative tokens; `Some(j)` uses the positive tokens of item `j`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Example {
    pub user: usize,
    pub item: usize,
    pub negative_item: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossBreakdown {
    pub total: f64,
    pub rec: f64,
    pub align: f64,
    pub causal_grads: CausalParams,
    /// Gradients w.r.t. the propagated user and item embeddings.
    pub user_grads: Matrix,
    pub item_grads: Matrix,
}

/// Batch mean of `rec_loss + α align_loss` with every gradient. `users` and
/// `items` are the propagated base embeddings.
pub fn total_loss(
    batch: &[Example],
    users: &Matrix,
    items: &Matrix,
    attrs: &AttributeTable,
    params: &CausalParams,
    config: &TrainConfig,
) -> Result<LossBreakdown> {
    if batch.is_empty() {
        return Err(Error::InvalidArgument("total_loss: empty batch".to_string()));
    }
    // Attention and projection depend only on the token pair, so each
    // distinct pair in the batch is run forward and backward once.
    let mut slots: BTreeMap<(usize, Option<usize>), usize> = BTreeMap::new();
    let mut traces = Vec::new();
    for ex in batch {
        if slots.contains_key(&(ex.item, ex.negative_item)) {
            continue;
        }
        let pos = attrs.positive(ex.item)?;
        let neg = match ex.negative_item {
            None => attrs.negative(ex.item)?,
            Some(j) => attrs.positive(j)?,
        };
        slots.insert((ex.item, ex.negative_item), traces.len());
        traces.push(causal_forward_traced(pos, neg, params)?);
    }
    let d = params.out_dim();
    let mut d_effect = alloc::vec![alloc::vec![0.0; d]; traces.len()];
    let mut d_effect_neg = alloc::vec![alloc::vec![0.0; d]; traces.len()];
    let mut user_grads = Matrix::zeros(users.rows(), users.cols());
    let mut item_grads = Matrix::zeros(items.rows(), items.cols());
    let scale = 1.0 / batch.len() as f64;
    let (mut rec_sum, mut align_sum) = (0.0, 0.0);
    for ex in batch {
        let slot = slots[&(ex.item, ex.negative_item)];
        let emb = &traces[slot].embedding;
        let e_u = users.row(ex.user);
        let e_i = items.row(ex.item);
        let r = rec_loss(e_u, e_i, &emb.e_c, &emb.e_c_neg, config.lambda)?;
        let a = align_loss(&emb.e_c, &emb.e_c_neg, e_i, config.tau, config.align_variant)?;
        rec_sum += r.loss;
        align_sum += a.loss;
        let wa = scale * config.alpha;
        axpy(scale, &r.grad_effect, &mut d_effect[slot]);
        axpy(wa, &a.grad_effect, &mut d_effect[slot]);
        axpy(scale, &r.grad_effect_neg, &mut d_effect_neg[slot]);
        axpy(wa, &a.grad_effect_neg, &mut d_effect_neg[slot]);
        axpy(scale, &r.grad_user, user_grads.row_mut(ex.user));
        axpy(scale, &r.grad_item, item_grads.row_mut(ex.item));
        axpy(wa, &a.grad_item, item_grads.row_mut(ex.item));
    }
    let mut causal_grads = params.zeros_like();
    for (&(item, negative_item), &slot) in &slots {
        let pos = attrs.positive(item)?;
        let neg = match negative_item {
            None => attrs.negative(item)?,
            Some(j) => attrs.positive(j)?,
        };
        causal_backward(pos, neg, params, &traces[slot], &d_effect[slot], &d_effect_neg[slot], &mut causal_grads)?;
    }
    let rec = rec_sum * scale;
    let align = align_sum * scale;
    Ok(LossBreakdown { total: rec + config.alpha * align, rec, align, causal_grads, user_grads, item_grads })
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CausalEpoch {
    pub epoch: usize,
    pub rec_loss: f64,
    pub align_loss: f64,
    pub val_recall: f64,
    pub wall_time_secs: f64,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TrainRecord {
    pub epochs: Vec<CausalEpoch>,
    pub best_epoch: usize,
    pub best_val_recall: f64,
    pub stop_reason: StopReason,
}

fn draw_examples<R: Rng + ?Sized>(
    chunk: &[(usize, usize)],
    source: NegativeSource,
    num_items: usize,
    rng: &mut R,
) -> Result<Vec<Example>> {
    chunk
        .iter()
        .map(|&(user, item)| {
            let negative_item = match source {
                NegativeSource::Generated => None,
                NegativeSource::Uniform => {
                    if num_items < 2 {
                        return Err(Error::NoEligibleNegative { user });
                    }
                    let mut j = rng.gen_range(0..num_items - 1);
                    if j >= item {
                        j += 1;
                    }
                    Some(j)
                }
            };
            Ok(Example { user, item, negative_item })
        })
        .collect()
}

/// Trains the causal module on top of a trained base model. With
/// `freeze_base` the base model is left untouched; otherwise its layer-zero
/// embeddings are updated through propagation. Returns the parameters of the
/// best validation epoch.
pub fn train_neggen(
    ds: &InteractionDataset,
    base: &mut BaseModel,
    adj: &NormalizedAdjacency,
    attrs: &AttributeTable,
    config: &TrainConfig,
    hooks: &mut dyn TrainHooks,
) -> Result<(CausalParams, TrainRecord)> {
    config.validate()?;
    if attrs.len() != ds.num_items() {
        return Err(Error::InvalidInput("attribute table does not cover the item catalog".to_string()));
    }
    for item in 0..ds.num_items() {
        attrs.positive(item)?;
    }
    let d_enc = attrs.dim();
    let mut params = CausalParams::init(d_enc, config.hidden.unwrap_or(d_enc), base.dim(), config.seed)?;
    params.pooling = config.pooling;
    let adam_config = AdamConfig::with_lr(config.lr);
    let mut adam: Vec<AdamState> = params.matrices().iter().map(|m| AdamState::for_param(m, adam_config)).collect();
    let mut base_params = base.layer_zero.stacked();
    let mut base_adam = AdamState::for_param(&base_params, adam_config);
    let mut rng = seeded_rng(config.seed, 0x6e65_6767);
    let mut pairs = ds.train.clone();
    let mut stopper = EarlyStopping::new(config.patience);
    let mut best = (params.clone(), base.clone());
    let mut epochs = Vec::new();
    let mut stop_reason = StopReason::MaxEpochs;

    for epoch in 1..=config.max_epochs {
        pairs.shuffle(&mut rng);
        let (mut rec_sum, mut align_sum) = (0.0, 0.0);
        for chunk in pairs.chunks(config.batch_size) {
            let batch = draw_examples(chunk, config.negative_source, ds.num_items(), &mut rng)?;
            let averaged = base.averaged();
            let out = total_loss(&batch, &averaged.users, &averaged.items, attrs, &params, config)?;
            if !out.total.is_finite() {
                return Err(Error::Diverged { epoch, loss: out.total });
            }
            rec_sum += out.rec * chunk.len() as f64;
            align_sum += out.align * chunk.len() as f64;
            for ((p, g), state) in params.matrices_mut().into_iter().zip(out.causal_grads.matrices()).zip(&mut adam) {
                adam_step(p, g, state)?;
            }
            if !config.freeze_base {
                let upstream = EmbeddingTable::new(out.user_grads, out.item_grads)?.stacked();
                let grad = propagate_backward(adj, upstream, base.num_layers)?;
                adam_step(&mut base_params, &grad, &mut base_adam)?;
                base.set_layer_zero(adj, EmbeddingTable::from_stacked(base_params.clone(), ds.num_users()))?;
            }
        }
        let n = pairs.len() as f64;
        let (rec_loss, align_loss) = (rec_sum / n, align_sum / n);
        if !rec_loss.is_finite() || !align_loss.is_finite() {
            return Err(Error::Diverged { epoch, loss: rec_loss + config.alpha * align_loss });
        }
        let report = evaluate_topk(base, Some((&params, attrs)), ds, Split::Validation, &[config.eval_k], config.lambda)?;
        let val_recall = report.recall_at(config.eval_k).unwrap_or(0.0);
        epochs.push(CausalEpoch { epoch, rec_loss, align_loss, val_recall, wall_time_secs: hooks.elapsed_secs() });
        let decision = stopper.observe(epoch, val_recall);
        if decision.improved {
            best = (params.clone(), base.clone());
        }
        hooks.on_causal_epoch(epoch, &params, base, decision.improved);
        if decision.stop {
            stop_reason = StopReason::EarlyStopped;
            break;
        }
    }
    let (best_params, best_base) = best;
    *base = best_base;
    let record = TrainRecord {
        epochs,
        best_epoch: stopper.best_epoch(),
        best_val_recall: stopper.best_value(),
        stop_reason,
    };
    Ok((best_params, record))
}
