//! LightGCN base recommender.
//!
//! Nodes are users `0..n_users` followed by items `n_users..n_users+n_items`.
//! One propagation layer is `E ← Â E` with `Â = D^{-1/2} A D^{-1/2}` over the
//! training bipartite graph; the output is the mean of layers `0..=L`.
//! Propagation is linear and `Â` is symmetric, so the backward pass of the
//! layer average is the layer average itself.

use alloc::string::ToString;
use alloc::vec::Vec;

use rand::seq::SliceRandom;

use crate::data::{InteractionDataset, Split};
use crate::eval::{evaluate_scores, BaseScorer};
use crate::numerics::{adam_step, axpy, dot, neg_log_sigmoid, seeded_rng, sigmoid, xavier_init_with, AdamConfig, AdamState, Matrix};
use crate::sampling::uniform_negative;
use crate::train::{EarlyStopping, StopReason, TrainHooks};
use crate::{Error, Result};

/// Symmetric-normalized bipartite adjacency in CSR form.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedAdjacency {
    num_users: usize,
    num_items: usize,
    offsets: Vec<usize>,
    neighbors: Vec<usize>,
    coefficients: Vec<f64>,
}

impl NormalizedAdjacency {
    pub fn num_users(&self) -> usize {
        self.num_users
    }

    pub fn num_items(&self) -> usize {
        self.num_items
    }

    pub fn num_nodes(&self) -> usize {
        self.num_users + self.num_items
    }

    pub fn item_node(&self, item: usize) -> usize {
        self.num_users + item
    }

    pub fn degree(&self, node: usize) -> usize {
        self.offsets[node + 1] - self.offsets[node]
    }

    /// `(neighbor, coefficient)` pairs of `node`, neighbors ascending.
    pub fn neighbors(&self, node: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let range = self.offsets[node]..self.offsets[node + 1];
        self.neighbors[range.clone()].iter().copied().zip(self.coefficients[range].iter().copied())
    }

    pub fn coefficient(&self, j: usize, k: usize) -> Option<f64> {
        let range = self.offsets[j]..self.offsets[j + 1];
        self.neighbors[range.clone()].binary_search(&k).ok().map(|p| self.coefficients[range.start + p])
    }

    /// `Â X` for a `num_nodes × d` matrix.
    pub fn multiply(&self, x: &Matrix) -> Result<Matrix> {
        if x.rows() != self.num_nodes() {
            return Err(Error::InvalidArgument(alloc::format!(
                "propagation input has {} rows, graph has {} nodes",
                x.rows(),
                self.num_nodes()
            )));
        }
        let mut out = Matrix::zeros(x.rows(), x.cols());
        for node in 0..self.num_nodes() {
            let row = out.row_mut(node);
            for (k, c) in self.neighbors(node) {
                axpy(c, x.row(k), row);
            }
        }
        Ok(out)
    }

    pub fn to_dense(&self) -> Matrix {
        let n = self.num_nodes();
        let mut m = Matrix::zeros(n, n);
        for j in 0..n {
            for (k, c) in self.neighbors(j) {
                m.set(j, k, c);
            }
        }
        m
    }
}

/// Builds `Â` from the training split. Users without training edges are
/// rejected; items whose interactions all fell into validation or test keep
/// an empty neighbor list.
pub fn build_normalized_adjacency(ds: &InteractionDataset) -> Result<NormalizedAdjacency> {
    if ds.train.is_empty() {
        return Err(Error::InvalidInput("training split is empty".to_string()));
    }
    let num_users = ds.num_users();
    let num_items = ds.num_items();
    let n = num_users + num_items;
    let mut lists: Vec<Vec<usize>> = alloc::vec![Vec::new(); n];
    for &(u, i) in &ds.train {
        lists[u].push(num_users + i);
        lists[num_users + i].push(u);
    }
    if let Some(u) = lists[..num_users].iter().position(Vec::is_empty) {
        return Err(Error::InvalidInput(alloc::format!(
            "user `{}` is isolated in the training graph",
            ds.user_ids[u]
        )));
    }
    let degree: Vec<f64> = lists.iter().map(|l| l.len() as f64).collect();
    let mut offsets = Vec::with_capacity(n + 1);
    let mut neighbors = Vec::with_capacity(2 * ds.train.len());
    let mut coefficients = Vec::with_capacity(2 * ds.train.len());
    offsets.push(0);
    for (j, list) in lists.iter_mut().enumerate() {
        list.sort_unstable();
        for &k in list.iter() {
            neighbors.push(k);
            coefficients.push(1.0 / libm::sqrt(degree[j] * degree[k]));
        }
        offsets.push(neighbors.len());
    }
    Ok(NormalizedAdjacency { num_users, num_items, offsets, neighbors, coefficients })
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    pub users: Matrix,
    pub items: Matrix,
}

impl EmbeddingTable {
    pub fn new(users: Matrix, items: Matrix) -> Result<Self> {
        if users.cols() != items.cols() {
            return Err(Error::InvalidArgument("user and item dimensions differ".to_string()));
        }
        Ok(Self { users, items })
    }

    pub fn dim(&self) -> usize {
        self.users.cols()
    }

    /// Users stacked above items.
    pub fn stacked(&self) -> Matrix {
        let mut data = Vec::with_capacity((self.users.rows() + self.items.rows()) * self.dim());
        data.extend_from_slice(self.users.as_slice());
        data.extend_from_slice(self.items.as_slice());
        Matrix::from_vec(self.users.rows() + self.items.rows(), self.dim(), data)
            .expect("stacked shape")
    }

    pub fn from_stacked(stacked: Matrix, num_users: usize) -> Self {
        let d = stacked.cols();
        let mut data = stacked.into_vec();
        let items = data.split_off(num_users * d);
        let n_items = items.len() / d.max(1);
        Self {
            users: Matrix::from_vec(num_users, d, data).expect("user block"),
            items: Matrix::from_vec(n_items, d, items).expect("item block"),
        }
    }
}

fn layer_average(adj: &NormalizedAdjacency, x: Matrix, num_layers: usize) -> Result<Matrix> {
    let mut acc = x.clone();
    let mut layer = x;
    for _ in 0..num_layers {
        layer = adj.multiply(&layer)?;
        acc.add_scaled(1.0, &layer)?;
    }
    acc.scale(1.0 / (num_layers + 1) as f64);
    Ok(acc)
}

/// `(1/(L+1)) Σ_{l=0..L} Â^l E`.
pub fn propagate(adj: &NormalizedAdjacency, table: &EmbeddingTable, num_layers: usize) -> Result<EmbeddingTable> {
    if table.users.rows() != adj.num_users() || table.items.rows() != adj.num_items() {
        return Err(Error::InvalidArgument("embedding table does not match the graph".to_string()));
    }
    let out = layer_average(adj, table.stacked(), num_layers)?;
    Ok(EmbeddingTable::from_stacked(out, adj.num_users()))
}

/// Gradient w.r.t. layer-zero embeddings given the gradient w.r.t. the
/// propagated output (stacked users-then-items).
pub fn propagate_backward(adj: &NormalizedAdjacency, upstream: Matrix, num_layers: usize) -> Result<Matrix> {
    // Â is symmetric: the transpose of the layer average is the layer average.
    layer_average(adj, upstream, num_layers)
}

/// BPR loss `−ln σ(e_u·(e_i − e_neg))` and its gradients.
#[derive(Debug, Clone, PartialEq)]
pub struct BprOutput {
    pub loss: f64,
    pub grad_user: Vec<f64>,
    pub grad_pos: Vec<f64>,
    pub grad_neg: Vec<f64>,
}

pub fn bpr_base_loss(e_u: &[f64], e_i: &[f64], e_neg: &[f64]) -> Result<BprOutput> {
    if e_u.len() != e_i.len() || e_u.len() != e_neg.len() {
        return Err(Error::InvalidArgument("bpr_base_loss: dimension mismatch".to_string()));
    }
    let margin = dot(e_u, e_i) - dot(e_u, e_neg);
    let loss = neg_log_sigmoid(margin);
    // d loss / d margin = −σ(−margin)
    let coeff = -sigmoid(-margin);
    let grad_user = e_i.iter().zip(e_neg).map(|(p, n)| coeff * (p - n)).collect();
    let grad_pos = e_u.iter().map(|u| coeff * u).collect();
    let grad_neg = e_u.iter().map(|u| -coeff * u).collect();
    Ok(BprOutput { loss, grad_user, grad_pos, grad_neg })
}

#[derive(Debug, Clone, PartialEq)]
pub struct BaseModel {
    pub layer_zero: EmbeddingTable,
    pub num_layers: usize,
    averaged: EmbeddingTable,
}

impl BaseModel {
    pub fn new(adj: &NormalizedAdjacency, layer_zero: EmbeddingTable, num_layers: usize) -> Result<Self> {
        let averaged = propagate(adj, &layer_zero, num_layers)?;
        Ok(Self { layer_zero, num_layers, averaged })
    }

    pub fn init(adj: &NormalizedAdjacency, dim: usize, num_layers: usize, seed: u64) -> Result<Self> {
        let mut rng = seeded_rng(seed, 0x6261_7365);
        let users = xavier_init_with(adj.num_users(), dim, &mut rng)?;
        let items = xavier_init_with(adj.num_items(), dim, &mut rng)?;
        Self::new(adj, EmbeddingTable::new(users, items)?, num_layers)
    }

    pub fn set_layer_zero(&mut self, adj: &NormalizedAdjacency, layer_zero: EmbeddingTable) -> Result<()> {
        self.averaged = propagate(adj, &layer_zero, self.num_layers)?;
        self.layer_zero = layer_zero;
        Ok(())
    }

    /// Propagated embeddings.
    pub fn averaged(&self) -> &EmbeddingTable {
        &self.averaged
    }

    pub fn dim(&self) -> usize {
        self.layer_zero.dim()
    }

    pub fn user(&self, u: usize) -> &[f64] {
        self.averaged.users.row(u)
    }

    pub fn item(&self, i: usize) -> &[f64] {
        self.averaged.items.row(i)
    }

    pub fn score(&self, u: usize, i: usize) -> f64 {
        dot(self.user(u), self.item(i))
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct BaseConfig {
    pub dim: usize,
    pub num_layers: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub seed: u64,
    /// Cutoff of the validation recall used for early stopping.
    pub eval_k: usize,
}

impl Default for BaseConfig {
    fn default() -> Self {
        Self { dim: 64, num_layers: 2, lr: 1e-3, batch_size: 2048, max_epochs: 1000, patience: 20, seed: 0, eval_k: 20 }
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct BaseEpoch {
    pub epoch: usize,
    pub loss: f64,
    pub val_recall: f64,
    pub wall_time_secs: f64,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct BaseTrainRecord {
    pub epochs: Vec<BaseEpoch>,
    pub best_epoch: usize,
    pub best_val_recall: f64,
    pub stop_reason: StopReason,
}

/// Mean BPR loss over `batch` (with its negatives) and the gradient w.r.t.
/// the stacked layer-zero embeddings.
pub fn bpr_batch_loss(
    adj: &NormalizedAdjacency,
    layer_zero: &Matrix,
    num_layers: usize,
    batch: &[(usize, usize, usize)],
) -> Result<(f64, Matrix)> {
    let averaged = layer_average(adj, layer_zero.clone(), num_layers)?;
    let mut upstream = Matrix::zeros(layer_zero.rows(), layer_zero.cols());
    let scale = 1.0 / batch.len().max(1) as f64;
    let mut total = 0.0;
    for &(u, i, j) in batch {
        let (ni, nj) = (adj.item_node(i), adj.item_node(j));
        let out = bpr_base_loss(averaged.row(u), averaged.row(ni), averaged.row(nj))?;
        total += out.loss;
        axpy(scale, &out.grad_user, upstream.row_mut(u));
        axpy(scale, &out.grad_pos, upstream.row_mut(ni));
        axpy(scale, &out.grad_neg, upstream.row_mut(nj));
    }
    Ok((total * scale, propagate_backward(adj, upstream, num_layers)?))
}

/// Phase-one training: minibatch BPR with uniform negatives, early stopping
/// on validation recall. The returned model holds the best epoch's weights.
pub fn train_base(
    ds: &InteractionDataset,
    adj: &NormalizedAdjacency,
    config: &BaseConfig,
    hooks: &mut dyn TrainHooks,
) -> Result<(BaseModel, BaseTrainRecord)> {
    if config.batch_size == 0 || config.patience == 0 {
        return Err(Error::InvalidArgument("batch_size and patience must be positive".to_string()));
    }
    let mut model = BaseModel::init(adj, config.dim, config.num_layers, config.seed)?;
    let mut params = model.layer_zero.stacked();
    let mut adam = AdamState::for_param(&params, AdamConfig::with_lr(config.lr));
    let mut rng = seeded_rng(config.seed, 0x7472_6169);
    let mut pairs = ds.train.clone();
    let mut stopper = EarlyStopping::new(config.patience);
    let mut best_params = params.clone();
    let mut epochs = Vec::new();
    let mut stop_reason = StopReason::MaxEpochs;

    for epoch in 1..=config.max_epochs {
        pairs.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for chunk in pairs.chunks(config.batch_size) {
            let batch = chunk
                .iter()
                .map(|&(u, i)| Ok((u, i, uniform_negative(u, ds, &mut rng)?)))
                .collect::<Result<Vec<_>>>()?;
            let (loss, grad) = bpr_batch_loss(adj, &params, config.num_layers, &batch)?;
            if !loss.is_finite() {
                return Err(Error::Diverged { epoch, loss });
            }
            loss_sum += loss * chunk.len() as f64;
            adam_step(&mut params, &grad, &mut adam)?;
        }
        let epoch_loss = loss_sum / pairs.len() as f64;
        if !epoch_loss.is_finite() || !params.is_finite() {
            return Err(Error::Diverged { epoch, loss: epoch_loss });
        }
        model.set_layer_zero(adj, EmbeddingTable::from_stacked(params.clone(), ds.num_users()))?;
        let report = evaluate_scores(&BaseScorer(&model), ds, Split::Validation, &[config.eval_k])?;
        let val_recall = report.recall_at(config.eval_k).unwrap_or(0.0);
        epochs.push(BaseEpoch { epoch, loss: epoch_loss, val_recall, wall_time_secs: hooks.elapsed_secs() });
        let decision = stopper.observe(epoch, val_recall);
        if decision.improved {
            best_params.clone_from(&params);
        }
        if decision.stop {
            stop_reason = StopReason::EarlyStopped;
            break;
        }
    }
    model.set_layer_zero(adj, EmbeddingTable::from_stacked(best_params, ds.num_users()))?;
    let record = BaseTrainRecord {
        epochs,
        best_epoch: stopper.best_epoch(),
        best_val_recall: stopper.best_value(),
        stop_reason,
    };
    Ok((model, record))
}
