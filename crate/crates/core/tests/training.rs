mod common;

use common::stub_attributes;
use contrastforge_core::data::Split;
use contrastforge_core::eval::{evaluate_scores, BaseScorer, Scorer};
use contrastforge_core::graph::{build_normalized_adjacency, train_base, BaseConfig, BaseModel};
use contrastforge_core::numerics::seeded_rng;
use contrastforge_core::synthetic::{attribute_dataset, block_dataset, AttributeDatasetConfig, SyntheticCorpus};
use contrastforge_core::train::{total_loss, train_neggen, Example, NoHooks, TrainConfig};
use contrastforge_core::causal::CausalParams;
use rand::Rng;

struct Popularity(Vec<f64>);

impl Scorer for Popularity {
    fn num_items(&self) -> usize {
        self.0.len()
    }

    fn score_user(&self, _user: usize, out: &mut [f64]) {
        out.copy_from_slice(&self.0);
    }
}

#[test]
fn base_training_beats_popularity_on_block_data() {
    let ds = block_dataset(200, 100, 2, 13).unwrap();
    let adj = build_normalized_adjacency(&ds).unwrap();
    let config = BaseConfig { dim: 16, lr: 1e-2, batch_size: 256, max_epochs: 60, patience: 10, seed: 13, eval_k: 10, ..Default::default() };
    let (model, record) = train_base(&ds, &adj, &config, &mut NoHooks).unwrap();
    assert!(record.epochs.iter().all(|e| e.loss.is_finite()));
    assert!(record.epochs.last().unwrap().loss < record.epochs[0].loss);

    let mut counts = vec![0.0; ds.num_items()];
    for &(_, i) in &ds.train {
        counts[i] += 1.0;
    }
    let pop = evaluate_scores(&Popularity(counts), &ds, Split::Test, &[10]).unwrap();
    let ours = evaluate_scores(&BaseScorer(&model), &ds, Split::Test, &[10]).unwrap();
    assert!(
        ours.recall_at(10).unwrap() > pop.recall_at(10).unwrap(),
        "{:?} vs {:?}",
        ours.recall_at(10),
        pop.recall_at(10)
    );
}

fn small_setup(seed: u64) -> (SyntheticCorpus, BaseModel) {
    let corpus = attribute_dataset(&AttributeDatasetConfig { users: 60, items: 40, field_dim: 16, seed, ..Default::default() }).unwrap();
    let adj = build_normalized_adjacency(&corpus.dataset).unwrap();
    let base = BaseModel::init(&adj, 8, 2, seed).unwrap();
    (corpus, base)
}

fn quick_config() -> TrainConfig {
    TrainConfig { batch_size: 64, max_epochs: 4, patience: 10, hidden: Some(8), ..TrainConfig::default() }
}

#[test]
fn zero_learning_rate_leaves_params_unchanged() {
    let (corpus, mut base) = small_setup(3);
    let attrs = stub_attributes(&corpus, 16, 3);
    let adj = build_normalized_adjacency(&corpus.dataset).unwrap();
    let config = TrainConfig { lr: 0.0, ..quick_config() };
    let (params, record) = train_neggen(&corpus.dataset, &mut base, &adj, &attrs, &config, &mut NoHooks).unwrap();
    let init = CausalParams::init(attrs.dim(), 8, 8, config.seed).unwrap();
    assert_eq!(params, init);
    let first = record.epochs[0].val_recall;
    assert!(record.epochs.iter().all(|e| e.val_recall == first));
}

#[test]
fn frozen_base_is_bitwise_unchanged_and_unfrozen_moves() {
    let (corpus, base) = small_setup(4);
    let attrs = stub_attributes(&corpus, 16, 4);
    let adj = build_normalized_adjacency(&corpus.dataset).unwrap();

    let mut frozen = base.clone();
    train_neggen(&corpus.dataset, &mut frozen, &adj, &attrs, &quick_config(), &mut NoHooks).unwrap();
    assert_eq!(frozen, base);

    let mut unfrozen = base.clone();
    let config = TrainConfig { freeze_base: false, patience: 10, ..quick_config() };
    let (_, record) = train_neggen(&corpus.dataset, &mut unfrozen, &adj, &attrs, &config, &mut NoHooks).unwrap();
    // The restored checkpoint is from an epoch after at least one update.
    assert!(record.best_epoch >= 1);
    assert_ne!(unfrozen.layer_zero, base.layer_zero);
}

#[test]
fn training_is_deterministic() {
    let (corpus, base) = small_setup(5);
    let attrs = stub_attributes(&corpus, 16, 5);
    let adj = build_normalized_adjacency(&corpus.dataset).unwrap();
    let run = || {
        let mut b = base.clone();
        train_neggen(&corpus.dataset, &mut b, &adj, &attrs, &quick_config(), &mut NoHooks).unwrap()
    };
    let (p1, r1) = run();
    let (p2, r2) = run();
    assert_eq!(p1, p2);
    assert_eq!(r1, r2);
}

#[test]
fn total_loss_alpha_behaviour() {
    let (corpus, base) = small_setup(6);
    let attrs = stub_attributes(&corpus, 16, 6);
    let params = CausalParams::init(attrs.dim(), 8, 8, 6).unwrap();
    let mut rng = seeded_rng(6, 1);
    let batch: Vec<Example> = corpus.dataset.train[..16]
        .iter()
        .map(|&(user, item)| Example { user, item, negative_item: if rng.gen_bool(0.5) { Some(rng.gen_range(0..40)) } else { None } })
        .collect();
    let a = base.averaged();
    let loss = |alpha: f64| total_loss(&batch, &a.users, &a.items, &attrs, &params, &TrainConfig { alpha, ..quick_config() }).unwrap();
    let zero = loss(0.0);
    assert_eq!(zero.total, zero.rec);
    let one = loss(0.3);
    let two = loss(0.6);
    assert_eq!(one.rec, two.rec);
    assert!(((two.total - two.rec) - 2.0 * (one.total - one.rec)).abs() < 1e-12);
}

#[test]
fn missing_attributes_are_reported() {
    let (corpus, mut base) = small_setup(7);
    let adj = build_normalized_adjacency(&corpus.dataset).unwrap();
    let full = stub_attributes(&corpus, 16, 7);
    let mut embeddings = Vec::new();
    for item in 1..corpus.dataset.num_items() {
        embeddings.push(contrastforge_core::encode::AttributeEmbedding {
            item_id: corpus.dataset.item_ids[item].clone(),
            positive: full.positive(item).unwrap().clone(),
            negative: full.negative(item).unwrap().clone(),
        });
    }
    let partial = contrastforge_core::encode::AttributeTable::new(&corpus.dataset.item_ids, embeddings).unwrap();
    let err = train_neggen(&corpus.dataset, &mut base, &adj, &partial, &quick_config(), &mut NoHooks).unwrap_err();
    assert!(err.to_string().contains(&corpus.dataset.item_ids[0]), "{err}");
}
