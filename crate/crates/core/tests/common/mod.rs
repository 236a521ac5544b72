#![allow(dead_code)]

use contrastforge_core::data::InteractionDataset;
use contrastforge_core::numerics::{seeded_rng, Matrix, SeededRng};
use rand::Rng;

pub fn ids(prefix: &str, n: usize) -> Vec<String> {
    (0..n).map(|k| format!("{prefix}{k:03}")).collect()
}

/// Random bipartite training graph in which every user has an edge.
pub fn random_graph(users: usize, items: usize, density: f64, seed: u64) -> InteractionDataset {
    let mut rng = seeded_rng(seed, 99);
    let mut train = Vec::new();
    for u in 0..users {
        let before = train.len();
        for i in 0..items {
            if rng.gen_bool(density) {
                train.push((u, i));
            }
        }
        if train.len() == before {
            train.push((u, rng.gen_range(0..items)));
        }
    }
    InteractionDataset::from_splits(ids("u", users), ids("i", items), train, vec![], vec![], 1, seed).unwrap()
}

pub fn random_matrix(rows: usize, cols: usize, rng: &mut SeededRng) -> Matrix {
    Matrix::from_vec(rows, cols, (0..rows * cols).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
}

pub fn dense_matmul(a: &[Vec<f64>], b: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = a.len();
    let m = b[0].len();
    let mut out = vec![vec![0.0; m]; n];
    for r in 0..n {
        for k in 0..b.len() {
            for c in 0..m {
                out[r][c] += a[r][k] * b[k][c];
            }
        }
    }
    out
}

use contrastforge_core::encode::{encode_attributes, AttributeTable, StubEncoder};
use contrastforge_core::stub::stub_enrich;
use contrastforge_core::synthetic::SyntheticCorpus;

/// Runs the offline chain over a synthetic corpus and encodes the result.
pub fn stub_attributes(corpus: &SyntheticCorpus, dim: usize, seed: u64) -> AttributeTable {
    let encoder = StubEncoder::new(dim).unwrap();
    let embeddings: Vec<_> = corpus
        .records
        .iter()
        .map(|r| {
            let mut r = r.clone();
            stub_enrich(&mut r, &corpus.lexicon, &corpus.swaps, &corpus.vocabulary, 2, seed).unwrap();
            encode_attributes(&r, &encoder).unwrap()
        })
        .collect();
    AttributeTable::new(&corpus.dataset.item_ids, embeddings).unwrap()
}
