mod common;

use common::random_graph;
use contrastforge_core::graph::{build_normalized_adjacency, BaseModel};
use contrastforge_core::numerics::seeded_rng;
use contrastforge_core::sampling::{dns_negative, uniform_negative};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn single_candidate_matches_uniform_draws(seed in any::<u64>()) {
        let ds = random_graph(6, 15, 0.3, seed);
        let adj = build_normalized_adjacency(&ds).unwrap();
        let model = BaseModel::init(&adj, 4, 1, seed).unwrap();
        let mut a = seeded_rng(seed, 5);
        let mut b = seeded_rng(seed, 5);
        for u in 0..ds.num_users() {
            if ds.train_items(u).len() == ds.num_items() {
                continue;
            }
            for _ in 0..5 {
                prop_assert_eq!(dns_negative(u, 1, &model, &ds, &mut a).unwrap(), uniform_negative(u, &ds, &mut b).unwrap());
            }
        }
    }

    #[test]
    fn exhaustive_pool_returns_eligible_argmax(seed in any::<u64>()) {
        let ds = random_graph(6, 15, 0.3, seed);
        let adj = build_normalized_adjacency(&ds).unwrap();
        let model = BaseModel::init(&adj, 4, 1, seed).unwrap();
        let mut rng = seeded_rng(seed, 6);
        for u in 0..ds.num_users() {
            let eligible: Vec<usize> = (0..ds.num_items()).filter(|i| !ds.is_train_positive(u, *i)).collect();
            if eligible.is_empty() {
                continue;
            }
            let best = eligible.iter().copied().fold(eligible[0], |b, i| if model.score(u, i) > model.score(u, b) { i } else { b });
            let got = dns_negative(u, ds.num_items(), &model, &ds, &mut rng).unwrap();
            prop_assert_eq!(got, best);
            prop_assert!(!ds.is_train_positive(u, got));
        }
    }
}
