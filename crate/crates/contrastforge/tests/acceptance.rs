//! Acceptance checks. Prints one line per criterion and exits nonzero when
//! any criterion fails.

mod common;

use std::collections::BTreeMap;
use std::process::ExitCode;
use std::sync::Mutex;
use std::time::{Duration, Instant};

use contrastforge::backend::{BackendClient, BackendConfig};
use contrastforge::cache::ResponseCache;
use contrastforge::pipeline::{run_pipeline, write_outputs, BackendChain, Chain, StubChain};
use contrastforge_core::causal::{item_effect, CausalParams};
use contrastforge_core::data::{
    density, holdout_count, kcore_filter, split_80_10_10, Interaction, InteractionDataset, ItemAttributeRecord, RawInteractions, Split,
};
use contrastforge_core::encode::{encode_attributes, AttributeEmbedding, AttributeTable, StubEncoder};
use contrastforge_core::eval::{evaluate_topk, ndcg_at_k, track_modality_gradients, EpochModalities, ModalityEmbeddings};
use contrastforge_core::gradcheck::run_suite;
use contrastforge_core::graph::{bpr_base_loss, build_normalized_adjacency, propagate, train_base, BaseConfig, BaseModel, EmbeddingTable};
use contrastforge_core::numerics::{dot, l2_norm, seeded_rng, sigmoid, Matrix, SeededRng};
use contrastforge_core::prompt::TemplateId;
use contrastforge_core::sampling::{gradient_magnitude, ndcg_lower_bound, Modality};
use contrastforge_core::stub::stub_enrich;
use contrastforge_core::synthetic::{attribute_dataset, AttributeDatasetConfig};
use contrastforge_core::train::{fused_score, train_neggen, EarlyStopping, NegativeSource, NoHooks, TrainConfig};
use rand::seq::SliceRandom;
use rand::Rng;

const GRAD_TOLERANCE: f64 = 1e-4;
const GRAD_MIN_SEEDS: usize = 20;
const GRAD_TIME_LIMIT: Duration = Duration::from_secs(60);
const PROPAGATION_TOLERANCE: f64 = 1e-10;
const METRIC_INSTANCES: u64 = 100;
const HAND_NDCG: f64 = 0.91972;
const HAND_NDCG_TOLERANCE: f64 = 1e-5;
const IDENTITY_TOLERANCE: f64 = 1e-12;
const BOUND_PROBES: usize = 1000;
const END_TO_END_SEEDS: [u64; 3] = [1, 2, 3];
const END_TO_END_TIME_LIMIT: Duration = Duration::from_secs(300);
const END_TO_END_ENCODER_DIM: usize = 64;
const BABY_DENSITY: f64 = 0.00101;
const DENSITY_TOLERANCE: f64 = 5e-6;
const K_CORE: usize = 5;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn ensure(ok: bool, message: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(message())
    }
}

fn ids(prefix: &str, n: usize) -> Vec<String> {
    (0..n).map(|k| format!("{prefix}{k:03}")).collect()
}

fn random_matrix(rows: usize, cols: usize, rng: &mut SeededRng) -> Matrix {
    Matrix::from_vec(rows, cols, (0..rows * cols).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
}

fn gradient_suite() -> Outcome {
    let started = Instant::now();
    let outcomes = run_suite(0..GRAD_MIN_SEEDS as u64).map_err(|e| e.to_string())?;
    let elapsed = started.elapsed();
    let mut seeds: BTreeMap<&str, usize> = BTreeMap::new();
    for o in &outcomes {
        *seeds.entry(&o.name).or_default() += 1;
    }
    ensure(seeds.values().all(|&n| n >= GRAD_MIN_SEEDS), || format!("too few seeds: {seeds:?}"))?;
    for needed in ["bpr", "propagation_bpr_L2", "causal_rec", "causal_align_paper", "causal_align_stabilized"] {
        ensure(seeds.contains_key(needed), || format!("missing check {needed}"))?;
    }
    let worst = outcomes.iter().max_by(|a, b| a.report.max_relative_error.total_cmp(&b.report.max_relative_error)).unwrap();
    ensure(worst.report.max_relative_error < GRAD_TOLERANCE, || {
        format!("{} seed {} at {}: {:.3e}", worst.name, worst.seed, worst.report.worst_parameter, worst.report.max_relative_error)
    })?;
    ensure(elapsed < GRAD_TIME_LIMIT, || format!("took {elapsed:.1?}"))?;
    Ok(format!(
        "{} checks over {} kinds, max rel err {:.2e} < {GRAD_TOLERANCE:e}, {elapsed:.1?}",
        outcomes.len(),
        seeds.len(),
        worst.report.max_relative_error
    ))
}

fn random_graph(users: usize, items: usize, p: f64, rng: &mut SeededRng) -> InteractionDataset {
    let mut train = Vec::new();
    for u in 0..users {
        let before = train.len();
        for i in 0..items {
            if rng.gen_bool(p) {
                train.push((u, i));
            }
        }
        if train.len() == before {
            train.push((u, rng.gen_range(0..items)));
        }
    }
    InteractionDataset::from_splits(ids("u", users), ids("i", items), train, vec![], vec![], 1, 0).unwrap()
}

fn propagation_oracle() -> Outcome {
    let mut rng = seeded_rng(2, 0);
    let mut worst: f64 = 0.0;
    let mut graphs = 0;
    for _ in 0..40 {
        let users = rng.gen_range(1..=20);
        let items = rng.gen_range(1..=30);
        let ds = random_graph(users, items, rng.gen_range(0.05..0.6), &mut rng);
        let n = users + items;
        let mut a = vec![vec![0.0; n]; n];
        for &(u, i) in &ds.train {
            a[u][users + i] = 1.0;
            a[users + i][u] = 1.0;
        }
        let deg: Vec<f64> = a.iter().map(|r| r.iter().sum()).collect();
        for j in 0..n {
            for k in 0..n {
                if a[j][k] != 0.0 {
                    a[j][k] = 1.0 / (deg[j] * deg[k]).sqrt();
                }
            }
        }
        let d = 4;
        let table = EmbeddingTable::new(random_matrix(users, d, &mut rng), random_matrix(items, d, &mut rng)).unwrap();
        let e0 = table.stacked();
        let adj = build_normalized_adjacency(&ds).map_err(|e| e.to_string())?;
        for layers in 0..=3 {
            let mut layer: Vec<Vec<f64>> = (0..n).map(|r| e0.row(r).to_vec()).collect();
            let mut acc = layer.clone();
            for _ in 0..layers {
                layer = (0..n)
                    .map(|r| (0..d).map(|c| (0..n).map(|k| a[r][k] * layer[k][c]).sum()).collect())
                    .collect();
                for r in 0..n {
                    for c in 0..d {
                        acc[r][c] += layer[r][c];
                    }
                }
            }
            let got = propagate(&adj, &table, layers).map_err(|e| e.to_string())?.stacked();
            for r in 0..n {
                for c in 0..d {
                    worst = worst.max((got.get(r, c) - acc[r][c] / (layers + 1) as f64).abs());
                }
            }
            graphs += 1;
        }
    }
    ensure(worst <= PROPAGATION_TOLERANCE, || format!("max abs diff {worst:e}"))?;
    Ok(format!("{graphs} graph/depth pairs with L in 0..=3, max abs diff {worst:.1e} <= {PROPAGATION_TOLERANCE:e}"))
}

struct MetricInstance {
    ds: InteractionDataset,
    base: BaseModel,
    params: CausalParams,
    attrs: AttributeTable,
}

fn metric_instance(seed: u64) -> MetricInstance {
    let mut rng = seeded_rng(seed, 31);
    let users = rng.gen_range(1..=20);
    let items = rng.gen_range(4..=50);
    let (mut train, mut val, mut test) = (vec![], vec![], vec![]);
    for u in 0..users {
        let mut order: Vec<usize> = (0..items).collect();
        order.shuffle(&mut rng);
        let n = rng.gen_range(1..=items.min(8));
        train.push((u, order[0]));
        for &i in &order[1..n] {
            match rng.gen_range(0..3) {
                0 => train.push((u, i)),
                1 => val.push((u, i)),
                _ => test.push((u, i)),
            }
        }
    }
    let ds = InteractionDataset::from_splits(ids("u", users), ids("i", items), train, val, test, 1, seed).unwrap();
    let adj = build_normalized_adjacency(&ds).unwrap();
    let ties = seed.is_multiple_of(2);
    let mut draw = |r: usize| {
        let mut m = random_matrix(r, 4, &mut rng);
        if ties {
            m.as_mut_slice().iter_mut().for_each(|v| *v = (*v * 2.0).round() / 2.0);
        }
        m
    };
    let table = EmbeddingTable::new(draw(users), draw(items)).unwrap();
    let base = BaseModel::new(&adj, table, rng.gen_range(0..3)).unwrap();
    let params = CausalParams::init(6, 5, 4, seed).unwrap();
    let item_ids = ids("i", items);
    let attrs = AttributeTable::new(
        &item_ids,
        item_ids.iter().map(|id| AttributeEmbedding {
            item_id: id.clone(),
            positive: random_matrix(4, 6, &mut rng),
            negative: random_matrix(4, 6, &mut rng),
        }),
    )
    .unwrap();
    MetricInstance { ds, base, params, attrs }
}

/// Sorts every non-training item by score (ties by index) and applies the
/// textbook Recall and NDCG definitions.
fn brute_force(inst: &MetricInstance, lambda: Option<f64>, ks: &[usize]) -> Vec<(usize, f64, f64)> {
    let ds = &inst.ds;
    let effects: Vec<Vec<f64>> = (0..ds.num_items()).map(|i| item_effect(inst.attrs.positive(i).unwrap(), &inst.params).unwrap()).collect();
    let mut sums = vec![(0.0, 0.0); ks.len()];
    let mut users = 0;
    for u in 0..ds.num_users() {
        let relevant = ds.split_items(u, Split::Test);
        if relevant.is_empty() {
            continue;
        }
        let e_u = inst.base.user(u);
        let mut scored: Vec<(f64, usize)> = (0..ds.num_items())
            .filter(|&i| !ds.is_train_positive(u, i))
            .map(|i| {
                let s = match lambda {
                    None => dot(e_u, inst.base.item(i)),
                    Some(l) => fused_score(e_u, inst.base.item(i), &effects[i], l),
                };
                (s, i)
            })
            .collect();
        scored.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)));
        for (slot, &k) in ks.iter().enumerate() {
            let top: Vec<usize> = scored.iter().take(k).map(|p| p.1).collect();
            let hits = top.iter().filter(|i| relevant.contains(i)).count();
            let dcg: f64 = top.iter().enumerate().filter(|(_, i)| relevant.contains(i)).map(|(p, _)| 1.0 / ((p + 2) as f64).log2()).sum();
            let idcg: f64 = (1..=k.min(relevant.len())).map(|p| 1.0 / ((p + 1) as f64).log2()).sum();
            sums[slot].0 += hits as f64 / relevant.len() as f64;
            sums[slot].1 += dcg / idcg;
        }
        users += 1;
    }
    let n = users.max(1) as f64;
    ks.iter().zip(sums).map(|(&k, (r, g))| (k, r / n, g / n)).collect()
}

fn metric_oracle() -> Outcome {
    let ks = [1, 5, 10, 20];
    for seed in 0..METRIC_INSTANCES {
        let inst = metric_instance(seed);
        for lambda in [None, Some(0.5)] {
            let causal = lambda.map(|_| (&inst.params, &inst.attrs));
            let report = evaluate_topk(&inst.base, causal, &inst.ds, Split::Test, &ks, lambda.unwrap_or(0.0)).map_err(|e| e.to_string())?;
            for (m, (k, r, g)) in report.metrics.iter().zip(brute_force(&inst, lambda, &ks)) {
                ensure((m.k, m.recall, m.ndcg) == (k, r, g), || {
                    format!("instance {seed} lambda {lambda:?} K={k}: got ({}, {}) want ({r}, {g})", m.recall, m.ndcg)
                })?;
            }
        }
    }
    let hand = ndcg_at_k(&[0, 2, 1], &[0, 1], 3).map_err(|e| e.to_string())?;
    ensure((hand - HAND_NDCG).abs() < HAND_NDCG_TOLERANCE, || format!("hand NDCG {hand}"))?;
    Ok(format!("{METRIC_INSTANCES} instances exact (base and fused), hand NDCG@3 {hand:.5}"))
}

fn identities() -> Outcome {
    let mut rng = seeded_rng(4, 0);
    let mut worst: f64 = 0.0;
    let mut checked = 0;
    while checked < BOUND_PROBES {
        let d = rng.gen_range(1..16);
        let m = random_matrix(3, d, &mut rng);
        let (e_u, e_i, e_neg) = (m.row(0), m.row(1), m.row(2));
        if l2_norm(e_u) < 1e-3 {
            continue;
        }
        let lhs = sigmoid(dot(e_u, e_i) - dot(e_u, e_neg));
        let grad = bpr_base_loss(e_u, e_i, e_neg).map_err(|e| e.to_string())?.grad_neg;
        worst = worst.max((lhs - (1.0 - l2_norm(&grad) / l2_norm(e_u))).abs());
        worst = worst.max((lhs - (1.0 - gradient_magnitude(e_u, e_i, e_neg) / l2_norm(e_u))).abs());
        checked += 1;
    }
    ensure(worst <= IDENTITY_TOLERANCE, || format!("identity off by {worst:e}"))?;

    let m = random_matrix(4, 6, &mut rng);
    let zero_margin: Vec<(&[f64], &[f64])> = (1..4).map(|r| (m.row(r), m.row(r))).collect();
    let at_zero = ndcg_lower_bound(m.row(0), &zero_margin).map_err(|e| e.to_string())?;
    ensure(at_zero == 0.5, || format!("bound at zero margin {at_zero}"))?;

    let mut probes = 0;
    while probes < BOUND_PROBES {
        let d = rng.gen_range(1..10);
        let m = random_matrix(3, d, &mut rng);
        let e_u = m.row(0);
        if l2_norm(e_u) < 1e-2 {
            continue;
        }
        let step = rng.gen_range(1e-3..1.0) / dot(e_u, e_u);
        let harder: Vec<f64> = m.row(2).iter().zip(e_u).map(|(n, u)| n + step * u).collect();
        let before = ndcg_lower_bound(e_u, &[(m.row(1), m.row(2))]).map_err(|e| e.to_string())?;
        let after = ndcg_lower_bound(e_u, &[(m.row(1), &harder)]).map_err(|e| e.to_string())?;
        ensure(after < before, || format!("bound rose from {before} to {after}"))?;
        probes += 1;
    }
    Ok(format!("identity max err {worst:.1e} <= {IDENTITY_TOLERANCE:e}, bound 0.5 at zero margin, strictly decreasing on {probes} probes"))
}

fn pipeline_determinism() -> Outcome {
    let corpus = attribute_dataset(&AttributeDatasetConfig { users: 100, items: 50, seed: 5, ..Default::default() }).map_err(|e| e.to_string())?;
    let run_stub = || -> Result<Vec<Vec<u8>>, String> {
        let dir = tempfile::tempdir().unwrap();
        let chain = StubChain::new(corpus.lexicon.clone(), corpus.swaps.clone(), corpus.records.iter().map(|r| r.title.as_str()), 2, 5);
        let out = run_pipeline(&corpus.records, &Chain::Stub(chain), &StubEncoder::new(32).unwrap()).map_err(|e| e.to_string())?;
        ensure(out.stats.backend_calls == 0, || "stub chain called the backend".into())?;
        let mut paths = write_outputs(&out, dir.path()).map_err(|e| e.to_string())?;
        paths.sort();
        Ok(paths.iter().map(|p| std::fs::read(p).unwrap()).collect())
    };
    let (a, b) = (run_stub()?, run_stub()?);
    ensure(a == b, || "stub outputs differ between runs".into())?;

    let server = common::MockServer::start(common::generation_backend);
    let dir = tempfile::tempdir().unwrap();
    let cache_path = dir.path().join("cache.jsonl");
    let mut config = BackendConfig::new(&server.url);
    config.initial_backoff = Duration::from_millis(5);
    let client = BackendClient::new(config);
    let records: Vec<ItemAttributeRecord> = (0..10)
        .map(|k| {
            let mut r = ItemAttributeRecord::new(format!("i{k}"));
            r.image_ref = Some(format!("https://example.com/{k}.jpg"));
            r
        })
        .collect();
    let backend_run = || -> Result<usize, String> {
        let cache = Mutex::new(ResponseCache::open(&cache_path).map_err(|e| e.to_string())?);
        let chain =
            BackendChain { generator: &client, cache: &cache, model: "m".into(), temperature: 0.0, seed: Some(0), parallelism: 4 };
        let out = run_pipeline(&records, &Chain::Backend(chain), &StubEncoder::new(8).unwrap()).map_err(|e| e.to_string())?;
        Ok(out.stats.backend_calls)
    };
    let cold = backend_run()?;
    let before = server.count();
    let warm = backend_run()?;
    ensure(cold > 0 && warm == 0 && server.count() == before, || format!("warm rerun made {} requests", server.count() - before))?;

    let golden_dir = concat!(env!("CARGO_MANIFEST_DIR"), "/../core/tests/golden");
    for id in TemplateId::ALL {
        let golden = std::fs::read_to_string(format!("{golden_dir}/{}.txt", id.as_str())).map_err(|e| e.to_string())?;
        ensure(id.template().text == golden, || format!("template {} differs from its golden file", id.as_str()))?;
    }
    Ok(format!(
        "{} stub output files byte-identical, warm cache 0 of {cold} requests, {} golden prompts match",
        a.len(),
        TemplateId::ALL.len()
    ))
}

fn end_to_end() -> Outcome {
    let started = Instant::now();
    let mut lines = Vec::new();
    let mut failures = Vec::new();
    for seed in END_TO_END_SEEDS {
        let corpus = attribute_dataset(&AttributeDatasetConfig { seed, ..Default::default() }).map_err(|e| e.to_string())?;
        let ds = &corpus.dataset;
        let adj = build_normalized_adjacency(ds).map_err(|e| e.to_string())?;
        let encoder = StubEncoder::new(END_TO_END_ENCODER_DIM).unwrap();
        let embeddings = corpus
            .records
            .iter()
            .map(|r| {
                let mut r = r.clone();
                stub_enrich(&mut r, &corpus.lexicon, &corpus.swaps, &corpus.vocabulary, 2, seed)?;
                encode_attributes(&r, &encoder)
            })
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| e.to_string())?;
        let attrs = AttributeTable::new(&ds.item_ids, embeddings).map_err(|e| e.to_string())?;
        let (base, _) = train_base(ds, &adj, &BaseConfig { seed, ..Default::default() }, &mut NoHooks).map_err(|e| e.to_string())?;
        let ndcg = |cfg: TrainConfig| -> Result<f64, String> {
            let cfg = TrainConfig { seed, ..cfg };
            let mut model = base.clone();
            let (params, _) = train_neggen(ds, &mut model, &adj, &attrs, &cfg, &mut NoHooks).map_err(|e| e.to_string())?;
            let report = evaluate_topk(&model, Some((&params, &attrs)), ds, Split::Test, &[20], cfg.lambda).map_err(|e| e.to_string())?;
            Ok(report.ndcg_at(20).unwrap())
        };
        let full = ndcg(TrainConfig::default())?;
        let ablation = ndcg(TrainConfig { lambda: 0.0, alpha: 0.0, ..Default::default() })?;
        let uniform = ndcg(TrainConfig { negative_source: NegativeSource::Uniform, ..Default::default() })?;
        lines.push(format!("seed {seed}: full {full:.4} ablation {ablation:.4} uniform {uniform:.4}"));
        if full < ablation || full < uniform {
            failures.push(seed);
        }
    }
    let elapsed = started.elapsed();
    let summary = format!("{}; {elapsed:.1?}", lines.join("; "));
    ensure(failures.is_empty(), || format!("NDCG@20 ordering violated on seeds {failures:?}: {summary}"))?;
    ensure(elapsed < END_TO_END_TIME_LIMIT, || format!("took {elapsed:.1?}"))?;
    Ok(summary)
}

fn protocol() -> Outcome {
    let mut rng = seeded_rng(7, 0);
    for trial in 0..20u64 {
        let raw = RawInteractions::from_records((0..900).map(|t| Interaction {
            user: format!("u{}", rng.gen_range(0..60)),
            item: format!("i{}", rng.gen_range(0..40)),
            timestamp: Some(t),
        }))
        .map_err(|e| e.to_string())?;
        let filtered = kcore_filter(&raw, K_CORE).map_err(|e| e.to_string())?;
        let (mut ud, mut id) = (BTreeMap::<&str, usize>::new(), BTreeMap::<&str, usize>::new());
        for r in &filtered.records {
            *ud.entry(&r.user).or_default() += 1;
            *id.entry(&r.item).or_default() += 1;
        }
        ensure(ud.values().chain(id.values()).all(|&d| d >= K_CORE), || format!("trial {trial}: degree below {K_CORE}"))?;
        let ds = split_80_10_10(&filtered, K_CORE, trial).map_err(|e| e.to_string())?;
        for u in 0..ds.num_users() {
            let (tr, va, te) =
                (ds.train_items(u).len(), ds.split_items(u, Split::Validation).len(), ds.split_items(u, Split::Test).len());
            let held = holdout_count(tr + va + te);
            ensure(held >= 1 && va == held && te == held && tr > 0, || format!("trial {trial} user {u}: {tr}/{va}/{te}"))?;
            ensure(held == ((tr + va + te) as f64 * 0.1).round().max(1.0) as usize, || format!("holdout {held} for {}", tr + va + te))?;
        }
    }

    // Improvements at 1, 2 and 5, then three flat epochs.
    let script = [0.10, 0.20, 0.20, 0.15, 0.25, 0.24, 0.25, 0.20, 0.30];
    for patience in 1..=4 {
        let mut stopper = EarlyStopping::new(patience);
        let stop = script.iter().enumerate().find_map(|(e, &v)| stopper.observe(e + 1, v).stop.then_some(e + 1));
        let expected = match patience {
            1 => Some(3),
            2 => Some(4),
            3 => Some(8),
            _ => None,
        };
        ensure(stop == expected, || format!("patience {patience}: stopped at {stop:?}, want {expected:?}"))?;
    }
    let baby = density(19_445, 7_050, 139_110);
    ensure((baby - BABY_DENSITY).abs() < DENSITY_TOLERANCE, || format!("Baby density {baby}"))?;
    Ok(format!("20 random catalogs: degrees >= {K_CORE}, 80-10-10 min-1; early stopping scripted; Baby density {baby:.5}"))
}

fn modality_diagnostics() -> Outcome {
    let mut compared = 0;
    for seed in 0..20 {
        let mut rng = seeded_rng(seed, 8);
        let (n_users, n_triples, d) = (5, 12, 6);
        let triples: Vec<(usize, usize, usize)> = (0..n_triples).map(|k| (k % n_users, 2 * k, 2 * k + 1)).collect();
        let epochs: Vec<EpochModalities> = (1..=6)
            .map(|epoch| {
                let users = random_matrix(n_users, d, &mut rng);
                let visual = random_matrix(2 * n_triples, d, &mut rng);
                let mut textual = visual.clone();
                for &(u, i, _) in &triples {
                    let e_u = users.row(u);
                    let shift = rng.gen_range(0.05..2.0) / dot(e_u, e_u);
                    for (t, x) in textual.row_mut(i).iter_mut().zip(e_u) {
                        *t += shift * x;
                    }
                }
                let fused = random_matrix(2 * n_triples, d, &mut rng);
                EpochModalities { epoch, users, items: ModalityEmbeddings { visual, textual, fused } }
            })
            .collect();
        let trace = track_modality_gradients(&epochs, &triples).map_err(|e| e.to_string())?;
        for e in 1..=6 {
            let (v, t) = (trace.get(e, Modality::Visual).unwrap(), trace.get(e, Modality::Textual).unwrap());
            ensure(t < v, || format!("seed {seed} epoch {e}: textual {t} >= visual {v}"))?;
            compared += 1;
        }
    }
    Ok(format!("textual < visual at all {compared} (instance, epoch) pairs"))
}

fn main() -> ExitCode {
    let criteria: [Criterion; 8] = [
        ("gradient suite", gradient_suite),
        ("propagation oracle", propagation_oracle),
        ("metric oracle", metric_oracle),
        ("formula identities", identities),
        ("pipeline determinism", pipeline_determinism),
        ("end-to-end NDCG@20 ordering", end_to_end),
        ("protocol conformance", protocol),
        ("modality diagnostics", modality_diagnostics),
    ];
    let mut failed = 0;
    for (n, (name, check)) in criteria.iter().enumerate() {
        match check() {
            Ok(detail) => println!("[PASS] criterion {}: {name}: {detail}", n + 1),
            Err(detail) => {
                failed += 1;
                println!("[FAIL] criterion {}: {name}: {detail}", n + 1);
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
