//! The CLI stages. Each command takes the run lock, checks its
//! prerequisites in the manifest and appends a manifest entry on success.

use std::path::PathBuf;
use std::sync::Mutex;
use std::time::Instant;

use contrastforge_core::causal::CausalParams;
use contrastforge_core::data::{kcore_filter, split_80_10_10, InteractionDataset, ItemAttributeRecord, Split};
use contrastforge_core::encode::{AttributeEncoder, AttributeTable, LookupEncoder, StubEncoder};
use contrastforge_core::eval::{evaluate_topk, track_modality_gradients, EpochModalities, MetricsReport, ModalityEmbeddings};
use contrastforge_core::gradcheck::{run_suite, CheckOutcome, TOLERANCE};
use contrastforge_core::graph::{build_normalized_adjacency, train_base, BaseModel, NormalizedAdjacency};
use contrastforge_core::numerics::seeded_rng;
use contrastforge_core::sampling::{uniform_negative, DiagnosticsTrace};
use contrastforge_core::stub::{Lexicon, SwapTable};
use contrastforge_core::train::{train_neggen, TrainHooks};
use serde_json::json;

use crate::backend::{BackendClient, BackendConfig};
use crate::cache::ResponseCache;
use crate::checkpoint::{read_json, write_json, BaseCheckpoint, CausalCheckpoint, TrainOutcome};
use crate::config::RunConfig;
use crate::embfile::{attribute_table, EmbeddingFile};
use crate::export::{diagnostics_csv, export_metrics};
use crate::formats::{load_attributes, load_interactions, write_dataset, read_dataset, DatasetSummary};
use crate::fsutil::atomic_write;
use crate::pipeline::{load_lexicon, load_swap_table, run_pipeline, write_outputs, BackendChain, Chain, PipelineStats, StubChain};
use crate::run::{ManifestEntry, RunDir};
use crate::{Error, Result};

/// Seeds of the finite-difference suite.
pub const GRADCHECK_SEEDS: std::ops::Range<u64> = 0..20;

struct Clock(Instant);

impl TrainHooks for Clock {
    fn elapsed_secs(&mut self) -> f64 {
        self.0.elapsed().as_secs_f64()
    }
}

fn entry(command: &str, config: &RunConfig, seeds: Vec<u64>, started: Instant) -> ManifestEntry {
    ManifestEntry {
        command: command.to_string(),
        config_hash: config.hash(),
        seeds,
        inputs: Default::default(),
        outputs: Default::default(),
        details: serde_json::Value::Null,
        wall_time_secs: started.elapsed().as_secs_f64(),
    }
}

fn dataset_records(ds: &InteractionDataset, config: &RunConfig) -> Result<Vec<ItemAttributeRecord>> {
    let mut attrs = load_attributes(&config.data.attributes)?;
    let mut missing = Vec::new();
    let records: Vec<ItemAttributeRecord> = ds
        .item_ids
        .iter()
        .filter_map(|id| {
            let r = attrs.remove(id);
            if r.is_none() {
                missing.push(id.clone());
            }
            r
        })
        .collect();
    if let Some(first) = missing.first() {
        return Err(Error::Core(contrastforge_core::Error::MissingAttributes(format!(
            "{first} ({} of {} items have no attribute record)",
            missing.len(),
            ds.num_items()
        ))));
    }
    Ok(records)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PrepareOutput {
    pub summary: DatasetSummary,
    pub entry: ManifestEntry,
}

pub fn cmd_prepare(config: &RunConfig, run: &RunDir) -> Result<PrepareOutput> {
    config.check_paths("prepare")?;
    let _lock = run.lock()?;
    let started = Instant::now();
    let raw = load_interactions(&config.data.interactions)?;
    let filtered = kcore_filter(&raw, config.data.k_core)?;
    let ds = split_80_10_10(&filtered, config.data.k_core, config.data.seed)?;
    dataset_records(&ds, config)?;
    let outputs = write_dataset(&ds, &run.dataset_dir())?;
    let summary = DatasetSummary::of(&ds);
    let mut e = entry("prepare", config, vec![config.data.seed], started);
    e.inputs = run.hashes([&config.data.interactions, &config.data.attributes])?;
    e.outputs = run.hashes(&outputs)?;
    e.details = json!({ "raw_interactions": raw.len(), "dataset": summary });
    run.append_manifest(&e)?;
    Ok(PrepareOutput { summary, entry: e })
}

fn load_prepared(run: &RunDir) -> Result<(InteractionDataset, NormalizedAdjacency)> {
    run.require("prepare")?;
    let ds = read_dataset(&run.dataset_dir())?;
    let adj = build_normalized_adjacency(&ds)?;
    Ok((ds, adj))
}

fn encoder(config: &RunConfig) -> Result<Box<dyn AttributeEncoder + Sync>> {
    match &config.pipeline.encoder_path {
        Some(path) => {
            let file = EmbeddingFile::read(path)?;
            Ok(Box::new(LookupEncoder::new(file.dim, file.to_map())?))
        }
        None => Ok(Box::new(StubEncoder::new(config.pipeline.d_enc)?)),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenerateOutput {
    pub items: usize,
    pub failures: Vec<(String, String)>,
    pub stats: PipelineStats,
}

pub fn cmd_generate(config: &RunConfig, run: &RunDir) -> Result<GenerateOutput> {
    config.check_paths("generate")?;
    let _lock = run.lock()?;
    let started = Instant::now();
    let (ds, _) = load_prepared(run)?;
    let records = dataset_records(&ds, config)?;
    let encoder = encoder(config)?;
    let p = &config.pipeline;
    let (output, cache_path) = if p.stub {
        let lexicon = p.lexicon_path.as_deref().map(load_lexicon).transpose()?.unwrap_or_else(|| Lexicon::new(Vec::<String>::new()));
        let swaps = p.swap_table_path.as_deref().map(load_swap_table).transpose()?.unwrap_or_else(|| SwapTable::new(Vec::<(String, String)>::new()));
        let chain = StubChain::new(lexicon, swaps, records.iter().map(|r| r.title.as_str()), p.max_masks, config.data.seed);
        (run_pipeline(&records, &Chain::Stub(chain), encoder.as_ref())?, None)
    } else {
        let url = p.backend_url.clone().ok_or_else(|| Error::Config("pipeline.backend_url is not set".to_string()))?;
        let client = BackendClient::new(BackendConfig::new(url).with_env_token());
        let cache_path = p.cache_path.clone().unwrap_or_else(|| run.default_cache_path());
        let cache = Mutex::new(ResponseCache::open(&cache_path)?);
        let chain = BackendChain {
            generator: &client,
            cache: &cache,
            model: p.model.clone(),
            temperature: p.temperature,
            seed: p.backend_seed,
            parallelism: p.parallelism,
        };
        (run_pipeline(&records, &Chain::Backend(chain), encoder.as_ref())?, Some(cache_path))
    };
    let outputs = write_outputs(&output, &run.dataset_dir())?;
    let mut e = entry("generate", config, vec![config.data.seed], started);
    let mut inputs = vec![config.data.attributes.clone()];
    inputs.extend([&p.lexicon_path, &p.swap_table_path, &p.encoder_path].into_iter().flatten().cloned());
    e.inputs = run.hashes(&inputs)?;
    e.outputs = run.hashes(&outputs)?;
    e.details = json!({
        "items": records.len(),
        "failed": output.failures.len(),
        "backend_calls": output.stats.backend_calls,
        "cache_hits": output.stats.cache_hits,
        "cache": cache_path.map(|c| run.relative(&c)),
    });
    run.append_manifest(&e)?;
    Ok(GenerateOutput { items: records.len(), failures: output.failures, stats: output.stats })
}

fn base_checkpoint_path(run: &RunDir) -> PathBuf {
    run.checkpoints_dir().join("base.json")
}

pub fn cmd_train_base(config: &RunConfig, run: &RunDir) -> Result<BaseCheckpoint> {
    let _lock = run.lock()?;
    let started = Instant::now();
    let (ds, adj) = load_prepared(run)?;
    let (model, record) = train_base(&ds, &adj, &config.base_config(), &mut Clock(Instant::now()))?;
    let checkpoint = BaseCheckpoint::new(&model, record);
    let path = base_checkpoint_path(run);
    write_json(&checkpoint, &path)?;
    let mut e = entry("train-base", config, vec![config.data.seed], started);
    e.inputs = run.hashes(&[run.dataset_dir().join("train.tsv")])?;
    e.outputs = run.hashes(&[path])?;
    e.details = json!({
        "epochs": checkpoint.record.epochs.len(),
        "best_epoch": checkpoint.record.best_epoch,
        "best_val_recall": checkpoint.record.best_val_recall,
        "stop_reason": checkpoint.record.stop_reason,
    });
    run.append_manifest(&e)?;
    Ok(checkpoint)
}

fn load_base(run: &RunDir, adj: &NormalizedAdjacency) -> Result<(BaseModel, BaseCheckpoint)> {
    run.require("train-base")?;
    let checkpoint: BaseCheckpoint = read_json(&base_checkpoint_path(run))?;
    Ok((checkpoint.model(adj)?, checkpoint))
}

fn load_attribute_table(run: &RunDir, ds: &InteractionDataset) -> Result<AttributeTable> {
    run.require("generate")?;
    let dir = run.dataset_dir();
    let pos = EmbeddingFile::read(&dir.join("pos.emb"))?;
    let neg = EmbeddingFile::read(&dir.join("neg.emb"))?;
    attribute_table(&ds.item_ids, &pos, &neg, &dir.join("pos.emb"))
}

pub fn causal_checkpoint_path(run: &RunDir, seed: u64) -> PathBuf {
    run.checkpoints_dir().join(format!("causal_seed{seed}.json"))
}

fn tuned_base_path(run: &RunDir, seed: u64) -> PathBuf {
    run.checkpoints_dir().join(format!("base_seed{seed}.json"))
}

fn record_path(run: &RunDir, seed: u64) -> PathBuf {
    run.checkpoints_dir().join(format!("train_record_seed{seed}.json"))
}

/// Writes the causal checkpoint every time validation improves, so the
/// last good parameters survive a later divergence.
struct CheckpointHooks<'a> {
    clock: Clock,
    seed: u64,
    path: PathBuf,
    error: Option<Error>,
    snapshots: Option<(&'a AttributeTable, Vec<EpochModalities>)>,
}

impl TrainHooks for CheckpointHooks<'_> {
    fn elapsed_secs(&mut self) -> f64 {
        self.clock.elapsed_secs()
    }

    fn on_causal_epoch(&mut self, epoch: usize, params: &CausalParams, base: &BaseModel, improved: bool) {
        if improved && self.error.is_none() {
            if let Err(e) = write_json(&CausalCheckpoint::new(self.seed, epoch, params), &self.path) {
                self.error = Some(e);
            }
        }
        if let Some((attrs, snaps)) = &mut self.snapshots {
            match ModalityEmbeddings::compute(params, attrs) {
                Ok(items) => snaps.push(EpochModalities { epoch, users: base.averaged().users.clone(), items }),
                Err(e) => self.error = self.error.take().or(Some(e.into())),
            }
        }
    }
}

pub fn cmd_train(config: &RunConfig, run: &RunDir) -> Result<Vec<TrainOutcome>> {
    let _lock = run.lock()?;
    let started = Instant::now();
    let (ds, adj) = load_prepared(run)?;
    let (base, _) = load_base(run, &adj)?;
    let attrs = load_attribute_table(run, &ds)?;
    let mut outcomes = Vec::new();
    let mut outputs = Vec::new();
    for &seed in &config.train.seeds {
        let mut model = base.clone();
        let train_config = config.train_config(seed);
        let path = causal_checkpoint_path(run, seed);
        let mut hooks =
            CheckpointHooks { clock: Clock(Instant::now()), seed, path: path.clone(), error: None, snapshots: None };
        let (params, record) = train_neggen(&ds, &mut model, &adj, &attrs, &train_config, &mut hooks)?;
        if let Some(e) = hooks.error {
            return Err(e);
        }
        write_json(&CausalCheckpoint::new(seed, record.best_epoch, &params), &path)?;
        outputs.push(path);
        if !train_config.freeze_base {
            let tuned = tuned_base_path(run, seed);
            write_json(&BaseCheckpoint::new(&model, read_json::<BaseCheckpoint>(&base_checkpoint_path(run))?.record), &tuned)?;
            outputs.push(tuned);
        }
        let outcome = TrainOutcome { seed, record };
        let rpath = record_path(run, seed);
        write_json(&outcome, &rpath)?;
        outputs.push(rpath);
        outcomes.push(outcome);
    }
    let mut e = entry("train", config, config.train.seeds.clone(), started);
    e.inputs = run.hashes(&[base_checkpoint_path(run), run.dataset_dir().join("pos.emb"), run.dataset_dir().join("neg.emb")])?;
    e.outputs = run.hashes(&outputs)?;
    e.details = json!(outcomes
        .iter()
        .map(|o| json!({"seed": o.seed, "best_epoch": o.record.best_epoch, "best_val_recall": o.record.best_val_recall}))
        .collect::<Vec<_>>());
    run.append_manifest(&e)?;
    Ok(outcomes)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalOutput {
    pub base: MetricsReport,
    /// `(seed, report)` for each trained causal model.
    pub neggen: Vec<(u64, MetricsReport)>,
}

pub fn cmd_eval(config: &RunConfig, run: &RunDir) -> Result<EvalOutput> {
    let _lock = run.lock()?;
    let started = Instant::now();
    run.require("train-base")?;
    let (ds, adj) = load_prepared(run)?;
    let (base, checkpoint) = load_base(run, &adj)?;
    let ks = &config.eval.ks;
    let series: Vec<f64> = checkpoint.record.epochs.iter().map(|e| e.val_recall).collect();
    let base_report =
        evaluate_topk(&base, None, &ds, Split::Test, ks, 0.0)?.with_training(series, checkpoint.record.best_epoch);
    let mut outputs = export_metrics(&base_report, &run.metrics_dir(), "base")?;
    let mut neggen = Vec::new();
    if run.last_entry("train")?.is_some() {
        let attrs = load_attribute_table(run, &ds)?;
        for &seed in &config.train.seeds {
            let causal: CausalCheckpoint = read_json(&causal_checkpoint_path(run, seed))?;
            let outcome: TrainOutcome = read_json(&record_path(run, seed))?;
            let tuned = tuned_base_path(run, seed);
            let model = if !config.train.freeze_base && tuned.exists() {
                read_json::<BaseCheckpoint>(&tuned)?.model(&adj)?
            } else {
                base.clone()
            };
            let series = outcome.record.epochs.iter().map(|e| e.val_recall).collect();
            let report = evaluate_topk(&model, Some((&causal.params()?, &attrs)), &ds, Split::Test, ks, config.train.lambda)?
                .with_training(series, outcome.record.best_epoch);
            outputs.extend(export_metrics(&report, &run.metrics_dir(), &format!("neggen_seed{seed}"))?);
            neggen.push((seed, report));
        }
    }
    let mut e = entry("eval", config, config.train.seeds.clone(), started);
    e.outputs = run.hashes(&outputs)?;
    run.append_manifest(&e)?;
    Ok(EvalOutput { base: base_report, neggen })
}

/// Retrains the first configured seed while recording per-epoch modality
/// embeddings, then traces BPR negative-gradient magnitudes per modality
/// over `(user, positive, sampled negative)` triples.
pub fn cmd_diagnose(config: &RunConfig, run: &RunDir) -> Result<DiagnosticsTrace> {
    let _lock = run.lock()?;
    let started = Instant::now();
    run.require("train")?;
    let (ds, adj) = load_prepared(run)?;
    let (base, _) = load_base(run, &adj)?;
    let attrs = load_attribute_table(run, &ds)?;
    let seed = config.train.seeds[0];
    let mut model = base;
    let mut hooks = CheckpointHooks {
        clock: Clock(Instant::now()),
        seed,
        path: std::env::temp_dir().join(format!("contrastforge-diagnose-{}.json", std::process::id())),
        error: None,
        snapshots: Some((&attrs, Vec::new())),
    };
    let result = train_neggen(&ds, &mut model, &adj, &attrs, &config.train_config(seed), &mut hooks);
    let _ = std::fs::remove_file(&hooks.path);
    result?;
    if let Some(e) = hooks.error {
        return Err(e);
    }
    let snapshots = hooks.snapshots.map(|(_, s)| s).unwrap_or_default();
    let mut rng = seeded_rng(seed, 0x6469_6167);
    let triples = ds.train.iter().map(|&(u, i)| Ok((u, i, uniform_negative(u, &ds, &mut rng)?))).collect::<Result<Vec<_>>>()?;
    let trace = track_modality_gradients(&snapshots, &triples)?;
    let path = run.metrics_dir().join("diagnostics.csv");
    atomic_write(&path, diagnostics_csv(&trace).as_bytes())?;
    let mut e = entry("diagnose", config, vec![seed], started);
    e.outputs = run.hashes(&[path])?;
    run.append_manifest(&e)?;
    Ok(trace)
}

pub fn cmd_gradcheck(config: &RunConfig, run: &RunDir) -> Result<Vec<CheckOutcome>> {
    let _lock = run.lock()?;
    let started = Instant::now();
    let outcomes = run_suite(GRADCHECK_SEEDS)?;
    let path = run.metrics_dir().join("gradcheck.json");
    let rows: Vec<_> = outcomes
        .iter()
        .map(|o| json!({"check": o.name, "seed": o.seed, "max_relative_error": o.report.max_relative_error, "worst": o.report.worst_parameter}))
        .collect();
    write_json(&rows, &path)?;
    let failed: Vec<&CheckOutcome> = outcomes.iter().filter(|o| !o.passed()).collect();
    let mut e = entry("gradcheck", config, GRADCHECK_SEEDS.collect(), started);
    e.outputs = run.hashes(&[path])?;
    e.details = json!({"checks": outcomes.len(), "failed": failed.len(), "tolerance": TOLERANCE});
    if let Some(worst) = failed.iter().max_by(|a, b| a.report.max_relative_error.total_cmp(&b.report.max_relative_error)) {
        return Err(Error::GradCheck(format!(
            "{} of {} checks above {TOLERANCE:e}; worst {} (seed {}) at {} with {:.3e}",
            failed.len(),
            outcomes.len(),
            worst.name,
            worst.seed,
            worst.report.worst_parameter,
            worst.report.max_relative_error
        )));
    }
    run.append_manifest(&e)?;
    Ok(outcomes)
}
