//! Run configuration: one TOML document with `data`, `base`, `pipeline`,
//! `train` and `eval` sections. Every field has a default.

use std::path::{Path, PathBuf};

use contrastforge_core::causal::Pooling;
use contrastforge_core::graph::BaseConfig;
use contrastforge_core::train::{AlignVariant, NegativeSource, TrainConfig};
use serde::{Deserialize, Serialize};

use crate::fsutil::{read_to_string, sha256_hex};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataSection {
    pub interactions: PathBuf,
    pub attributes: PathBuf,
    pub k_core: usize,
    pub seed: u64,
}

impl Default for DataSection {
    fn default() -> Self {
        Self { interactions: "interactions.tsv".into(), attributes: "attributes.jsonl".into(), k_core: 5, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BaseSection {
    pub d: usize,
    #[serde(rename = "L")]
    pub layers: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
}

impl Default for BaseSection {
    fn default() -> Self {
        let b = BaseConfig::default();
        Self { d: b.dim, layers: b.num_layers, lr: b.lr, batch_size: b.batch_size, max_epochs: b.max_epochs, patience: b.patience }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineSection {
    /// Chat-completion endpoint; ignored when `stub` is true.
    pub backend_url: Option<String>,
    pub stub: bool,
    pub model: String,
    pub temperature: f64,
    pub backend_seed: Option<u64>,
    /// Defaults to `cache.jsonl` in the run directory.
    pub cache_path: Option<PathBuf>,
    pub d_enc: usize,
    /// Precomputed field vectors (NEGGEMB1, ids `item_id#field`) used
    /// instead of the hashing encoder.
    pub encoder_path: Option<PathBuf>,
    pub lexicon_path: Option<PathBuf>,
    pub swap_table_path: Option<PathBuf>,
    pub max_masks: usize,
    pub parallelism: usize,
}

impl Default for PipelineSection {
    fn default() -> Self {
        Self {
            backend_url: None,
            stub: true,
            model: "llama-3.2-11b-vision-instruct".to_string(),
            temperature: 0.0,
            backend_seed: Some(0),
            cache_path: None,
            d_enc: 128,
            encoder_path: None,
            lexicon_path: None,
            swap_table_path: None,
            max_masks: 2,
            parallelism: 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub lambda: f64,
    pub alpha: f64,
    pub tau: f64,
    pub lr: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub hidden: Option<usize>,
    pub freeze_base: bool,
    pub align_variant: AlignVariant,
    pub negative_source: NegativeSource,
    pub pooling: Pooling,
    pub seeds: Vec<u64>,
}

impl Default for TrainSection {
    fn default() -> Self {
        let t = TrainConfig::default();
        Self {
            lambda: t.lambda,
            alpha: t.alpha,
            tau: t.tau,
            lr: t.lr,
            batch_size: t.batch_size,
            max_epochs: t.max_epochs,
            patience: t.patience,
            hidden: t.hidden,
            freeze_base: t.freeze_base,
            align_variant: t.align_variant,
            negative_source: t.negative_source,
            pooling: t.pooling,
            seeds: vec![0],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    #[serde(rename = "Ks")]
    pub ks: Vec<usize>,
}

impl Default for EvalSection {
    fn default() -> Self {
        Self { ks: vec![10, 20] }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub data: DataSection,
    pub base: BaseSection,
    pub pipeline: PipelineSection,
    pub train: TrainSection,
    pub eval: EvalSection,
}

/// Cutoff used for early stopping and the convergence epoch.
pub const SELECTION_K: usize = 20;

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let config: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    /// Relative paths are resolved against the config file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let mut config = Self::from_toml(&read_to_string(path)?)?;
        let base = path.parent().unwrap_or(Path::new("."));
        let resolve = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        resolve(&mut config.data.interactions);
        resolve(&mut config.data.attributes);
        for p in [
            &mut config.pipeline.cache_path,
            &mut config.pipeline.encoder_path,
            &mut config.pipeline.lexicon_path,
            &mut config.pipeline.swap_table_path,
        ]
        .into_iter()
        .flatten()
        {
            resolve(p);
        }
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.data.k_core == 0 {
            return bad("data.k_core must be at least 1");
        }
        if self.eval.ks.is_empty() || self.eval.ks.contains(&0) {
            return bad("eval.Ks must be non-empty and positive");
        }
        if self.train.seeds.is_empty() {
            return bad("train.seeds must not be empty");
        }
        if !self.pipeline.stub && self.pipeline.backend_url.is_none() {
            return bad("pipeline.backend_url is required unless pipeline.stub = true");
        }
        if self.pipeline.d_enc == 0 || self.pipeline.parallelism == 0 {
            return bad("pipeline.d_enc and pipeline.parallelism must be positive");
        }
        self.train_config(self.train.seeds[0]).validate()?;
        Ok(())
    }

    /// Canonical hash: the TOML rendering of the parsed configuration.
    pub fn hash(&self) -> String {
        sha256_hex(toml::to_string(self).expect("config serializes").as_bytes())
    }

    pub fn base_config(&self) -> BaseConfig {
        BaseConfig {
            dim: self.base.d,
            num_layers: self.base.layers,
            lr: self.base.lr,
            batch_size: self.base.batch_size,
            max_epochs: self.base.max_epochs,
            patience: self.base.patience,
            seed: self.data.seed,
            eval_k: SELECTION_K,
        }
    }

    pub fn train_config(&self, seed: u64) -> TrainConfig {
        let t = &self.train;
        TrainConfig {
            lambda: t.lambda,
            alpha: t.alpha,
            tau: t.tau,
            lr: t.lr,
            batch_size: t.batch_size,
            max_epochs: t.max_epochs,
            patience: t.patience,
            hidden: t.hidden,
            seed,
            freeze_base: t.freeze_base,
            align_variant: t.align_variant,
            negative_source: t.negative_source,
            pooling: t.pooling,
            eval_k: SELECTION_K,
        }
    }

    /// Paths that must exist before `command` starts.
    pub fn required_paths(&self, command: &str) -> Vec<&Path> {
        let mut out: Vec<&Path> = Vec::new();
        if command == "prepare" {
            out.push(&self.data.interactions);
            out.push(&self.data.attributes);
        }
        if command == "generate" {
            out.push(&self.data.attributes);
            for p in [&self.pipeline.lexicon_path, &self.pipeline.swap_table_path, &self.pipeline.encoder_path].into_iter().flatten() {
                out.push(p);
            }
        }
        out
    }

    pub fn check_paths(&self, command: &str) -> Result<()> {
        for p in self.required_paths(command) {
            if !p.exists() {
                return Err(Error::Config(format!("{} does not exist", p.display())));
            }
        }
        Ok(())
    }
}
