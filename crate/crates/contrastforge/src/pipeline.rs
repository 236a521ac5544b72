//! Describe, mask, complete and encode every item, through the remote
//! backend (with the response cache) or the offline stubs.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use contrastforge_core::data::{ItemAttributeRecord, MASK_TOKEN};
use contrastforge_core::encode::{encode_attributes, AttributeEmbedding, AttributeEncoder};
use contrastforge_core::prompt::{render_prompt, TemplateId, SLOT_ITEM_DESCRIPTION, SLOT_ITEM_IMAGE, SLOT_MASKED_DESCRIPTION};
use contrastforge_core::stub::{stub_enrich, Lexicon, SwapTable};

use crate::backend::{GenerationRequest, Generator};
use crate::cache::{cache_key, ResponseCache};
use crate::embfile::attribute_files;
use crate::formats::write_attributes;
use crate::fsutil::read_to_string;
use crate::{Error, Result};

/// Share of items allowed to fail before the whole run fails.
pub const MAX_FAILURE_RATE: f64 = 0.10;

#[derive(Debug, Clone, PartialEq)]
pub struct StubChain {
    pub lexicon: Lexicon,
    pub swaps: SwapTable,
    pub vocabulary: Vec<String>,
    pub max_masks: usize,
    pub seed: u64,
}

impl StubChain {
    /// Vocabulary is the lexicon terms plus every swap alternative. The
    /// lexicon's rarity counts come from `documents`.
    pub fn new<'a>(
        lexicon: Lexicon,
        swaps: SwapTable,
        documents: impl IntoIterator<Item = &'a str>,
        max_masks: usize,
        seed: u64,
    ) -> Self {
        let vocabulary: BTreeSet<String> =
            lexicon.terms().chain(swaps.alternatives()).map(str::to_string).collect();
        Self { lexicon: lexicon.with_corpus(documents), swaps, vocabulary: vocabulary.into_iter().collect(), max_masks, seed }
    }
}

pub struct BackendChain<'a> {
    pub generator: &'a dyn Generator,
    pub cache: &'a Mutex<ResponseCache>,
    pub model: String,
    pub temperature: f64,
    pub seed: Option<u64>,
    pub parallelism: usize,
}

pub enum Chain<'a> {
    Stub(StubChain),
    Backend(BackendChain<'a>),
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PipelineStats {
    pub backend_calls: usize,
    pub cache_hits: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineOutput {
    /// Every input record; failed items keep their original fields.
    pub records: Vec<ItemAttributeRecord>,
    /// Successful items only, in input order.
    pub embeddings: Vec<AttributeEmbedding>,
    /// `(item_id, error)` per failed item.
    pub failures: Vec<(String, String)>,
    pub stats: PipelineStats,
}

/// One term per line; blank lines and `#` comments are skipped.
pub fn load_lexicon(path: &Path) -> Result<Lexicon> {
    let text = read_to_string(path)?;
    Ok(Lexicon::new(text.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#'))))
}

/// `token TAB alternative` per line.
pub fn load_swap_table(path: &Path) -> Result<SwapTable> {
    let text = read_to_string(path)?;
    let mut pairs = Vec::new();
    for (n, line) in text.lines().enumerate() {
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let (a, b) = line.split_once('\t').ok_or_else(|| Error::Parse {
            path: path.to_path_buf(),
            line: n + 1,
            message: "expected `token<TAB>alternative`".to_string(),
        })?;
        pairs.push((a.trim().to_string(), b.trim().to_string()));
    }
    Ok(SwapTable::new(pairs))
}

fn invalid(message: String) -> Error {
    Error::Core(contrastforge_core::Error::InvalidInput(message))
}

struct Counters {
    calls: AtomicUsize,
    hits: AtomicUsize,
}

impl BackendChain<'_> {
    fn request(&self, template: TemplateId, record: &ItemAttributeRecord, text: &str) -> GenerationRequest {
        GenerationRequest {
            template_id: template,
            item_id: record.item_id.clone(),
            text_input: text.to_string(),
            image_ref: record.image_ref.clone(),
            model: self.model.clone(),
            temperature: self.temperature,
            seed: self.seed,
        }
    }

    /// Cache first; a response is cached only after it passes `check`.
    fn cached(
        &self,
        req: &GenerationRequest,
        prompt: &str,
        check: impl Fn(&str) -> Result<String>,
        counters: &Counters,
    ) -> Result<String> {
        let key = cache_key(req.template_id, prompt);
        if let Some(entry) = self.cache.lock().expect("cache lock").get(&key) {
            counters.hits.fetch_add(1, Ordering::Relaxed);
            return Ok(entry.output.clone());
        }
        counters.calls.fetch_add(1, Ordering::Relaxed);
        let output = check(&self.generator.generate(req, prompt)?)?;
        self.cache.lock().expect("cache lock").insert(req.template_id, prompt, &output, &self.model)?;
        Ok(output)
    }

    fn enrich(&self, record: &ItemAttributeRecord, counters: &Counters) -> Result<ItemAttributeRecord> {
        let mut r = record.clone();
        let item = r.item_id.clone();
        if r.visual_description.as_deref().is_none_or(|d| d.trim().is_empty()) {
            let image = r.image_ref.clone().ok_or_else(|| invalid(format!("item `{item}` has no description and no image_ref")))?;
            let prompt = render_prompt(TemplateId::Describe, &[(SLOT_ITEM_IMAGE, &image)])?;
            let req = self.request(TemplateId::Describe, &r, "");
            let text = self.cached(&req, &prompt, |out| non_empty(out, &item), counters)?;
            r.visual_description = Some(text);
        }
        let description = r.visual_description.clone().unwrap_or_default();
        let prompt = render_prompt(TemplateId::Mask, &[(SLOT_ITEM_DESCRIPTION, &description)])?;
        let req = self.request(TemplateId::Mask, &r, &description);
        let masked = self.cached(
            &req,
            &prompt,
            |out| {
                let out = non_empty(out, &item)?;
                if out.contains(MASK_TOKEN) {
                    Ok(out)
                } else {
                    Err(invalid(format!("masking output for `{item}` has no {MASK_TOKEN}")))
                }
            },
            counters,
        )?;
        let prompt = render_prompt(TemplateId::Complete, &[(SLOT_MASKED_DESCRIPTION, &masked)])?;
        let req = self.request(TemplateId::Complete, &r, &masked);
        let negative = self.cached(
            &req,
            &prompt,
            |out| {
                let out = non_empty(out, &item)?;
                if out.contains(MASK_TOKEN) {
                    Err(invalid(format!("completion output for `{item}` still contains {MASK_TOKEN}")))
                } else {
                    Ok(out)
                }
            },
            counters,
        )?;
        r.masked_description = Some(masked);
        r.negative_description = Some(negative);
        r.validate()?;
        Ok(r)
    }
}

fn non_empty(out: &str, item: &str) -> Result<String> {
    let out = out.trim();
    if out.is_empty() {
        Err(invalid(format!("empty generation for `{item}`")))
    } else {
        Ok(out.to_string())
    }
}

type ItemResult = Result<(ItemAttributeRecord, AttributeEmbedding)>;

/// Runs the chain over `records` and encodes the successes. Fails when more
/// than [`MAX_FAILURE_RATE`] of the items fail.
pub fn run_pipeline(
    records: &[ItemAttributeRecord],
    chain: &Chain<'_>,
    encoder: &(dyn AttributeEncoder + Sync),
) -> Result<PipelineOutput> {
    let counters = Counters { calls: AtomicUsize::new(0), hits: AtomicUsize::new(0) };
    let results: Vec<ItemResult> = match chain {
        Chain::Stub(stub) => records
            .iter()
            .map(|r| {
                let mut r = r.clone();
                stub_enrich(&mut r, &stub.lexicon, &stub.swaps, &stub.vocabulary, stub.max_masks, stub.seed)?;
                let e = encode_attributes(&r, encoder)?;
                Ok((r, e))
            })
            .collect(),
        Chain::Backend(backend) => {
            let slots: Vec<Mutex<Option<ItemResult>>> = records.iter().map(|_| Mutex::new(None)).collect();
            let next = AtomicUsize::new(0);
            let workers = backend.parallelism.clamp(1, records.len().max(1));
            std::thread::scope(|scope| {
                for _ in 0..workers {
                    scope.spawn(|| loop {
                        let k = next.fetch_add(1, Ordering::Relaxed);
                        let Some(record) = records.get(k) else { break };
                        let result = backend.enrich(record, &counters).and_then(|r| {
                            let e = encode_attributes(&r, encoder)?;
                            Ok((r, e))
                        });
                        *slots[k].lock().expect("slot lock") = Some(result);
                    });
                }
            });
            slots.into_iter().map(|s| s.into_inner().expect("slot lock").expect("every item processed")).collect()
        }
    };

    let mut out = PipelineOutput {
        records: Vec::with_capacity(records.len()),
        embeddings: Vec::new(),
        failures: Vec::new(),
        stats: PipelineStats { backend_calls: counters.calls.into_inner(), cache_hits: counters.hits.into_inner() },
    };
    for (original, result) in records.iter().zip(results) {
        match result {
            Ok((r, e)) => {
                out.records.push(r);
                out.embeddings.push(e);
            }
            Err(e) => {
                out.records.push(original.clone());
                out.failures.push((original.item_id.clone(), e.to_string()));
            }
        }
    }
    if out.failures.len() as f64 > MAX_FAILURE_RATE * records.len() as f64 {
        let (item, err) = &out.failures[0];
        return Err(Error::PipelineFailed { failed: out.failures.len(), total: records.len(), first: format!("{item}: {err}") });
    }
    Ok(out)
}

/// Writes `attributes.enriched.jsonl`, `pos.emb` and `neg.emb` (with their
/// `.ids` sidecars) into `dir`.
pub fn write_outputs(output: &PipelineOutput, dir: &Path) -> Result<Vec<PathBuf>> {
    let enriched = dir.join("attributes.enriched.jsonl");
    write_attributes(&output.records, &enriched)?;
    let (pos, neg) = attribute_files(&output.embeddings);
    let (pos_path, neg_path) = (dir.join("pos.emb"), dir.join("neg.emb"));
    pos.write(&pos_path)?;
    neg.write(&neg_path)?;
    Ok(vec![
        enriched,
        crate::embfile::ids_path(&pos_path),
        pos_path,
        crate::embfile::ids_path(&neg_path),
        neg_path,
    ])
}
