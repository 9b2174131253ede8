//! Modality-bridging data construction.
//!
//! For each image-question-answer sample the pipeline runs three generation
//! calls (a Pseudo-CoT draft from a vision model, a detailed description
//! seeded by that draft, and a reasoning trace from a text-only model), then
//! keeps the record only if the trace is tag-well-formed, its answer matches
//! the ground truth, and every filter rule passes. Kept records get their
//! think text cleaned by the rewrite rules and are written out as
//! line-delimited JSON with a fixed field order, so identical inputs produce
//! byte-identical datasets.

pub mod backend;
pub mod markers;
pub mod prompts;
pub mod rules;

use crate::config::ArtifactHeader;
use crate::reward::{parse_tagged, AnswerMatchRule};
use crate::util::parallel_map;
use backend::{BackendError, ChatMessage, ChatRequest, GenBackend, RequestRole};
use rules::{FilterConfig, RewriteRule};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

/// One input sample: an image locator, a question about it, the canonical
/// answer, and a provenance label.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct VqaSample {
    pub image_ref: String,
    pub question: String,
    pub ground_truth: String,
    #[serde(default)]
    pub source_tag: String,
}

impl VqaSample {
    pub fn validate(&self) -> Result<(), String> {
        if self.question.trim().is_empty() {
            return Err("sample question must be non-empty".into());
        }
        if self.ground_truth.trim().is_empty() {
            return Err("sample ground_truth must be non-empty".into());
        }
        Ok(())
    }
}

/// Why a candidate was dropped. The first failure wins.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DropReason {
    BackendError,
    FormatInvalid,
    AnswerMismatch,
    ThinkTooLong,
    BannedPhrase,
    Inconsistency,
}

impl DropReason {
    pub fn as_str(self) -> &'static str {
        match self {
            DropReason::BackendError => "backend_error",
            DropReason::FormatInvalid => "format_invalid",
            DropReason::AnswerMismatch => "answer_mismatch",
            DropReason::ThinkTooLong => "think_too_long",
            DropReason::BannedPhrase => "banned_phrase",
            DropReason::Inconsistency => "inconsistency",
        }
    }
}

/// Provenance carried by every record.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PipelineMeta {
    pub pseudo_cot: String,
    pub description: String,
    pub mllm_backend: String,
    pub reasoning_backend: String,
    /// Supplied by the run config rather than the wall clock so that
    /// identical inputs yield byte-identical outputs.
    pub timestamp: String,
}

/// One cold-start dataset entry. Field order is part of the format.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CotRecord {
    pub image_ref: String,
    pub question: String,
    pub think_text: String,
    pub answer_text: String,
    pub ground_truth: String,
    pub pipeline_meta: PipelineMeta,
    pub kept: bool,
    pub drop_reason: Option<DropReason>,
}

/// Everything `process_sample` needs besides the sample itself.
pub struct PipelineContext {
    pub mllm: GenBackend,
    pub reasoning: GenBackend,
    pub rewrites: Vec<RewriteRule>,
    pub filters: FilterConfig,
    pub temperature: f64,
    pub timestamp: String,
    /// Bounded in-flight request / worker count.
    pub max_in_flight: usize,
}

/// Ask the vision backend for the Pseudo-CoT draft.
pub fn gen_pseudo_cot(
    backend: &GenBackend,
    sample: &VqaSample,
    temperature: f64,
) -> Result<String, BackendError> {
    let prompt = prompts::render_pseudo_cot(&sample.question, &sample.ground_truth);
    let request = ChatRequest {
        model: backend.model().to_string(),
        messages: vec![ChatMessage::user_with_image(prompt, &sample.image_ref)],
        temperature,
    };
    backend.generate(RequestRole::PseudoCot, &request)
}

/// Ask the vision backend for the detailed description, seeded by the draft.
pub fn gen_description(
    backend: &GenBackend,
    sample: &VqaSample,
    pseudo_cot: &str,
    temperature: f64,
) -> Result<String, BackendError> {
    let prompt = prompts::render_description(&sample.question, pseudo_cot);
    let request = ChatRequest {
        model: backend.model().to_string(),
        messages: vec![ChatMessage::user_with_image(prompt, &sample.image_ref)],
        temperature,
    };
    backend.generate(RequestRole::Description, &request)
}

/// Ask the text-only reasoning backend for a tagged trace.
pub fn gen_reasoning(
    backend: &GenBackend,
    description: &str,
    question: &str,
    temperature: f64,
) -> Result<String, BackendError> {
    let prompt = prompts::render_reasoning(description, question);
    let request = ChatRequest {
        model: backend.model().to_string(),
        messages: vec![ChatMessage::user_text(prompt)],
        temperature,
    };
    backend.generate(RequestRole::Reasoning, &request)
}

fn dropped(sample: &VqaSample, meta: PipelineMeta, reason: DropReason) -> CotRecord {
    CotRecord {
        image_ref: sample.image_ref.clone(),
        question: sample.question.clone(),
        think_text: String::new(),
        answer_text: String::new(),
        ground_truth: sample.ground_truth.clone(),
        pipeline_meta: meta,
        kept: false,
        drop_reason: Some(reason),
    }
}

/// Judge one candidate reasoning text: parse tags, match the answer, run the
/// filter rules, and rewrite the think text of kept records.
pub fn filter_record(
    reasoning_text: &str,
    sample: &VqaSample,
    rewrites: &[RewriteRule],
    filters: &FilterConfig,
    meta: PipelineMeta,
) -> CotRecord {
    let parsed = match parse_tagged(reasoning_text) {
        Ok(p) => p,
        Err(_) => return dropped(sample, meta, DropReason::FormatInvalid),
    };
    let rule = AnswerMatchRule::default_for(&sample.ground_truth);
    if !rule.check(&parsed.answer_text, &sample.ground_truth).matched {
        return dropped(sample, meta, DropReason::AnswerMismatch);
    }
    let think = parsed.think_text.trim();
    if think.split_whitespace().count() > filters.max_think_words {
        return dropped(sample, meta, DropReason::ThinkTooLong);
    }
    if filters.banned_phrase_in(think).is_some() {
        return dropped(sample, meta, DropReason::BannedPhrase);
    }
    if filters.contradiction_check {
        if let Some(claim) = filters.trailing_claim(think) {
            if !rule.check(claim, parsed.answer_text.trim()).matched {
                return dropped(sample, meta, DropReason::Inconsistency);
            }
        }
    }
    CotRecord {
        image_ref: sample.image_ref.clone(),
        question: sample.question.clone(),
        think_text: rules::apply_rewrites(think, rewrites),
        answer_text: parsed.answer_text.trim().to_string(),
        ground_truth: sample.ground_truth.clone(),
        pipeline_meta: meta,
        kept: true,
        drop_reason: None,
    }
}

/// Run the full modality-bridging chain for one sample. Backend failures
/// mark the record dropped (`backend_error`); the pipeline keeps going.
pub fn process_sample(ctx: &PipelineContext, sample: &VqaSample) -> CotRecord {
    let mut meta = PipelineMeta {
        pseudo_cot: String::new(),
        description: String::new(),
        mllm_backend: ctx.mllm.id(),
        reasoning_backend: ctx.reasoning.id(),
        timestamp: ctx.timestamp.clone(),
    };
    let pseudo = match gen_pseudo_cot(&ctx.mllm, sample, ctx.temperature) {
        Ok(text) => text,
        Err(_) => return dropped(sample, meta, DropReason::BackendError),
    };
    meta.pseudo_cot = pseudo.clone();
    let description = match gen_description(&ctx.mllm, sample, &pseudo, ctx.temperature) {
        Ok(text) => text,
        Err(_) => return dropped(sample, meta, DropReason::BackendError),
    };
    meta.description = description.clone();
    let reasoning = match gen_reasoning(&ctx.reasoning, &description, &sample.question, ctx.temperature)
    {
        Ok(text) => text,
        Err(_) => return dropped(sample, meta, DropReason::BackendError),
    };
    filter_record(&reasoning, sample, &ctx.rewrites, &ctx.filters, meta)
}

/// Process samples with bounded parallelism; output order follows input
/// order regardless of worker count.
pub fn run_pipeline(ctx: &PipelineContext, samples: &[VqaSample]) -> Vec<CotRecord> {
    parallel_map(ctx.max_in_flight.max(1), samples.len(), |i| {
        process_sample(ctx, &samples[i])
    })
}

/// Dataset composition summary, written alongside the dataset.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub kept: usize,
    pub dropped: usize,
    pub dropped_by_reason: BTreeMap<String, usize>,
}

impl Manifest {
    pub fn from_records<'a>(records: impl IntoIterator<Item = &'a CotRecord>) -> Self {
        let mut kept = 0;
        let mut dropped = 0;
        let mut by_reason = BTreeMap::new();
        for record in records {
            if record.kept {
                kept += 1;
            } else {
                dropped += 1;
                let reason = record
                    .drop_reason
                    .map(|r| r.as_str())
                    .unwrap_or("unspecified");
                *by_reason.entry(reason.to_string()).or_insert(0) += 1;
            }
        }
        Self {
            kept,
            dropped,
            dropped_by_reason: by_reason,
        }
    }
}

/// Path of the manifest written next to a dataset file.
pub fn manifest_path(dataset_path: &Path) -> std::path::PathBuf {
    let mut name = dataset_path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| "dataset".to_string());
    name.push_str(".manifest.json");
    dataset_path.with_file_name(name)
}

/// Write kept records as one JSON object per line (after an optional
/// artifact header line) and the manifest alongside. Re-running over
/// identical inputs yields byte-identical files.
pub fn assemble_dataset(
    records: &[CotRecord],
    out_path: &Path,
    header: Option<&ArtifactHeader>,
) -> std::io::Result<Manifest> {
    if let Some(parent) = out_path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    let mut file = std::io::BufWriter::new(std::fs::File::create(out_path)?);
    if let Some(header) = header {
        writeln!(file, "{}", serde_json::to_string(header)?)?;
    }
    for record in records.iter().filter(|r| r.kept) {
        writeln!(file, "{}", serde_json::to_string(record)?)?;
    }
    file.flush()?;
    let manifest = Manifest::from_records(records);
    std::fs::write(
        manifest_path(out_path),
        serde_json::to_string_pretty(&manifest)?,
    )?;
    Ok(manifest)
}
