//! End-to-end steps shared by the CLI and tests.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backend::{generate_batch, Backend, GenerationRequest, DEFAULT_MAX_NEW_TOKENS, DEFAULT_TOP_LOGPROBS};
use crate::confidence::{
    build_records_with_diagnostics, extraction_failure_rate, ConfidenceExtractor, ConfidenceRecord,
    Diagnostics,
};
use crate::data::Question;
use crate::error::{BackendError, ConfidenceError, PreferenceError};
use crate::io::write_atomic;
use crate::preference::{make_pair, PairOutcome, PairStats, PreferencePair, SkipReason};
use crate::prompting::render_prompt;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("every request failed; first error: {0}")]
    AllRequestsFailed(BackendError),
    #[error(transparent)]
    Join(#[from] ConfidenceError),
    #[error(transparent)]
    Preference(#[from] PreferenceError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("responses schema error at line {line}: {reason}")]
    Schema { line: usize, reason: String },
}

/// Raw exchange for one question: the prompt sent and the text received.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResponseRecord {
    pub question_id: String,
    pub prompt: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub response: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GenerateOptions {
    pub max_new_tokens: usize,
    pub temperature: f64,
    pub top_logprobs: usize,
    pub parallelism: usize,
}

impl Default for GenerateOptions {
    fn default() -> Self {
        Self {
            max_new_tokens: DEFAULT_MAX_NEW_TOKENS,
            temperature: 0.0,
            top_logprobs: DEFAULT_TOP_LOGPROBS,
            parallelism: 8,
        }
    }
}

#[derive(Debug, Clone)]
pub struct GenerateOutput {
    pub records: Vec<ConfidenceRecord>,
    pub responses: Vec<ResponseRecord>,
    pub diagnostics: Diagnostics,
    pub failure_rate: f64,
}

/// Renders prompts, runs the batch and extracts both confidences.
///
/// Individual failures become non-ok records. If every request fails the
/// backend is treated as down and nothing is returned.
pub fn run_generation(
    questions: &[Question],
    backend: &dyn Backend,
    extractor: &dyn ConfidenceExtractor,
    options: &GenerateOptions,
) -> Result<GenerateOutput, PipelineError> {
    let requests: Vec<GenerationRequest> = questions
        .iter()
        .map(|q| GenerationRequest {
            prompt: render_prompt(q),
            max_new_tokens: options.max_new_tokens,
            temperature: options.temperature,
            top_logprobs: options.top_logprobs,
        })
        .collect();
    let entries = generate_batch(backend, &requests, options.parallelism);
    if !entries.is_empty() && entries.iter().all(|e| e.is_failed()) {
        let first = entries[0].outcome.clone().expect_err("all entries failed");
        return Err(PipelineError::AllRequestsFailed(first));
    }
    let (records, diagnostics) = build_records_with_diagnostics(questions, &entries, extractor)?;
    let responses = requests
        .iter()
        .zip(&entries)
        .map(|(req, entry)| ResponseRecord {
            question_id: entry.question_id.clone(),
            prompt: req.prompt.text.clone(),
            response: entry.outcome.as_ref().ok().map(|r| r.text.clone()),
            error: entry.outcome.as_ref().err().map(ToString::to_string),
        })
        .collect();
    let failure_rate = if records.is_empty() {
        0.0
    } else {
        extraction_failure_rate(&records)?
    };
    Ok(GenerateOutput {
        records,
        responses,
        diagnostics,
        failure_rate,
    })
}

/// Pairs every ok record with its response. With `correct_only`, records
/// with a wrong answer are skipped as `incorrect`.
pub fn build_preference_set(
    records: &[ConfidenceRecord],
    responses: &[ResponseRecord],
    correct_only: bool,
) -> Result<(Vec<PreferencePair>, PairStats), PipelineError> {
    let by_id: HashMap<&str, &ResponseRecord> =
        responses.iter().map(|r| (r.question_id.as_str(), r)).collect();
    let mut pairs = Vec::new();
    let mut stats = PairStats::default();
    for record in records {
        let resp = by_id
            .get(record.question_id.as_str())
            .ok_or_else(|| ConfidenceError::UnmatchedQuestionId(record.question_id.clone()))?;
        let outcome = if !record.is_ok() {
            PairOutcome::Skipped(SkipReason::ExtractionFailed)
        } else if correct_only && record.correct != Some(true) {
            PairOutcome::Skipped(SkipReason::Incorrect)
        } else {
            let text = resp.response.as_deref().ok_or_else(|| {
                PreferenceError::SubstitutionSiteNotFound(record.question_id.clone())
            })?;
            make_pair(&resp.prompt, record, text)?
        };
        stats.record(&outcome);
        if let PairOutcome::Pair(p) = outcome {
            pairs.push(p);
        }
    }
    Ok((pairs, stats))
}

pub fn write_responses(path: impl AsRef<Path>, responses: &[ResponseRecord]) -> Result<(), PipelineError> {
    let path = path.as_ref();
    let mut body = String::new();
    for r in responses {
        body.push_str(&serde_json::to_string(r).expect("response serializes"));
        body.push('\n');
    }
    write_atomic(path, body.as_bytes()).map_err(|source| PipelineError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn read_responses(path: impl AsRef<Path>) -> Result<Vec<ResponseRecord>, PipelineError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| PipelineError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| PipelineError::Schema {
                line: i + 1,
                reason: e.to_string(),
            })
        })
        .collect()
}
