//! Preference pairs for DPO-style training.
//!
//! The chosen response is the model's own response with its stated
//! probability replaced by its internal confidence; the rejected response is
//! the original, byte for byte.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::confidence::{parse_verbalized, ConfidenceRecord};
use crate::error::PreferenceError;
use crate::io::write_atomic;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreferencePair {
    pub prompt: String,
    pub chosen: String,
    pub rejected: String,
    pub question_id: String,
    pub c_v_original: f64,
    pub c_i: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SkipReason {
    ExtractionFailed,
    EqualAfterRounding,
    Incorrect,
}

impl fmt::Display for SkipReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SkipReason::ExtractionFailed => "extraction_failed",
            SkipReason::EqualAfterRounding => "equal_after_rounding",
            SkipReason::Incorrect => "incorrect",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum PairOutcome {
    Pair(PreferencePair),
    Skipped(SkipReason),
}

/// Integer percent with a `%` suffix, rounding half away from zero.
pub fn format_confidence(c_i: f64) -> String {
    format!("{}%", c_i.round() as i64)
}

/// Builds the pair for one ok record.
///
/// `original_response` is re-parsed and must yield the record's verbalized
/// confidence; otherwise the substitution site is considered lost.
pub fn make_pair(
    prompt: &str,
    record: &ConfidenceRecord,
    original_response: &str,
) -> Result<PairOutcome, PreferenceError> {
    let Some((c_v, c_i)) = record.confidences() else {
        return Ok(PairOutcome::Skipped(SkipReason::ExtractionFailed));
    };
    let lost = || PreferenceError::SubstitutionSiteNotFound(record.question_id.clone());
    let parsed = parse_verbalized(original_response).map_err(|_| lost())?;
    if parsed.confidence != c_v || Some(parsed.label) != record.predicted_label {
        return Err(lost());
    }
    let span = parsed.probability_span;
    let mut chosen = String::with_capacity(original_response.len() + 4);
    chosen.push_str(&original_response[..span.start]);
    chosen.push_str(&format_confidence(c_i));
    chosen.push_str(&original_response[span.end..]);
    if chosen == original_response {
        return Ok(PairOutcome::Skipped(SkipReason::EqualAfterRounding));
    }
    Ok(PairOutcome::Pair(PreferencePair {
        prompt: prompt.to_string(),
        chosen,
        rejected: original_response.to_string(),
        question_id: record.question_id.clone(),
        c_v_original: c_v,
        c_i,
    }))
}

/// Pairs written and skips by reason.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct PairStats {
    pub pairs: usize,
    pub skipped: BTreeMap<SkipReason, usize>,
}

impl PairStats {
    pub fn record(&mut self, outcome: &PairOutcome) {
        match outcome {
            PairOutcome::Pair(_) => self.pairs += 1,
            PairOutcome::Skipped(r) => *self.skipped.entry(*r).or_default() += 1,
        }
    }

    pub fn merge(&mut self, other: &PairStats) {
        self.pairs += other.pairs;
        for (reason, n) in &other.skipped {
            *self.skipped.entry(*reason).or_default() += n;
        }
    }

    pub fn total_skipped(&self) -> usize {
        self.skipped.values().sum()
    }
}

impl fmt::Display for PairStats {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "pairs written: {}", self.pairs)?;
        for (reason, n) in &self.skipped {
            write!(f, ", skipped {reason}: {n}")?;
        }
        Ok(())
    }
}

pub fn preferences_to_jsonl(pairs: &[PreferencePair]) -> String {
    let mut out = String::new();
    for p in pairs {
        out.push_str(&serde_json::to_string(p).expect("pair serializes"));
        out.push('\n');
    }
    out
}

pub fn preferences_from_jsonl(text: &str) -> Result<Vec<PreferencePair>, PreferenceError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| PreferenceError::Schema {
                line: i + 1,
                reason: e.to_string(),
            })
        })
        .collect()
}

/// Writes one JSON object per line in input order and returns the count.
pub fn write_preferences(pairs: &[PreferencePair], path: impl AsRef<Path>) -> Result<usize, PreferenceError> {
    let path = path.as_ref();
    write_atomic(path, preferences_to_jsonl(pairs).as_bytes()).map_err(|source| PreferenceError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(pairs.len())
}

pub fn read_preferences(path: impl AsRef<Path>) -> Result<Vec<PreferencePair>, PreferenceError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| PreferenceError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    preferences_from_jsonl(&text)
}
