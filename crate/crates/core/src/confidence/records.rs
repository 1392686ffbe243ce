use std::collections::{HashMap, HashSet};
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{parse_verbalized, ConfidenceExtractor};
use crate::backend::BatchEntry;
use crate::data::Question;
use crate::error::ConfidenceError;
use crate::io::write_atomic;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecordStatus {
    Ok,
    ParseFailed,
    InternalFailed,
    BackendFailed,
}

/// One question's joined outcome. `status == Ok` exactly when every optional
/// field is present.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceRecord {
    pub question_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub predicted_label: Option<char>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c_v: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c_i: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub correct: Option<bool>,
    pub status: RecordStatus,
}

impl ConfidenceRecord {
    pub fn failed(question_id: impl Into<String>, status: RecordStatus) -> Self {
        Self {
            question_id: question_id.into(),
            predicted_label: None,
            c_v: None,
            c_i: None,
            correct: None,
            status,
        }
    }

    pub fn is_ok(&self) -> bool {
        self.status == RecordStatus::Ok
    }

    /// `(c_v, c_i)` for ok records.
    pub fn confidences(&self) -> Option<(f64, f64)> {
        match (self.status, self.c_v, self.c_i) {
            (RecordStatus::Ok, Some(v), Some(i)) => Some((v, i)),
            _ => None,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        let all_present = self.predicted_label.is_some()
            && self.c_v.is_some()
            && self.c_i.is_some()
            && self.correct.is_some();
        if self.is_ok() != all_present {
            return Err(format!(
                "status {:?} inconsistent with field presence",
                self.status
            ));
        }
        for (name, v) in [("c_v", self.c_v), ("c_i", self.c_i)] {
            if let Some(v) = v {
                if !(0.0..=100.0).contains(&v) {
                    return Err(format!("{name} {v} outside [0, 100]"));
                }
            }
        }
        if let Some(l) = self.predicted_label {
            if !l.is_ascii_uppercase() {
                return Err(format!("predicted_label `{l}` is not an uppercase letter"));
            }
        }
        Ok(())
    }
}

/// Counters that do not fail a record.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct Diagnostics {
    pub repeated_probability_marker: usize,
    pub parse_failed: usize,
    pub internal_failed: usize,
    pub backend_failed: usize,
}

pub fn build_records(
    questions: &[Question],
    results: &[BatchEntry],
    extractor: &dyn ConfidenceExtractor,
) -> Result<Vec<ConfidenceRecord>, ConfidenceError> {
    build_records_with_diagnostics(questions, results, extractor).map(|(r, _)| r)
}

/// One record per question, in question order. Every question needs exactly
/// one batch entry with its id, and every entry a question.
pub fn build_records_with_diagnostics(
    questions: &[Question],
    results: &[BatchEntry],
    extractor: &dyn ConfidenceExtractor,
) -> Result<(Vec<ConfidenceRecord>, Diagnostics), ConfidenceError> {
    let by_id: HashMap<&str, &BatchEntry> =
        results.iter().map(|e| (e.question_id.as_str(), e)).collect();
    let known: HashSet<&str> = questions.iter().map(|q| q.id.as_str()).collect();
    if let Some(stray) = results.iter().find(|e| !known.contains(e.question_id.as_str())) {
        return Err(ConfidenceError::UnmatchedQuestionId(stray.question_id.clone()));
    }
    let mut diag = Diagnostics::default();
    let mut out = Vec::with_capacity(questions.len());
    for q in questions {
        let entry = by_id
            .get(q.id.as_str())
            .ok_or_else(|| ConfidenceError::UnmatchedQuestionId(q.id.clone()))?;
        let record = match &entry.outcome {
            Err(_) => {
                diag.backend_failed += 1;
                ConfidenceRecord::failed(&q.id, RecordStatus::BackendFailed)
            }
            Ok(result) => match parse_verbalized(&result.text) {
                Err(_) => {
                    diag.parse_failed += 1;
                    ConfidenceRecord::failed(&q.id, RecordStatus::ParseFailed)
                }
                Ok(verbal) => {
                    if verbal.has_repeated_marker() {
                        diag.repeated_probability_marker += 1;
                    }
                    match extractor.extract(result, &verbal) {
                        Ok(c_i) => ConfidenceRecord {
                            question_id: q.id.clone(),
                            predicted_label: Some(verbal.label),
                            c_v: Some(verbal.confidence),
                            c_i: Some(c_i),
                            correct: Some(verbal.label == q.gold()),
                            status: RecordStatus::Ok,
                        },
                        Err(_) => {
                            diag.internal_failed += 1;
                            ConfidenceRecord {
                                predicted_label: Some(verbal.label),
                                c_v: Some(verbal.confidence),
                                ..ConfidenceRecord::failed(&q.id, RecordStatus::InternalFailed)
                            }
                        }
                    }
                }
            },
        };
        out.push(record);
    }
    Ok((out, diag))
}

/// Share of records whose status is not `ok`.
pub fn extraction_failure_rate(records: &[ConfidenceRecord]) -> Result<f64, ConfidenceError> {
    if records.is_empty() {
        return Err(ConfidenceError::EmptyInput);
    }
    let failed = records.iter().filter(|r| !r.is_ok()).count();
    Ok(failed as f64 / records.len() as f64)
}

#[derive(Debug, Error)]
pub enum RecordsFileError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("records schema error at line {line}: {reason}")]
    Schema { line: usize, reason: String },
}

pub fn records_to_jsonl(records: &[ConfidenceRecord]) -> String {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r).expect("record serializes"));
        out.push('\n');
    }
    out
}

pub fn records_from_jsonl(text: &str) -> Result<Vec<ConfidenceRecord>, RecordsFileError> {
    let mut out = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let schema = |reason: String| RecordsFileError::Schema {
            line: idx + 1,
            reason,
        };
        let rec: ConfidenceRecord = serde_json::from_str(line).map_err(|e| schema(e.to_string()))?;
        rec.validate().map_err(schema)?;
        out.push(rec);
    }
    Ok(out)
}

pub fn write_records(path: impl AsRef<Path>, records: &[ConfidenceRecord]) -> Result<(), RecordsFileError> {
    let path = path.as_ref();
    write_atomic(path, records_to_jsonl(records).as_bytes()).map_err(|source| RecordsFileError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn read_records(path: impl AsRef<Path>) -> Result<Vec<ConfidenceRecord>, RecordsFileError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| RecordsFileError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    records_from_jsonl(&text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::{GenerationResult, TokenLogprob};
    use crate::confidence::TokenProbability;
    use crate::data::Choice;
    use crate::error::BackendError;

    fn question(id: &str, gold: &str) -> Question {
        Question {
            id: id.into(),
            subject: String::new(),
            stem: "s".into(),
            choices: ["A", "B", "C", "D"]
                .iter()
                .map(|l| Choice {
                    label: l.to_string(),
                    text: "t".into(),
                })
                .collect(),
            gold_label: gold.into(),
        }
    }

    fn ok_entry(id: &str, letter: char, prob: &str) -> BatchEntry {
        let pieces = ["Guess:".to_string(), format!(" {letter}"), format!("\nProbability: {prob}")];
        let tokens: Vec<TokenLogprob> = pieces
            .iter()
            .map(|p| TokenLogprob {
                token_text: p.clone(),
                logprob: if p.starts_with(' ') { 0.8f64.ln() } else { 0.0 },
                alternatives: vec![],
            })
            .collect();
        BatchEntry {
            question_id: id.into(),
            outcome: Ok(GenerationResult {
                question_id: id.into(),
                text: pieces.concat(),
                tokens,
            }),
        }
    }

    #[test]
    fn correctness_against_gold() {
        let qs = [question("a", "B"), question("b", "B")];
        let entries = [ok_entry("a", 'B', "70%"), ok_entry("b", 'C', "70%")];
        let recs = build_records(&qs, &entries, &TokenProbability).unwrap();
        assert_eq!(recs[0].correct, Some(true));
        assert_eq!(recs[1].correct, Some(false));
        assert!((recs[0].c_i.unwrap() - 80.0).abs() < 1e-9);
        assert_eq!(recs[0].c_v, Some(70.0));
    }

    #[test]
    fn failures_keep_status() {
        let qs = [question("p", "A"), question("i", "A"), question("b", "A")];
        let mut internal = ok_entry("i", 'A', "50%");
        if let Ok(r) = &mut internal.outcome {
            // Merge the letter into the marker token so no token isolates it.
            let joined = format!("{}{}", r.tokens[0].token_text, r.tokens[1].token_text);
            r.tokens.remove(1);
            r.tokens[0].token_text = joined;
        }
        let entries = [
            ok_entry("p", 'A', "lots"),
            internal,
            BatchEntry {
                question_id: "b".into(),
                outcome: Err(BackendError::MissingLogprobs),
            },
        ];
        let (recs, diag) = build_records_with_diagnostics(&qs, &entries, &TokenProbability).unwrap();
        assert_eq!(recs[0].status, RecordStatus::ParseFailed);
        assert_eq!((recs[0].c_v, recs[0].c_i, recs[0].correct), (None, None, None));
        assert_eq!(recs[1].status, RecordStatus::InternalFailed);
        assert_eq!(recs[1].c_i, None);
        assert_eq!(recs[2].status, RecordStatus::BackendFailed);
        assert_eq!((diag.parse_failed, diag.internal_failed, diag.backend_failed), (1, 1, 1));
        for r in &recs {
            r.validate().unwrap();
        }
    }

    #[test]
    fn ten_ok_records() {
        let qs: Vec<_> = (0..10).map(|i| question(&format!("q{i}"), "A")).collect();
        let entries: Vec<_> = (0..10).map(|i| ok_entry(&format!("q{i}"), 'A', "90%")).collect();
        let recs = build_records(&qs, &entries, &TokenProbability).unwrap();
        assert_eq!(recs.len(), 10);
        assert!(recs.iter().all(ConfidenceRecord::is_ok));
    }

    #[test]
    fn join_mismatch() {
        let qs = [question("a", "A")];
        assert_eq!(
            build_records(&qs, &[ok_entry("z", 'A', "1%")], &TokenProbability),
            Err(ConfidenceError::UnmatchedQuestionId("z".into()))
        );
        assert_eq!(
            build_records(&qs, &[], &TokenProbability),
            Err(ConfidenceError::UnmatchedQuestionId("a".into()))
        );
    }

    #[test]
    fn repeated_marker_counted_not_failed() {
        let qs = [question("a", "A")];
        let (recs, diag) = build_records_with_diagnostics(
            &qs,
            &[ok_entry("a", 'A', "30%\nProbability: 40%")],
            &TokenProbability,
        )
        .unwrap();
        assert!(recs[0].is_ok());
        assert_eq!(diag.repeated_probability_marker, 1);
    }

    #[test]
    fn failure_rate() {
        let mut recs: Vec<_> = (0..95)
            .map(|i| ConfidenceRecord {
                question_id: format!("{i}"),
                predicted_label: Some('A'),
                c_v: Some(50.0),
                c_i: Some(50.0),
                correct: Some(true),
                status: RecordStatus::Ok,
            })
            .collect();
        assert_eq!(extraction_failure_rate(&recs).unwrap(), 0.0);
        recs.extend((0..5).map(|i| ConfidenceRecord::failed(format!("f{i}"), RecordStatus::ParseFailed)));
        assert_eq!(extraction_failure_rate(&recs).unwrap(), 0.05);
        assert_eq!(extraction_failure_rate(&[]), Err(ConfidenceError::EmptyInput));
    }

    #[test]
    fn records_file_omits_absent_fields() {
        let line = records_to_jsonl(&[ConfidenceRecord::failed("x", RecordStatus::ParseFailed)]);
        assert_eq!(line, "{\"question_id\":\"x\",\"status\":\"parse_failed\"}\n");
        assert_eq!(records_from_jsonl(&line).unwrap().len(), 1);
    }

    #[test]
    fn records_file_rejects_inconsistent_status() {
        let bad = r#"{"question_id":"x","status":"ok"}"#;
        assert!(matches!(
            records_from_jsonl(bad),
            Err(RecordsFileError::Schema { line: 1, .. })
        ));
        let bad = r#"{"question_id":"x","predicted_label":"A","c_v":120,"c_i":3,"correct":true,"status":"ok"}"#;
        assert!(records_from_jsonl(bad).is_err());
    }
}
