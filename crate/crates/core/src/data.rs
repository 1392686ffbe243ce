//! Normalized multiple-choice datasets.
//!
//! Every source dataset is converted offline into one newline-delimited JSON
//! schema:
//!
//! ```json
//! {"id":"q1","subject":"","question":"2+2=?","choices":[{"label":"A","text":"3"},{"label":"B","text":"4"}],"answer_label":"B"}
//! ```
//!
//! Subject-less datasets use the empty string for `subject`.

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::DataError;
use crate::io::write_atomic;

pub const MIN_CHOICES: usize = 2;
pub const MAX_CHOICES: usize = 26;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Choice {
    pub label: String,
    pub text: String,
}

/// One validated multiple-choice item.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Question {
    pub id: String,
    pub subject: String,
    #[serde(rename = "question")]
    pub stem: String,
    pub choices: Vec<Choice>,
    #[serde(rename = "answer_label")]
    pub gold_label: String,
}

impl Question {
    /// Checks the structural invariants: 2..=26 choices labelled `A`, `B`, ...
    /// in order, and a gold label naming one of them.
    pub fn validate(&self) -> Result<(), String> {
        if self.id.is_empty() {
            return Err("empty id".into());
        }
        let n = self.choices.len();
        if !(MIN_CHOICES..=MAX_CHOICES).contains(&n) {
            return Err(format!(
                "expected {MIN_CHOICES}..={MAX_CHOICES} choices, found {n}"
            ));
        }
        for (i, choice) in self.choices.iter().enumerate() {
            let expected = (b'A' + i as u8) as char;
            if choice.label.len() != 1 || !choice.label.starts_with(expected) {
                return Err(format!(
                    "choice {} has label `{}`, expected `{expected}`",
                    i + 1,
                    choice.label
                ));
            }
        }
        if !self.choices.iter().any(|c| c.label == self.gold_label) {
            return Err(format!(
                "answer_label `{}` is not one of the choice labels",
                self.gold_label
            ));
        }
        Ok(())
    }

    pub fn labels(&self) -> impl Iterator<Item = char> + '_ {
        self.choices.iter().filter_map(|c| c.label.chars().next())
    }

    pub fn gold(&self) -> char {
        self.gold_label.chars().next().unwrap_or('A')
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sampling {
    pub per_subject: usize,
    pub seed: u64,
}

/// Where a dataset lives and how to subsample it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetSpec {
    pub name: String,
    #[serde(default)]
    pub split: String,
    pub path: PathBuf,
    #[serde(default)]
    pub sampling: Option<Sampling>,
}

impl DatasetSpec {
    /// Loads the file and applies balanced sampling when configured.
    pub fn load(&self) -> Result<Vec<Question>, DataError> {
        let questions = load_dataset(&self.path)?;
        match self.sampling {
            Some(s) => sample_balanced(&questions, s.per_subject, s.seed),
            None => Ok(questions),
        }
    }
}

/// Loads every record of a normalized dataset file in file order.
pub fn load_dataset(path: impl AsRef<Path>) -> Result<Vec<Question>, DataError> {
    let path = path.as_ref();
    let io_err = |source| DataError::Io {
        path: path.to_path_buf(),
        source,
    };
    let file = fs::File::open(path).map_err(io_err)?;
    parse_dataset(BufReader::new(file)).map_err(|e| match e {
        ReadError::Io(source) => io_err(source),
        ReadError::Data(e) => e,
    })
}

enum ReadError {
    Io(std::io::Error),
    Data(DataError),
}

fn parse_dataset(reader: impl BufRead) -> Result<Vec<Question>, ReadError> {
    let mut out = Vec::new();
    let mut seen = HashSet::new();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(ReadError::Io)?;
        if line.trim().is_empty() {
            continue;
        }
        let q: Question = serde_json::from_str(&line).map_err(|e| {
            ReadError::Data(DataError::Schema {
                line: line_no,
                reason: e.to_string(),
            })
        })?;
        q.validate().map_err(|reason| {
            ReadError::Data(DataError::Schema {
                line: line_no,
                reason,
            })
        })?;
        if !seen.insert(q.id.clone()) {
            return Err(ReadError::Data(DataError::DuplicateId {
                id: q.id,
                line: line_no,
            }));
        }
        out.push(q);
    }
    Ok(out)
}

/// Parses dataset records from an in-memory string.
pub fn parse_dataset_str(text: &str) -> Result<Vec<Question>, DataError> {
    parse_dataset(text.as_bytes()).map_err(|e| match e {
        ReadError::Io(source) => DataError::Io {
            path: PathBuf::from("<memory>"),
            source,
        },
        ReadError::Data(e) => e,
    })
}

pub fn to_jsonl(questions: &[Question]) -> String {
    let mut out = String::new();
    for q in questions {
        out.push_str(&serde_json::to_string(q).expect("question serializes"));
        out.push('\n');
    }
    out
}

pub fn write_dataset(questions: &[Question], path: impl AsRef<Path>) -> Result<(), DataError> {
    let path = path.as_ref();
    write_atomic(path, to_jsonl(questions).as_bytes()).map_err(|source| DataError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Draws exactly `per_subject` questions from every distinct subject without
/// replacement. Output is sorted by `(subject, id)`.
pub fn sample_balanced(
    questions: &[Question],
    per_subject: usize,
    seed: u64,
) -> Result<Vec<Question>, DataError> {
    if per_subject == 0 {
        return Err(DataError::ZeroSampleCount);
    }
    let mut by_subject: BTreeMap<&str, Vec<&Question>> = BTreeMap::new();
    for q in questions {
        by_subject.entry(q.subject.as_str()).or_default().push(q);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(per_subject * by_subject.len());
    for (subject, mut pool) in by_subject {
        if pool.len() < per_subject {
            return Err(DataError::InsufficientSubjectPool {
                subject: subject.to_string(),
                available: pool.len(),
                requested: per_subject,
            });
        }
        // Input order must not leak into the draw.
        pool.sort_by(|a, b| a.id.cmp(&b.id));
        let picked = index::sample(&mut rng, pool.len(), per_subject);
        let mut chosen: Vec<&Question> = picked.into_iter().map(|i| pool[i]).collect();
        chosen.sort_by(|a, b| a.id.cmp(&b.id));
        out.extend(chosen.into_iter().cloned());
    }
    Ok(out)
}

/// Placeholder questions for exercising the pipeline without a real
/// dataset: `n` items spread round-robin over `subjects` subjects, each with
/// `choices` options and a seeded gold label.
pub fn synthetic_questions(n: usize, subjects: usize, choices: usize, seed: u64) -> Vec<Question> {
    let choices = choices.clamp(MIN_CHOICES, MAX_CHOICES);
    let subjects = subjects.max(1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let gold = rng.random_range(0..choices);
            Question {
                id: format!("syn-{i:05}"),
                subject: if subjects == 1 { String::new() } else { format!("subject-{}", i % subjects) },
                stem: format!("Synthetic question {i}?"),
                choices: (0..choices)
                    .map(|k| Choice {
                        label: ((b'A' + k as u8) as char).to_string(),
                        text: format!("option {k} of {i}"),
                    })
                    .collect(),
                gold_label: ((b'A' + gold as u8) as char).to_string(),
            }
        })
        .collect()
}
