use std::path::PathBuf;

use thiserror::Error;

/// Errors raised while loading, validating or sampling datasets.
#[derive(Debug, Error)]
pub enum DataError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("schema error at line {line}: {reason}")]
    Schema { line: usize, reason: String },
    #[error("duplicate question id `{id}` at line {line}")]
    DuplicateId { id: String, line: usize },
    #[error("subject `{subject}` has {available} questions, {requested} requested")]
    InsufficientSubjectPool {
        subject: String,
        available: usize,
        requested: usize,
    },
    #[error("per-subject sample count must be positive")]
    ZeroSampleCount,
}

/// Errors from a generation backend.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum BackendError {
    #[error("backend unavailable after {attempts} attempt(s): {last_error}")]
    Unavailable { attempts: u32, last_error: String },
    #[error("endpoint response carries no logprob data")]
    MissingLogprobs,
    #[error("malformed backend response: {0}")]
    Malformed(String),
    #[error("request rejected: {0}")]
    Rejected(String),
    #[error("no answer key entry for question `{0}`")]
    UnknownQuestion(String),
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("invalid backend configuration: {0}")]
    Config(String),
}

/// Verbalized-confidence parse failures.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum ParseError {
    #[error("no `Guess:` marker followed by a single letter")]
    GuessNotFound,
    #[error("no `Probability:` marker followed by a number")]
    ProbabilityNotFound,
    #[error("probability {0} outside [0, 100]")]
    ProbabilityOutOfRange(f64),
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum ConfidenceError {
    #[error("no token isolates the answer letter `{0}`")]
    AnswerTokenNotFound(char),
    #[error("generation result carries no tokens")]
    NoTokens,
    #[error("question `{0}` has no matching generation result")]
    UnmatchedQuestionId(String),
    #[error("empty input")]
    EmptyInput,
}

#[derive(Debug, Error)]
pub enum PreferenceError {
    #[error("probability substring not found in response for `{0}`")]
    SubstitutionSiteNotFound(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("schema error at line {line}: {reason}")]
    Schema { line: usize, reason: String },
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum MetricError {
    #[error("empty input")]
    EmptyInput,
    #[error("need at least {required} points, got {got}")]
    TooFewPoints { required: usize, got: usize },
    #[error("series lengths differ: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("series is constant; rank variance is zero")]
    DegenerateSeries,
}
