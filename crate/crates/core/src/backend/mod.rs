//! Generation backends.
//!
//! Every backend implements [`Backend`] and is constructed by name through
//! [`BackendRegistry`]. Two ship with the crate: `mock`, a seeded synthetic
//! model, and `chat-completions`, an HTTP client for servers that expose the
//! chat-completions protocol with token logprobs.

mod mock;
mod registry;
mod remote;

use serde::{Deserialize, Serialize};

pub use mock::{AnswerKey, ConfidenceProfile, InternalDist, MockBackend, VerbalMode};
pub use registry::{BackendFactory, BackendRegistry, BackendSettings};
pub use remote::{ChatCompletionsBackend, RemoteConfig};

use crate::error::BackendError;
use crate::prompting::RenderedPrompt;

pub const DEFAULT_MAX_NEW_TOKENS: usize = 24;
pub const DEFAULT_TOP_LOGPROBS: usize = 20;
pub const MAX_TOP_LOGPROBS: usize = 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationRequest {
    pub prompt: RenderedPrompt,
    pub max_new_tokens: usize,
    pub temperature: f64,
    pub top_logprobs: usize,
}

impl GenerationRequest {
    /// Greedy decoding with the default token budget and 20 alternatives.
    pub fn new(prompt: RenderedPrompt) -> Self {
        Self {
            prompt,
            max_new_tokens: DEFAULT_MAX_NEW_TOKENS,
            temperature: 0.0,
            top_logprobs: DEFAULT_TOP_LOGPROBS,
        }
    }

    pub fn validate(&self) -> Result<(), BackendError> {
        if self.max_new_tokens == 0 {
            return Err(BackendError::InvalidRequest("max_new_tokens must be positive".into()));
        }
        if !(self.temperature >= 0.0 && self.temperature.is_finite()) {
            return Err(BackendError::InvalidRequest(format!(
                "temperature {} must be finite and non-negative",
                self.temperature
            )));
        }
        if !(1..=MAX_TOP_LOGPROBS).contains(&self.top_logprobs) {
            return Err(BackendError::InvalidRequest(format!(
                "top_logprobs {} outside 1..={MAX_TOP_LOGPROBS}",
                self.top_logprobs
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Alternative {
    pub token_text: String,
    pub logprob: f64,
}

/// One generated token with its natural-log probability and the top
/// alternatives the server reported at that position.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenLogprob {
    pub token_text: String,
    pub logprob: f64,
    pub alternatives: Vec<Alternative>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationResult {
    pub question_id: String,
    pub text: String,
    pub tokens: Vec<TokenLogprob>,
}

impl GenerationResult {
    /// Token texts concatenate to `text` and every logprob is `<= 0`.
    pub fn check(&self) -> Result<(), BackendError> {
        let joined: String = self.tokens.iter().map(|t| t.token_text.as_str()).collect();
        if joined != self.text {
            return Err(BackendError::Malformed(
                "token texts do not concatenate to the completion text".into(),
            ));
        }
        let bad = self.tokens.iter().any(|t| {
            !is_logprob(t.logprob) || t.alternatives.iter().any(|a| !is_logprob(a.logprob))
        });
        if bad {
            return Err(BackendError::Malformed("positive or NaN logprob".into()));
        }
        Ok(())
    }
}

/// A generation backend. Implementations must tolerate concurrent callers.
/// NaN and positive values are not log-probabilities.
fn is_logprob(l: f64) -> bool {
    l <= 0.0
}

pub trait Backend: Send + Sync {
    fn name(&self) -> &str;

    fn generate(&self, request: &GenerationRequest) -> Result<GenerationResult, BackendError>;
}

/// Outcome of one request within a batch.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchEntry {
    pub question_id: String,
    pub outcome: Result<GenerationResult, BackendError>,
}

impl BatchEntry {
    pub fn is_failed(&self) -> bool {
        self.outcome.is_err()
    }
}

/// Runs `requests` with at most `parallelism` in flight. Results come back
/// in input order; a failed request is recorded in place and does not abort
/// the rest of the batch.
pub fn generate_batch(
    backend: &dyn Backend,
    requests: &[GenerationRequest],
    parallelism: usize,
) -> Vec<BatchEntry> {
    let run = |req: &GenerationRequest| BatchEntry {
        question_id: req.prompt.question_id.clone(),
        outcome: req.validate().and_then(|_| backend.generate(req)),
    };
    let parallelism = parallelism.max(1);
    if parallelism == 1 {
        return requests.iter().map(run).collect();
    }
    match rayon::ThreadPoolBuilder::new().num_threads(parallelism).build() {
        Ok(pool) => pool.install(|| {
            use rayon::prelude::*;
            requests.par_iter().map(run).collect()
        }),
        Err(e) => {
            log::warn!("could not start worker pool ({e}); running sequentially");
            requests.iter().map(run).collect()
        }
    }
}
