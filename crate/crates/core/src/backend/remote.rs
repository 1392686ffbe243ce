//! Client for chat-completions servers that return token logprobs.

use std::time::Duration;

use reqwest::blocking::Client;
use reqwest::StatusCode;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{Alternative, Backend, GenerationRequest, GenerationResult, TokenLogprob};
use crate::error::BackendError;

const MAX_BACKOFF: Duration = Duration::from_secs(30);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RemoteConfig {
    pub base_url: String,
    pub path: String,
    pub model: String,
    pub api_key: Option<String>,
    pub timeout_secs: f64,
    /// Total attempts per request, including the first.
    pub max_attempts: u32,
    pub backoff_base_ms: u64,
}

impl Default for RemoteConfig {
    fn default() -> Self {
        Self {
            base_url: "http://127.0.0.1:8000".into(),
            path: "/v1/chat/completions".into(),
            model: String::new(),
            api_key: None,
            timeout_secs: 60.0,
            max_attempts: 4,
            backoff_base_ms: 500,
        }
    }
}

impl RemoteConfig {
    pub fn url(&self) -> String {
        format!(
            "{}/{}",
            self.base_url.trim_end_matches('/'),
            self.path.trim_start_matches('/')
        )
    }
}

pub struct ChatCompletionsBackend {
    config: RemoteConfig,
    client: Client,
}

enum Attempt {
    Retry(String),
    Fatal(BackendError),
}

impl ChatCompletionsBackend {
    pub fn new(config: RemoteConfig) -> Result<Self, BackendError> {
        if config.max_attempts == 0 {
            return Err(BackendError::Config("max_attempts must be at least 1".into()));
        }
        if !(config.timeout_secs > 0.0 && config.timeout_secs.is_finite()) {
            return Err(BackendError::Config(format!(
                "timeout_secs {} must be positive",
                config.timeout_secs
            )));
        }
        let client = Client::builder()
            .timeout(Duration::from_secs_f64(config.timeout_secs))
            .build()
            .map_err(|e| BackendError::Config(e.to_string()))?;
        Ok(Self { config, client })
    }

    pub fn config(&self) -> &RemoteConfig {
        &self.config
    }

    fn body(&self, request: &GenerationRequest) -> Value {
        json!({
            "model": self.config.model,
            "messages": [{"role": "user", "content": request.prompt.text}],
            "temperature": request.temperature,
            "max_tokens": request.max_new_tokens,
            "logprobs": true,
            "top_logprobs": request.top_logprobs,
        })
    }

    fn attempt(&self, body: &Value, question_id: &str) -> Result<GenerationResult, Attempt> {
        let mut req = self.client.post(self.config.url()).json(body);
        if let Some(key) = self.config.api_key.as_deref().filter(|k| !k.is_empty()) {
            req = req.bearer_auth(key);
        }
        let resp = req.send().map_err(|e| Attempt::Retry(e.to_string()))?;
        let status = resp.status();
        if status == StatusCode::TOO_MANY_REQUESTS || status.is_server_error() {
            return Err(Attempt::Retry(format!("HTTP {status}")));
        }
        let text = resp.text().map_err(|e| Attempt::Retry(e.to_string()))?;
        if !status.is_success() {
            return Err(Attempt::Fatal(BackendError::Rejected(format!(
                "HTTP {status}: {}",
                truncate(&text, 200)
            ))));
        }
        let value: Value = serde_json::from_str(&text)
            .map_err(|e| Attempt::Fatal(BackendError::Malformed(e.to_string())))?;
        parse_response(&value, question_id).map_err(Attempt::Fatal)
    }

    fn backoff(&self, attempt: u32) -> Duration {
        let factor = 1u64 << (attempt - 1).min(20);
        Duration::from_millis(self.config.backoff_base_ms.saturating_mul(factor)).min(MAX_BACKOFF)
    }
}

fn truncate(s: &str, max: usize) -> &str {
    match s.char_indices().nth(max) {
        Some((i, _)) => &s[..i],
        None => s,
    }
}

impl Backend for ChatCompletionsBackend {
    fn name(&self) -> &str {
        "chat-completions"
    }

    /// Retries transport errors, 429 and 5xx with exponential backoff up to
    /// `max_attempts`; other failures return immediately.
    fn generate(&self, request: &GenerationRequest) -> Result<GenerationResult, BackendError> {
        let body = self.body(request);
        let mut last_error = String::new();
        for attempt in 1..=self.config.max_attempts {
            match self.attempt(&body, &request.prompt.question_id) {
                Ok(result) => return Ok(result),
                Err(Attempt::Fatal(e)) => return Err(e),
                Err(Attempt::Retry(msg)) => {
                    log::debug!(
                        "{}: attempt {attempt}/{} failed: {msg}",
                        request.prompt.question_id,
                        self.config.max_attempts
                    );
                    last_error = msg;
                    if attempt < self.config.max_attempts {
                        std::thread::sleep(self.backoff(attempt));
                    }
                }
            }
        }
        Err(BackendError::Unavailable {
            attempts: self.config.max_attempts,
            last_error,
        })
    }
}

/// Extracts completion text and per-token logprobs from a chat-completions
/// response body.
pub(crate) fn parse_response(value: &Value, question_id: &str) -> Result<GenerationResult, BackendError> {
    let choice = value
        .get("choices")
        .and_then(|c| c.get(0))
        .ok_or_else(|| BackendError::Malformed("response has no choices".into()))?;
    let text = choice
        .pointer("/message/content")
        .and_then(Value::as_str)
        .ok_or_else(|| BackendError::Malformed("choice has no message content".into()))?
        .to_string();
    let content = choice
        .pointer("/logprobs/content")
        .and_then(Value::as_array)
        .ok_or(BackendError::MissingLogprobs)?;
    let tokens = content
        .iter()
        .map(parse_token)
        .collect::<Result<Vec<_>, _>>()?;
    let result = GenerationResult {
        question_id: question_id.to_string(),
        text,
        tokens,
    };
    result.check()?;
    Ok(result)
}

fn parse_token(v: &Value) -> Result<TokenLogprob, BackendError> {
    let token_text = v
        .get("token")
        .and_then(Value::as_str)
        .ok_or_else(|| BackendError::Malformed("token entry without `token`".into()))?
        .to_string();
    let logprob = v
        .get("logprob")
        .and_then(Value::as_f64)
        .ok_or(BackendError::MissingLogprobs)?;
    let alternatives = match v.get("top_logprobs").and_then(Value::as_array) {
        Some(arr) => arr
            .iter()
            .map(|a| {
                Ok(Alternative {
                    token_text: a
                        .get("token")
                        .and_then(Value::as_str)
                        .ok_or_else(|| BackendError::Malformed("alternative without `token`".into()))?
                        .to_string(),
                    logprob: a
                        .get("logprob")
                        .and_then(Value::as_f64)
                        .ok_or(BackendError::MissingLogprobs)?,
                })
            })
            .collect::<Result<Vec<_>, BackendError>>()?,
        None => Vec::new(),
    };
    Ok(TokenLogprob {
        token_text,
        logprob,
        alternatives,
    })
}
