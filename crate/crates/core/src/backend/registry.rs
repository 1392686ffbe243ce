use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{AnswerKey, Backend, ChatCompletionsBackend, ConfidenceProfile, MockBackend, RemoteConfig};
use crate::data::Question;
use crate::error::BackendError;

/// Everything a backend factory may need. Each factory reads only its own
/// section.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BackendSettings {
    pub remote: RemoteConfig,
    pub mock: ConfidenceProfile,
}

pub type BackendFactory =
    fn(&BackendSettings, &[Question]) -> Result<Arc<dyn Backend>, BackendError>;

/// Backends constructible by name.
pub struct BackendRegistry {
    factories: BTreeMap<String, BackendFactory>,
}

impl BackendRegistry {
    pub fn empty() -> Self {
        Self {
            factories: BTreeMap::new(),
        }
    }

    pub fn register(&mut self, name: impl Into<String>, factory: BackendFactory) {
        self.factories.insert(name.into(), factory);
    }

    pub fn names(&self) -> Vec<&str> {
        self.factories.keys().map(String::as_str).collect()
    }

    pub fn build(
        &self,
        name: &str,
        settings: &BackendSettings,
        questions: &[Question],
    ) -> Result<Arc<dyn Backend>, BackendError> {
        let factory = self.factories.get(name).ok_or_else(|| {
            BackendError::Config(format!(
                "unknown backend `{name}` (available: {})",
                self.names().join(", ")
            ))
        })?;
        factory(settings, questions)
    }
}

impl Default for BackendRegistry {
    fn default() -> Self {
        let mut r = Self::empty();
        r.register("mock", |s, qs| {
            Ok(Arc::new(MockBackend::new(s.mock.clone(), AnswerKey::from_questions(qs))?))
        });
        r.register("chat-completions", |s, _| {
            Ok(Arc::new(ChatCompletionsBackend::new(s.remote.clone())?))
        });
        r
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_names() {
        assert_eq!(BackendRegistry::default().names(), ["chat-completions", "mock"]);
    }

    #[test]
    fn builds_by_name() {
        let r = BackendRegistry::default();
        let b = r.build("mock", &BackendSettings::default(), &[]).unwrap();
        assert_eq!(b.name(), "mock");
        let b = r.build("chat-completions", &BackendSettings::default(), &[]).unwrap();
        assert_eq!(b.name(), "chat-completions");
    }

    #[test]
    fn unknown_name() {
        let err = BackendRegistry::default()
            .build("gpt", &BackendSettings::default(), &[])
            .err()
            .unwrap();
        assert!(err.to_string().contains("available: chat-completions, mock"));
    }
}
