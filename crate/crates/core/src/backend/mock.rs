//! Seeded synthetic model for desk-scale runs.
//!
//! Each response is a pure function of `(profile, question_id)`: the
//! per-question generator is seeded from a SHA-256 digest of the profile seed
//! and the id, so results do not depend on call order, thread count or
//! platform word size.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution, Normal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{Alternative, Backend, GenerationRequest, GenerationResult, TokenLogprob};
use crate::data::Question;
use crate::error::BackendError;

/// Smallest probability the mock will put on an emitted answer token.
const MIN_ANSWER_PROB: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase")]
pub enum InternalDist {
    Beta { alpha: f64, beta: f64 },
    Uniform { low: f64, high: f64 },
}

impl InternalDist {
    /// Mean on the probability scale `[0, 1]`.
    pub fn mean(&self) -> f64 {
        match *self {
            InternalDist::Beta { alpha, beta } => alpha / (alpha + beta),
            InternalDist::Uniform { low, high } => 0.5 * (low + high),
        }
    }

    fn validate(&self) -> Result<(), BackendError> {
        match *self {
            InternalDist::Beta { alpha, beta } if alpha > 0.0 && beta > 0.0 => Ok(()),
            InternalDist::Beta { alpha, beta } => Err(BackendError::Config(format!(
                "beta parameters must be positive, got ({alpha}, {beta})"
            ))),
            InternalDist::Uniform { low, high } if 0.0 <= low && low <= high && high <= 1.0 => {
                Ok(())
            }
            InternalDist::Uniform { low, high } => Err(BackendError::Config(format!(
                "uniform bounds must satisfy 0 <= low <= high <= 1, got ({low}, {high})"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VerbalMode {
    /// Verbalized confidence = internal + bias + Gaussian noise, clamped.
    Vanilla,
    /// Verbalized confidence = internal confidence rounded to an integer.
    Aligned,
}

/// Configuration of the synthetic model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceProfile {
    pub accuracy: f64,
    pub internal_dist: InternalDist,
    pub verbal_mode: VerbalMode,
    /// Percentage points added to the internal confidence in vanilla mode.
    #[serde(default)]
    pub verbal_bias: f64,
    #[serde(default)]
    pub verbal_noise_sd: f64,
    #[serde(default)]
    pub seed: u64,
    /// Fraction of responses emitted without a `Probability:` line.
    #[serde(default)]
    pub malformed_rate: f64,
}

impl Default for ConfidenceProfile {
    fn default() -> Self {
        Self {
            accuracy: 0.7,
            internal_dist: InternalDist::Beta {
                alpha: 5.0,
                beta: 2.0,
            },
            verbal_mode: VerbalMode::Vanilla,
            verbal_bias: 25.0,
            verbal_noise_sd: 10.0,
            seed: 0,
            malformed_rate: 0.0,
        }
    }
}

impl ConfidenceProfile {
    pub fn validate(&self) -> Result<(), BackendError> {
        let unit = |name: &str, v: f64| {
            if (0.0..=1.0).contains(&v) {
                Ok(())
            } else {
                Err(BackendError::Config(format!("{name} {v} outside [0, 1]")))
            }
        };
        unit("accuracy", self.accuracy)?;
        unit("malformed_rate", self.malformed_rate)?;
        self.internal_dist.validate()?;
        if !(self.verbal_noise_sd >= 0.0 && self.verbal_noise_sd.is_finite()) {
            return Err(BackendError::Config(format!(
                "verbal_noise_sd {} must be finite and non-negative",
                self.verbal_noise_sd
            )));
        }
        if !self.verbal_bias.is_finite() {
            return Err(BackendError::Config("verbal_bias must be finite".into()));
        }
        Ok(())
    }
}

/// Gold label and choice count per question id.
#[derive(Debug, Clone, Default)]
pub struct AnswerKey(HashMap<String, (char, usize)>);

impl AnswerKey {
    pub fn from_questions(questions: &[Question]) -> Self {
        Self(
            questions
                .iter()
                .map(|q| (q.id.clone(), (q.gold(), q.choices.len())))
                .collect(),
        )
    }

    pub fn insert(&mut self, id: impl Into<String>, gold: char, n_choices: usize) {
        self.0.insert(id.into(), (gold, n_choices));
    }

    fn get(&self, id: &str) -> Option<(char, usize)> {
        self.0.get(id).copied()
    }
}

#[derive(Debug, Clone)]
pub struct MockBackend {
    profile: ConfidenceProfile,
    key: AnswerKey,
}

impl MockBackend {
    pub fn new(profile: ConfidenceProfile, key: AnswerKey) -> Result<Self, BackendError> {
        profile.validate()?;
        Ok(Self { profile, key })
    }

    pub fn profile(&self) -> &ConfidenceProfile {
        &self.profile
    }

    fn rng_for(&self, question_id: &str) -> ChaCha8Rng {
        let mut h = Sha256::new();
        h.update(self.profile.seed.to_le_bytes());
        h.update(question_id.as_bytes());
        let digest = h.finalize();
        let mut seed = [0u8; 32];
        seed.copy_from_slice(&digest[..32]);
        ChaCha8Rng::from_seed(seed)
    }

    fn draw_internal(&self, rng: &mut ChaCha8Rng) -> f64 {
        let p = match self.profile.internal_dist {
            InternalDist::Beta { alpha, beta } => Beta::new(alpha, beta)
                .expect("validated beta parameters")
                .sample(rng),
            InternalDist::Uniform { low, high } => low + (high - low) * rng.random::<f64>(),
        };
        p.clamp(MIN_ANSWER_PROB, 1.0)
    }

    fn verbalize(&self, internal_pct: f64, rng: &mut ChaCha8Rng) -> f64 {
        match self.profile.verbal_mode {
            VerbalMode::Aligned => internal_pct.round(),
            VerbalMode::Vanilla => {
                let noise = if self.profile.verbal_noise_sd > 0.0 {
                    Normal::new(0.0, self.profile.verbal_noise_sd)
                        .expect("validated noise sd")
                        .sample(rng)
                } else {
                    0.0
                };
                (internal_pct + self.profile.verbal_bias + noise).clamp(0.0, 100.0).round()
            }
        }
    }
}

fn structural(rng: &mut ChaCha8Rng, text: &str) -> TokenLogprob {
    let logprob = -rng.random::<f64>() * 1e-3;
    TokenLogprob {
        token_text: text.to_string(),
        logprob,
        alternatives: vec![Alternative {
            token_text: text.to_string(),
            logprob,
        }],
    }
}

impl Backend for MockBackend {
    fn name(&self) -> &str {
        "mock"
    }

    fn generate(&self, request: &GenerationRequest) -> Result<GenerationResult, BackendError> {
        let qid = &request.prompt.question_id;
        let (gold, n_choices) = self
            .key
            .get(qid)
            .ok_or_else(|| BackendError::UnknownQuestion(qid.clone()))?;
        let mut rng = self.rng_for(qid);

        // Fixed draw order: internal, correctness, distractor, other-label
        // weights, verbal noise, malformed flag, structural token jitter.
        let p = self.draw_internal(&mut rng);
        let correct = rng.random::<f64>() < self.profile.accuracy;
        let gold_idx = (gold as u8 - b'A') as usize;
        let predicted_idx = if correct || n_choices < 2 {
            gold_idx
        } else {
            let k = rng.random_range(0..n_choices - 1);
            if k >= gold_idx { k + 1 } else { k }
        };
        let predicted = (b'A' + predicted_idx as u8) as char;

        let weights: Vec<f64> = (0..n_choices).map(|_| rng.random::<f64>() + 1e-3).collect();
        let other_total: f64 = weights
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != predicted_idx)
            .map(|(_, w)| w)
            .sum();
        let mut alternatives: Vec<Alternative> = (0..n_choices)
            .filter_map(|i| {
                let mass = if i == predicted_idx {
                    p
                } else {
                    (1.0 - p) * weights[i] / other_total
                };
                (mass > 0.0).then(|| Alternative {
                    token_text: format!(" {}", (b'A' + i as u8) as char),
                    logprob: if i == predicted_idx { p.ln() } else { mass.ln().min(0.0) },
                })
            })
            .collect();
        alternatives.sort_by(|a, b| b.logprob.total_cmp(&a.logprob).then(a.token_text.cmp(&b.token_text)));
        alternatives.truncate(request.top_logprobs);

        let verbal = self.verbalize(100.0 * p, &mut rng);
        let malformed = rng.random::<f64>() < self.profile.malformed_rate;

        let mut tokens = vec![structural(&mut rng, "Guess"), structural(&mut rng, ":")];
        tokens.push(TokenLogprob {
            token_text: format!(" {predicted}"),
            logprob: p.ln(),
            alternatives,
        });
        if !malformed {
            for piece in ["\n", "Probability", ":"] {
                tokens.push(structural(&mut rng, piece));
            }
            tokens.push(structural(&mut rng, &format!(" {verbal:.0}")));
            tokens.push(structural(&mut rng, "%"));
        }
        tokens.truncate(request.max_new_tokens);

        let text = tokens.iter().map(|t| t.token_text.as_str()).collect();
        Ok(GenerationResult {
            question_id: qid.clone(),
            text,
            tokens,
        })
    }
}
