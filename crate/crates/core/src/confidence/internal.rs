use std::collections::{BTreeMap, HashSet};
use std::sync::Arc;

use super::Verbalized;
use crate::backend::{GenerationResult, TokenLogprob};
use crate::error::ConfidenceError;
use crate::registry::Registry;

/// Internal confidence for a parsed response, in percent.
pub trait ConfidenceExtractor: Send + Sync {
    fn name(&self) -> &'static str;

    fn extract(&self, result: &GenerationResult, verbal: &Verbalized) -> Result<f64, ConfidenceError>;
}

/// Probability mass of the emitted answer token under the full softmax.
#[derive(Debug, Clone, Copy, Default)]
pub struct TokenProbability;

/// Answer-token mass renormalized over the choice letters reported among the
/// alternatives at the answer position.
#[derive(Debug, Clone, Copy, Default)]
pub struct ChoiceRenormalized;

impl ConfidenceExtractor for TokenProbability {
    fn name(&self) -> &'static str {
        "token-prob"
    }

    fn extract(&self, result: &GenerationResult, verbal: &Verbalized) -> Result<f64, ConfidenceError> {
        let token = locate_answer_token(result, verbal)?;
        Ok(to_percent(token.logprob.exp()))
    }
}

impl ConfidenceExtractor for ChoiceRenormalized {
    fn name(&self) -> &'static str {
        "renormalized"
    }

    fn extract(&self, result: &GenerationResult, verbal: &Verbalized) -> Result<f64, ConfidenceError> {
        let token = locate_answer_token(result, verbal)?;
        let mut seen = HashSet::new();
        let mut mass: BTreeMap<char, f64> = BTreeMap::new();
        let emitted = std::iter::once((token.token_text.as_str(), token.logprob));
        let alts = token
            .alternatives
            .iter()
            .map(|a| (a.token_text.as_str(), a.logprob));
        for (text, logprob) in emitted.chain(alts) {
            if !seen.insert(text) {
                continue;
            }
            let letter = if std::ptr::eq(text, token.token_text.as_str()) {
                Some(verbal.label)
            } else {
                choice_letter(text)
            };
            if let Some(l) = letter {
                *mass.entry(l).or_default() += logprob.exp();
            }
        }
        let total: f64 = mass.values().sum();
        let own = mass.get(&verbal.label).copied().unwrap_or(0.0);
        if total <= 0.0 {
            return Err(ConfidenceError::AnswerTokenNotFound(verbal.label));
        }
        Ok(to_percent(own / total))
    }
}

fn to_percent(p: f64) -> f64 {
    (100.0 * p).clamp(0.0, 100.0)
}

fn trim_token(text: &str) -> &str {
    text.trim_matches(|c: char| c.is_whitespace() || c == '\u{2581}' || c == '\u{0120}')
}

fn choice_letter(text: &str) -> Option<char> {
    let mut chars = trim_token(text).chars();
    match (chars.next(), chars.next()) {
        (Some(c), None) if c.is_ascii_uppercase() => Some(c),
        _ => None,
    }
}

/// First token covering or following the guessed letter whose trimmed text is
/// that letter (`" B"`, `"B"` and `"▁B"` all match `B`).
pub fn locate_answer_token<'a>(
    result: &'a GenerationResult,
    verbal: &Verbalized,
) -> Result<&'a TokenLogprob, ConfidenceError> {
    if result.tokens.is_empty() {
        return Err(ConfidenceError::NoTokens);
    }
    let mut end = 0usize;
    for token in &result.tokens {
        end += token.token_text.len();
        if end <= verbal.guess_offset {
            continue;
        }
        let trimmed = trim_token(&token.token_text);
        let mut chars = trimmed.chars();
        if let (Some(c), None) = (chars.next(), chars.next()) {
            if c.eq_ignore_ascii_case(&verbal.label) {
                return Ok(token);
            }
        }
    }
    Err(ConfidenceError::AnswerTokenNotFound(verbal.label))
}

/// `100 * exp(logprob)` of the answer token, or its share of the choice-letter
/// mass at that position when `renormalize` is set.
pub fn extract_internal(
    result: &GenerationResult,
    verbal: &Verbalized,
    renormalize: bool,
) -> Result<f64, ConfidenceError> {
    if renormalize {
        ChoiceRenormalized.extract(result, verbal)
    } else {
        TokenProbability.extract(result, verbal)
    }
}

/// `token-prob` and `renormalized`.
pub fn extractors() -> Registry<dyn ConfidenceExtractor> {
    let mut r: Registry<dyn ConfidenceExtractor> = Registry::new();
    r.register(TokenProbability.name(), Arc::new(TokenProbability));
    r.register(ChoiceRenormalized.name(), Arc::new(ChoiceRenormalized));
    r
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::Alternative;
    use crate::confidence::parse_verbalized;

    fn tok(text: &str, logprob: f64, alts: &[(&str, f64)]) -> TokenLogprob {
        TokenLogprob {
            token_text: text.into(),
            logprob,
            alternatives: alts
                .iter()
                .map(|(t, l)| Alternative {
                    token_text: t.to_string(),
                    logprob: *l,
                })
                .collect(),
        }
    }

    fn result(tokens: Vec<TokenLogprob>) -> GenerationResult {
        GenerationResult {
            question_id: "q".into(),
            text: tokens.iter().map(|t| t.token_text.as_str()).collect(),
            tokens,
        }
    }

    fn answer(answer_tok: TokenLogprob) -> GenerationResult {
        result(vec![
            tok("Guess", -0.01, &[]),
            tok(":", 0.0, &[]),
            answer_tok,
            tok("\n", 0.0, &[]),
            tok("Probability", 0.0, &[]),
            tok(":", 0.0, &[]),
            tok(" 85", -0.2, &[]),
            tok("%", 0.0, &[]),
        ])
    }

    #[test]
    fn token_probability_of_answer() {
        let r = answer(tok(" B", -0.1053605, &[]));
        let v = parse_verbalized(&r.text).unwrap();
        let ci = extract_internal(&r, &v, false).unwrap();
        // 100 * e^-0.1053605 evaluated independently: 89.99999999...
        assert!((ci - 90.0).abs() < 1e-4, "{ci}");
    }

    #[test]
    fn zero_logprob_is_certain() {
        let r = answer(tok(" B", 0.0, &[]));
        let v = parse_verbalized(&r.text).unwrap();
        assert_eq!(extract_internal(&r, &v, false).unwrap(), 100.0);
    }

    #[test]
    fn renormalized_over_choice_letters() {
        let l5 = 0.5f64.ln();
        let l25 = 0.25f64.ln();
        let r = answer(tok(" B", l25, &[(" A", l5), (" B", l25), (" C", l25)]));
        let v = parse_verbalized(&r.text).unwrap();
        let ci = extract_internal(&r, &v, true).unwrap();
        assert!((ci - 25.0).abs() < 1e-12, "{ci}");
    }

    #[test]
    fn renormalized_ignores_non_letters_and_includes_emitted() {
        let r = answer(tok(" B", 0.6f64.ln(), &[(" A", 0.2f64.ln()), (" the", 0.1f64.ln())]));
        let v = parse_verbalized(&r.text).unwrap();
        let ci = extract_internal(&r, &v, true).unwrap();
        assert!((ci - 75.0).abs() < 1e-12, "{ci}");
    }

    #[test]
    fn tokenizer_prefixes_trimmed() {
        for text in ["B", "\u{2581}B", "\u{0120}B"] {
            let r = result(vec![tok("Guess: ", 0.0, &[]), tok(text, -0.5, &[]), tok("\nProbability: 60%", 0.0, &[])]);
            let v = Verbalized {
                label: 'B',
                confidence: 60.0,
                guess_offset: "Guess: ".len(),
                probability_span: 0..0,
                probability_markers: 1,
            };
            let t = locate_answer_token(&r, &v).unwrap();
            assert_eq!(t.logprob, -0.5);
        }
    }

    #[test]
    fn earlier_letter_tokens_are_skipped() {
        // A stray " B" before the Guess marker must not be picked up.
        let r = result(vec![
            tok(" B", -3.0, &[]),
            tok("\nGuess:", 0.0, &[]),
            tok(" B", -0.7, &[]),
            tok("\nProbability: 50%", 0.0, &[]),
        ]);
        let v = parse_verbalized(&r.text).unwrap();
        assert_eq!(locate_answer_token(&r, &v).unwrap().logprob, -0.7);
    }

    #[test]
    fn letter_not_isolated() {
        let r = result(vec![tok("Guess: B\nProbability: 50%", -0.1, &[])]);
        let v = parse_verbalized(&r.text).unwrap();
        assert_eq!(
            extract_internal(&r, &v, false),
            Err(ConfidenceError::AnswerTokenNotFound('B'))
        );
    }

    #[test]
    fn registry_names() {
        let r = extractors();
        assert_eq!(r.names(), ["renormalized", "token-prob"]);
        assert_eq!(r.get("token-prob").unwrap().name(), "token-prob");
    }
}
