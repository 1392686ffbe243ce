use std::ops::Range;
use std::sync::LazyLock;

use regex::Regex;

use crate::error::ParseError;

static GUESS_MARKER: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?i)guess\s*:").unwrap());
static PROBABILITY_MARKER: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?i)probability\s*:").unwrap());
// Anchored at the end of the probability marker. Markdown emphasis around the
// marker (`**Probability:** 80%`) is skipped along with whitespace.
static PROBABILITY_VALUE: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"\A[\s*_]*([-+]?(?:\d+(?:\.\d*)?|\.\d+))([ \t]*%)?").unwrap()
});

/// What was read out of a response, with byte positions for later token
/// alignment and in-place substitution.
#[derive(Debug, Clone, PartialEq)]
pub struct Verbalized {
    pub label: char,
    /// Percent, in `[0, 100]`.
    pub confidence: f64,
    /// Byte offset of the guessed letter.
    pub guess_offset: usize,
    /// Number plus an optional trailing `%`.
    pub probability_span: Range<usize>,
    /// How many `Probability:` markers the response contains. Only the first
    /// is used.
    pub probability_markers: usize,
}

impl Verbalized {
    pub fn has_repeated_marker(&self) -> bool {
        self.probability_markers > 1
    }
}

/// Reads the guessed letter after the first `Guess:` and the number after the
/// first `Probability:`. Markers are case-insensitive; whitespace,
/// punctuation and an optional `%` are tolerated.
pub fn parse_verbalized(text: &str) -> Result<Verbalized, ParseError> {
    let (label, guess_offset) = parse_guess(text)?;
    let marker = PROBABILITY_MARKER
        .find(text)
        .ok_or(ParseError::ProbabilityNotFound)?;
    let caps = PROBABILITY_VALUE
        .captures(&text[marker.end()..])
        .ok_or(ParseError::ProbabilityNotFound)?;
    let number = caps.get(1).expect("group 1 always participates");
    let value: f64 = number
        .as_str()
        .parse()
        .map_err(|_| ParseError::ProbabilityNotFound)?;
    if !(0.0..=100.0).contains(&value) {
        return Err(ParseError::ProbabilityOutOfRange(value));
    }
    let start = marker.end() + number.start();
    let end = marker.end() + caps.get(2).map_or(number.end(), |m| m.end());
    Ok(Verbalized {
        label,
        confidence: value,
        guess_offset,
        probability_span: start..end,
        probability_markers: PROBABILITY_MARKER.find_iter(text).count(),
    })
}

fn parse_guess(text: &str) -> Result<(char, usize), ParseError> {
    let marker = GUESS_MARKER.find(text).ok_or(ParseError::GuessNotFound)?;
    let rest = &text[marker.end()..];
    let mut chars = rest.char_indices().skip_while(|(_, c)| !c.is_alphanumeric() && *c != '\n');
    let (idx, letter) = chars.next().ok_or(ParseError::GuessNotFound)?;
    if !letter.is_ascii_alphabetic() {
        return Err(ParseError::GuessNotFound);
    }
    if matches!(chars.next(), Some((_, c)) if c.is_alphanumeric()) {
        return Err(ParseError::GuessNotFound);
    }
    Ok((letter.to_ascii_uppercase(), marker.end() + idx))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_template() {
        let v = parse_verbalized("Guess: B\nProbability: 85%").unwrap();
        assert_eq!((v.label, v.confidence), ('B', 85.0));
        assert_eq!(v.guess_offset, 7);
        assert_eq!(&"Guess: B\nProbability: 85%"[v.probability_span.clone()], "85%");
    }

    #[test]
    fn tolerant_casing_and_whitespace() {
        let v = parse_verbalized("guess:  c\nprobability: 70").unwrap();
        assert_eq!((v.label, v.confidence), ('C', 70.0));
        assert_eq!(v.probability_span.len(), 2);
    }

    #[test]
    fn out_of_range() {
        assert_eq!(
            parse_verbalized("Guess: A\nProbability: 150%"),
            Err(ParseError::ProbabilityOutOfRange(150.0))
        );
        assert_eq!(
            parse_verbalized("Guess: A\nProbability: -5%"),
            Err(ParseError::ProbabilityOutOfRange(-5.0))
        );
    }

    #[test]
    fn decimals_and_spaced_percent() {
        let text = "Guess: D\nProbability: 72.5 %";
        let v = parse_verbalized(text).unwrap();
        assert_eq!(v.confidence, 72.5);
        assert_eq!(&text[v.probability_span], "72.5 %");
    }

    #[test]
    fn markdown_and_punctuation() {
        let v = parse_verbalized("**Guess:** (b)\n**Probability:** 90%").unwrap();
        assert_eq!((v.label, v.confidence), ('B', 90.0));
    }

    #[test]
    fn missing_parts() {
        assert_eq!(parse_verbalized("Probability: 50%"), Err(ParseError::GuessNotFound));
        assert_eq!(parse_verbalized("Guess: A"), Err(ParseError::ProbabilityNotFound));
        assert_eq!(
            parse_verbalized("Guess: A\nProbability: high"),
            Err(ParseError::ProbabilityNotFound)
        );
        assert_eq!(parse_verbalized("Guess: Bob\nProbability: 5%"), Err(ParseError::GuessNotFound));
        assert_eq!(parse_verbalized("Guess: 3\nProbability: 5%"), Err(ParseError::GuessNotFound));
        assert_eq!(parse_verbalized("Guess:\nProbability: 5%"), Err(ParseError::GuessNotFound));
    }

    #[test]
    fn first_occurrence_wins_and_repeats_are_counted() {
        let v = parse_verbalized("Guess: A\nProbability: 40%\nProbability: 60%").unwrap();
        assert_eq!(v.confidence, 40.0);
        assert!(v.has_repeated_marker());
    }

    #[test]
    fn probability_before_guess() {
        let v = parse_verbalized("Probability: 33%\nGuess: E").unwrap();
        assert_eq!((v.label, v.confidence), ('E', 33.0));
    }
}
