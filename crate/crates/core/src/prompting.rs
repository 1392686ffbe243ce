//! The fixed confidence-elicitation prompt.

use serde::{Deserialize, Serialize};

use crate::data::Question;

/// Instruction block appended verbatim after the options. Identical across
/// every rendered prompt, including those used to build preference data.
pub const INSTRUCTION_BLOCK: &str = "Provide your best guess (letter only) and the probability that it is correct (0% to 100%) for the above question. Give ONLY the guess and probability, no other words or explanation. For example:\n\nGuess: <the letter only, as short as possible; not a complete sentence, just the letter!>\nProbability: <the probability between 0% and 100% that your guess is correct, without any extra commentary whatsoever; just the probability!>";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RenderedPrompt {
    pub question_id: String,
    pub text: String,
}

/// Renders `{Question}\n{Options}\n\n{instructions}` with one `LABEL. TEXT`
/// line per choice.
pub fn render_prompt(q: &Question) -> RenderedPrompt {
    let mut text = String::with_capacity(q.stem.len() + INSTRUCTION_BLOCK.len() + 64);
    text.push_str(&q.stem);
    text.push('\n');
    for choice in &q.choices {
        text.push_str(&choice.label);
        text.push_str(". ");
        text.push_str(&choice.text);
        text.push('\n');
    }
    text.push('\n');
    text.push_str(INSTRUCTION_BLOCK);
    RenderedPrompt {
        question_id: q.id.clone(),
        text,
    }
}
