//! Prompt assembly with an exact question span.
//!
//! The prompt is laid out as `prefix ++ question ++ suffix`. The three
//! segments are tokenized independently and concatenated, so the token span
//! covering the question is exact by construction. Tokenizers that would
//! merge across segment boundaries tokenize slightly differently than they
//! would the whole string; these concatenation semantics are part of the
//! contract.

use serde::{Deserialize, Serialize};

use crate::backend::Backend;
use crate::error::{Error, Result};
use crate::steering::{TokenId, TokenSpan};

/// The placeholder a template pattern must contain exactly once.
pub const QUESTION_SLOT: &str = "{question}";

/// The two tracked components of a prompt: the template preamble with its
/// instructions, and the problem statement itself.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptParts {
    #[serde(rename = "system")]
    pub system_text: String,
    #[serde(rename = "question")]
    pub question_text: String,
}

impl PromptParts {
    pub fn new(system_text: impl Into<String>, question_text: impl Into<String>) -> Result<Self> {
        let question_text = question_text.into();
        if question_text.is_empty() {
            return Err(Error::contract("question text must be non-empty"));
        }
        Ok(PromptParts { system_text: system_text.into(), question_text })
    }
}

/// Text laid around the question slot.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct PromptTemplate {
    pub prefix: String,
    pub suffix: String,
}

impl PromptTemplate {
    /// Parses a pattern containing [`QUESTION_SLOT`] exactly once.
    pub fn parse(pattern: &str) -> Result<Self> {
        let occurrences = pattern.matches(QUESTION_SLOT).count();
        if occurrences != 1 {
            return Err(Error::Template(format!(
                "pattern must contain `{QUESTION_SLOT}` exactly once, found {occurrences}"
            )));
        }
        let idx = pattern.find(QUESTION_SLOT).unwrap();
        Ok(PromptTemplate {
            prefix: pattern[..idx].to_string(),
            suffix: pattern[idx + QUESTION_SLOT.len()..].to_string(),
        })
    }

    /// Template that is just the system text followed by the question.
    pub fn system_then_question(parts: &PromptParts) -> Self {
        PromptTemplate { prefix: parts.system_text.clone(), suffix: String::new() }
    }

    pub fn render(&self, question: &str) -> String {
        format!("{}{}{}", self.prefix, question, self.suffix)
    }
}

/// Tokenizes `prefix ++ question ++ suffix` segment by segment and returns
/// the full token buffer together with the span covering the question.
pub fn assemble_prompt(
    parts: &PromptParts,
    template: &PromptTemplate,
    backend: &dyn Backend,
) -> Result<(Vec<TokenId>, TokenSpan)> {
    if parts.question_text.is_empty() {
        return Err(Error::contract("question text must be non-empty"));
    }
    let mut tokens = tokenize_segment(backend, &template.prefix)?;
    let q_start = tokens.len();
    tokens.extend(tokenize_segment(backend, &parts.question_text)?);
    let q_end = tokens.len();
    tokens.extend(tokenize_segment(backend, &template.suffix)?);
    Ok((tokens, TokenSpan::new(q_start, q_end)?))
}

fn tokenize_segment(backend: &dyn Backend, text: &str) -> Result<Vec<TokenId>> {
    if text.is_empty() {
        return Ok(Vec::new());
    }
    backend.tokenize(text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::{StubBackend, StubFixture, StubRule};

    fn char_backend() -> StubBackend {
        let vocab: Vec<String> = "SQ?: q".chars().map(|c| c.to_string()).collect();
        let n = vocab.len();
        StubBackend::new(StubFixture {
            vocab,
            rules: Vec::<StubRule>::new(),
            default_logits: vec![0.0; n],
            mask_token: Some(0),
            eos_token: 0,
        })
        .unwrap()
    }

    #[test]
    fn question_span_covers_exactly_the_question() {
        let backend = char_backend();
        let parts = PromptParts::new("S: ", "Q?").unwrap();
        let template = PromptTemplate::parse("S: {question}").unwrap();
        let (tokens, span) = assemble_prompt(&parts, &template, &backend).unwrap();
        assert_eq!(tokens.len(), 5);
        assert_eq!(span, TokenSpan::new(3, 5).unwrap());
        assert_eq!(backend.detokenize(&tokens[span.start..span.end]).unwrap(), "Q?");
    }

    #[test]
    fn empty_prefix_starts_span_at_zero() {
        let backend = char_backend();
        let parts = PromptParts::new("", "Q?").unwrap();
        let template = PromptTemplate::system_then_question(&parts);
        let (tokens, span) = assemble_prompt(&parts, &template, &backend).unwrap();
        assert_eq!(span, TokenSpan::new(0, 2).unwrap());
        assert_eq!(tokens.len(), 2);
    }

    #[test]
    fn pattern_requires_exactly_one_slot() {
        assert!(PromptTemplate::parse("no slot here").is_err());
        assert!(PromptTemplate::parse("{question} and {question}").is_err());
        let t = PromptTemplate::parse("A {question} B").unwrap();
        assert_eq!(t.prefix, "A ");
        assert_eq!(t.suffix, " B");
        assert_eq!(t.render("q"), "A q B");
    }

    #[test]
    fn tokenization_matches_hand_tokenized_concatenation() {
        let backend = char_backend();
        let parts = PromptParts::new("S: ", "q?").unwrap();
        let template = PromptTemplate::system_then_question(&parts);
        let (tokens, _) = assemble_prompt(&parts, &template, &backend).unwrap();
        // "S", ":", " ", "q", "?" under single-char longest match
        assert_eq!(tokens, vec![0, 3, 4, 5, 2]);
    }
}
