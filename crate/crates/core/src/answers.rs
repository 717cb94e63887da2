//! Candidate preceding events: long-form QA answers to the generated
//! questions, conditioned on a reference document and filtered.

use std::collections::BTreeSet;
use std::path::Path;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::decoder::{beam_search, DecodeInput};
use crate::error::{Error, Result};
use crate::model::{normalize_whitespace, GenerationConfig, StoryState};
use crate::protocol::{Backend, TokenId};
use crate::questions::Question;

const DEFAULT_BANNED: &str = include_str!("../data/banned_phrases.txt");

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReferenceDoc {
    pub doc_id: String,
    pub text: String,
    pub source_path: String,
}

impl ReferenceDoc {
    pub fn new(doc_id: &str, text: &str, source_path: &str) -> Result<Self> {
        if text.trim().is_empty() {
            return Err(Error::Validation(format!("reference document {doc_id} is empty")));
        }
        Ok(Self {
            doc_id: doc_id.to_string(),
            text: text.to_string(),
            source_path: source_path.to_string(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnswerCandidate {
    pub question: Question,
    pub text: String,
    /// Length-normalized beam score.
    pub decoder_score: f64,
    pub doc_id: String,
    pub beam_rank: usize,
}

pub fn select_reference_doc<'a, R: Rng + ?Sized>(
    corpus: &'a [ReferenceDoc],
    rng: &mut R,
) -> Result<&'a ReferenceDoc> {
    if corpus.is_empty() {
        return Err(Error::Config("reference corpus is empty".into()));
    }
    Ok(&corpus[rng.random_range(0..corpus.len())])
}

pub fn qa_prompt(question: &str, doc: &str) -> String {
    format!("question: {question} context: {doc}")
}

/// Decoded bytes from a real or mock model can carry control characters;
/// those become spaces and runs of whitespace collapse.
pub fn sanitize(text: &str) -> String {
    let cleaned: String = text
        .chars()
        .map(|c| if c.is_control() { ' ' } else { c })
        .collect();
    normalize_whitespace(&cleaned)
}

/// Tokenizes `text` and trims the token list so the decoder's longest
/// request still fits in the model's context.
pub(crate) fn fit_prompt(
    backend: &dyn Backend,
    model: &str,
    text: &str,
    max_length: usize,
) -> Result<Vec<TokenId>> {
    let cap = backend.capability(model)?;
    let mut tokens = backend.tokenize(model, text)?;
    let budget = cap.max_context.saturating_sub(max_length + 1);
    if budget == 0 {
        return Err(Error::Config(format!(
            "model {model} context {} cannot hold {max_length} generated tokens",
            cap.max_context
        )));
    }
    tokens.truncate(budget);
    Ok(tokens)
}

/// Token view of the horizon for `model`, empty when the horizon is off.
pub fn horizon_tokens(
    backend: &dyn Backend,
    model: &str,
    state: &StoryState,
    config: &GenerationConfig,
) -> Result<Vec<TokenId>> {
    if !config.horizon || state.horizon().is_empty() {
        return Ok(Vec::new());
    }
    Ok(backend.tokenize(model, &state.horizon_text())?)
}

/// Beam-decodes answers to one question. Candidates come back best first;
/// hypotheses that decode to nothing are dropped.
pub fn answer_question(
    backend: &dyn Backend,
    qa_model: &str,
    question: &Question,
    doc: &ReferenceDoc,
    horizon: &[TokenId],
    config: &GenerationConfig,
) -> Result<Vec<AnswerCandidate>> {
    if doc.text.trim().is_empty() {
        return Err(Error::Contract("reference document is empty".into()));
    }
    let prompt = fit_prompt(
        backend,
        qa_model,
        &qa_prompt(&question.text, &doc.text),
        config.max_length,
    )?;
    let input = DecodeInput {
        model: qa_model,
        prompt: &prompt,
        encoder_context: None,
        horizon,
    };
    let hyps = beam_search(backend, &input, config, config.beam_width)?;
    let mut out = Vec::with_capacity(hyps.len());
    for (beam_rank, h) in hyps.into_iter().enumerate() {
        let text = sanitize(&backend.detokenize(qa_model, &h.tokens)?);
        if text.is_empty() {
            continue;
        }
        out.push(AnswerCandidate {
            question: question.clone(),
            text,
            decoder_score: h.score,
            doc_id: doc.doc_id.clone(),
            beam_rank,
        });
    }
    Ok(out)
}

/// Answers every question against the same document, concurrently.
/// Output keeps question order, then beam order.
pub fn answer_all(
    backend: &dyn Backend,
    qa_model: &str,
    questions: &[Question],
    doc: &ReferenceDoc,
    horizon: &[TokenId],
    config: &GenerationConfig,
) -> Result<Vec<AnswerCandidate>> {
    let per_question: Vec<Vec<AnswerCandidate>> = questions
        .par_iter()
        .map(|q| answer_question(backend, qa_model, q, doc, horizon, config))
        .collect::<Result<_>>()?;
    Ok(per_question.into_iter().flatten().collect())
}

/// Case-insensitive phrase list.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct BanList {
    phrases: Vec<String>,
}

impl BanList {
    /// One phrase per line; blank lines and `#` comments are skipped.
    pub fn parse(text: &str) -> Self {
        let mut seen = BTreeSet::new();
        let phrases = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .map(str::to_lowercase)
            .filter(|p| seen.insert(p.clone()))
            .collect();
        Self { phrases }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(Self::parse(&text))
    }

    pub fn from_phrases<S: AsRef<str>>(phrases: &[S]) -> Self {
        Self::parse(&phrases.iter().map(|p| p.as_ref()).collect::<Vec<_>>().join("\n"))
    }

    /// The list shipped with the crate.
    pub fn builtin() -> Self {
        Self::parse(DEFAULT_BANNED)
    }

    pub fn phrases(&self) -> &[String] {
        &self.phrases
    }

    pub fn len(&self) -> usize {
        self.phrases.len()
    }

    pub fn is_empty(&self) -> bool {
        self.phrases.is_empty()
    }

    /// First phrase found in `text`, if any.
    pub fn find(&self, text: &str) -> Option<&str> {
        let folded = text.to_lowercase();
        self.phrases
            .iter()
            .find(|p| folded.contains(p.as_str()))
            .map(String::as_str)
    }
}

/// Splits candidates into kept and rejected, each in input order. Rejected
/// entries carry the phrase that matched.
pub fn filter_banned(
    candidates: Vec<AnswerCandidate>,
    banned: &BanList,
) -> (Vec<AnswerCandidate>, Vec<(AnswerCandidate, String)>) {
    let mut kept = Vec::new();
    let mut rejected = Vec::new();
    for c in candidates {
        match banned.find(&c.text) {
            Some(p) => {
                let p = p.to_string();
                rejected.push((c, p));
            }
            None => kept.push(c),
        }
    }
    (kept, rejected)
}

/// Drops repeats within the batch and candidates equal to a sentence
/// already in the story or its horizon.
pub fn dedupe(candidates: Vec<AnswerCandidate>, story: &StoryState) -> Vec<AnswerCandidate> {
    let mut seen: BTreeSet<String> = story
        .sentences()
        .chain(story.horizon())
        .map(|s| s.text().to_string())
        .collect();
    candidates
        .into_iter()
        .filter(|c| seen.insert(normalize_whitespace(&c.text)))
        .collect()
}
