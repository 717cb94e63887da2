//! Fluency ranking of candidate-prepended stories.

use std::cmp::Ordering;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::answers::AnswerCandidate;
use crate::error::{Error, Result};
use crate::model::StoryState;
use crate::protocol::{Backend, ScoreRequest};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedCandidate {
    pub candidate: AnswerCandidate,
    pub perplexity: f64,
    pub normalized_score: f64,
}

/// `exp(-mean log p)` of `text` under a causal scoring model.
pub fn perplexity(backend: &dyn Backend, model: &str, text: &str) -> Result<f64> {
    let cap = backend.capability(model)?;
    let mut tokens = backend.tokenize(model, text)?;
    tokens.truncate(cap.max_context.saturating_sub(1));
    if tokens.len() < 2 {
        return Err(Error::Contract(format!(
            "perplexity needs at least 2 tokens, got {}",
            tokens.len()
        )));
    }
    let logprobs = backend.score(&ScoreRequest {
        model: model.to_string(),
        tokens,
        context_tokens: None,
    })?;
    if logprobs.is_empty() {
        return Err(Error::Contract("scoring model returned no log-probabilities".into()));
    }
    let mean = logprobs.iter().sum::<f64>() / logprobs.len() as f64;
    Ok((-mean).exp())
}

/// Reciprocal perplexities scaled to sum to one.
pub fn normalize_reciprocal(perplexities: &[f64]) -> Vec<f64> {
    let inv: Vec<f64> = perplexities.iter().map(|p| 1.0 / p).collect();
    let total: f64 = inv.iter().sum();
    inv.into_iter().map(|r| r / total).collect()
}

/// Text the ranker scores for a candidate.
pub fn ranked_text(candidate: &str, context: &StoryState) -> String {
    format!("{candidate} {}", context.full_text())
}

fn order(a: &RankedCandidate, b: &RankedCandidate) -> Ordering {
    a.perplexity
        .total_cmp(&b.perplexity)
        .then_with(|| a.candidate.text.cmp(&b.candidate.text))
        .then_with(|| a.candidate.question.text.cmp(&b.candidate.question.text))
        .then_with(|| a.candidate.beam_rank.cmp(&b.candidate.beam_rank))
}

/// Lowest perplexity first. Normalization runs over the whole batch.
pub fn rank(
    backend: &dyn Backend,
    ranker_model: &str,
    candidates: Vec<AnswerCandidate>,
    context: &StoryState,
) -> Result<Vec<RankedCandidate>> {
    if candidates.is_empty() {
        return Err(Error::Contract("nothing to rank".into()));
    }
    let ppl: Vec<f64> = candidates
        .par_iter()
        .map(|c| perplexity(backend, ranker_model, &ranked_text(&c.text, context)))
        .collect::<Result<_>>()?;
    Ok(rank_scored(candidates.into_iter().zip(ppl).collect()))
}

/// Ranks candidates whose perplexities are already known.
pub fn rank_scored(scored: Vec<(AnswerCandidate, f64)>) -> Vec<RankedCandidate> {
    let norm = normalize_reciprocal(&scored.iter().map(|(_, p)| *p).collect::<Vec<_>>());
    let mut ranked: Vec<RankedCandidate> = scored
        .into_iter()
        .zip(norm)
        .map(|((candidate, perplexity), normalized_score)| RankedCandidate {
            candidate,
            perplexity,
            normalized_score,
        })
        .collect();
    ranked.sort_by(order);
    ranked
}

pub fn select_best(ranked: &[RankedCandidate]) -> Result<&RankedCandidate> {
    ranked
        .first()
        .ok_or_else(|| Error::Contract("no ranked candidates to select from".into()))
}
