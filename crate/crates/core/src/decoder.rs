//! Beam-search decoding over [`Backend::next_logits`].
//!
//! Each expansion step transforms the raw logits in a fixed order:
//!
//! 1. repetition penalty (quotient rule) over prompt, hypothesis and
//!    horizon tokens,
//! 2. no-repeat n-gram blocking over `horizon ++ hypothesis`, banned ids
//!    set to `-inf`,
//! 3. log-softmax over the surviving entries.
//!
//! Finished hypotheses (EOS or `max_length`) are ranked by
//! `logprob_sum / len^alpha`, ties going to the lexicographically smaller
//! token sequence.

use std::cmp::Ordering;
use std::collections::BTreeSet;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::GenerationConfig;
use crate::protocol::{Backend, LogitMap, LogitsRequest, TokenId};

/// Token ids whose logits the repetition penalty touches.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PenaltySet(BTreeSet<TokenId>);

impl PenaltySet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn extend_from(&mut self, tokens: &[TokenId]) {
        self.0.extend(tokens.iter().copied());
    }

    pub fn contains(&self, id: TokenId) -> bool {
        self.0.contains(&id)
    }

    pub fn iter(&self) -> impl Iterator<Item = TokenId> + '_ {
        self.0.iter().copied()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl FromIterator<TokenId> for PenaltySet {
    fn from_iter<I: IntoIterator<Item = TokenId>>(iter: I) -> Self {
        Self(iter.into_iter().collect())
    }
}

/// Divides positive logits of penalized ids by `theta` and multiplies
/// negative ones by it. Other entries are left bit-identical.
pub fn apply_repetition_penalty(
    logits: &LogitMap,
    penalized: &PenaltySet,
    theta: f64,
) -> Result<LogitMap> {
    if theta.is_nan() || theta < 1.0 {
        return Err(Error::Contract(format!("repetition penalty {theta} < 1")));
    }
    let mut out = logits.clone();
    for id in penalized.iter() {
        let Some(l) = out.entries.get_mut(&id) else {
            return Err(Error::Contract(format!(
                "penalized token {id} missing from logits"
            )));
        };
        *l = if *l > 0.0 { *l / theta } else { *l * theta };
    }
    Ok(out)
}

/// Ids that would complete an n-gram already present in
/// `horizon ++ generated`.
///
/// The (n-1)-token prefix is read from the tail of `horizon ++ generated`,
/// so the first tokens of a hypothesis are also checked against the
/// horizon.
pub fn banned_next_tokens(generated: &[TokenId], horizon: &[TokenId], n: usize) -> BTreeSet<TokenId> {
    assert!(n >= 2, "n-gram size must be at least 2");
    let total = horizon.len() + generated.len();
    let mut banned = BTreeSet::new();
    if total < n {
        return banned;
    }
    let at = |i: usize| {
        if i < horizon.len() {
            horizon[i]
        } else {
            generated[i - horizon.len()]
        }
    };
    let prefix_start = total - (n - 1);
    for start in 0..=(total - n) {
        if (0..n - 1).all(|o| at(start + o) == at(prefix_start + o)) {
            banned.insert(at(start + n - 1));
        }
    }
    banned
}

/// `logprob_sum / length^alpha`.
pub fn length_normalized_score(logprob_sum: f64, length: usize, alpha: f64) -> f64 {
    debug_assert!(length >= 1);
    logprob_sum / (length as f64).powf(alpha)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hypothesis {
    /// Generated tokens only, including a trailing EOS when present.
    pub tokens: Vec<TokenId>,
    pub logprob_sum: f64,
    pub finished: bool,
    /// Length-normalized score.
    pub score: f64,
}

/// What to decode: a prompt, optional encoder context, and the horizon.
#[derive(Debug, Clone, Copy)]
pub struct DecodeInput<'a> {
    pub model: &'a str,
    pub prompt: &'a [TokenId],
    pub encoder_context: Option<&'a [TokenId]>,
    pub horizon: &'a [TokenId],
}

/// Raw logits for the step after `generated`, with the penalty and the
/// n-gram mask applied.
pub fn transformed_logits(
    backend: &dyn Backend,
    input: &DecodeInput<'_>,
    generated: &[TokenId],
    config: &GenerationConfig,
) -> Result<LogitMap> {
    let mut penalized = PenaltySet::new();
    penalized.extend_from(input.prompt);
    penalized.extend_from(generated);
    penalized.extend_from(input.horizon);

    let mut tokens = Vec::with_capacity(input.prompt.len() + generated.len());
    tokens.extend_from_slice(input.prompt);
    tokens.extend_from_slice(generated);
    let raw = backend.next_logits(&LogitsRequest {
        model: input.model.to_string(),
        tokens,
        context_tokens: input.encoder_context.map(<[_]>::to_vec),
        include_tokens: (!penalized.is_empty()).then(|| penalized.iter().collect()),
    })?;

    let mut logits = apply_repetition_penalty(&raw, &penalized, config.repetition_penalty)?;
    if let Some(n) = config.ngram() {
        for id in banned_next_tokens(generated, input.horizon, n) {
            if let Some(l) = logits.entries.get_mut(&id) {
                *l = f64::NEG_INFINITY;
            }
        }
    }
    Ok(logits)
}

struct Expansion {
    beam: usize,
    token: TokenId,
    logprob_sum: f64,
}

fn by_score_then_tokens(a: (f64, &[TokenId]), b: (f64, &[TokenId])) -> Ordering {
    b.0.total_cmp(&a.0).then_with(|| a.1.cmp(b.1))
}

/// Returns the `k` best finished hypotheses, best first.
pub fn beam_search(
    backend: &dyn Backend,
    input: &DecodeInput<'_>,
    config: &GenerationConfig,
    k: usize,
) -> Result<Vec<Hypothesis>> {
    config.validate()?;
    if k > config.beam_width {
        return Err(Error::Contract(format!(
            "requested {k} hypotheses from a beam of {}",
            config.beam_width
        )));
    }
    let eos = backend.capability(input.model)?.eos_token_id;

    let mut live: Vec<(Vec<TokenId>, f64)> = vec![(Vec::new(), 0.0)];
    let mut finished: Vec<Hypothesis> = Vec::new();

    for step in 0..config.max_length {
        let per_beam: Vec<Vec<(TokenId, f64)>> = live
            .par_iter()
            .map(|(tokens, _)| {
                transformed_logits(backend, input, tokens, config).map(|l| l.log_softmax())
            })
            .collect::<Result<_>>()?;

        let mut expansions: Vec<Expansion> = per_beam
            .iter()
            .enumerate()
            .flat_map(|(beam, lsm)| {
                let base = live[beam].1;
                lsm.iter().map(move |&(token, lp)| Expansion {
                    beam,
                    token,
                    logprob_sum: base + lp,
                })
            })
            .collect();
        if expansions.is_empty() {
            return Err(Error::Starvation { step });
        }
        // Live beams all have the same length, so comparing (beam tokens,
        // token) is the lexicographic order of the extended sequences.
        expansions.sort_by(|a, b| {
            b.logprob_sum
                .total_cmp(&a.logprob_sum)
                .then_with(|| live[a.beam].0.cmp(&live[b.beam].0))
                .then_with(|| a.token.cmp(&b.token))
        });
        expansions.truncate(config.beam_width);

        let mut next = Vec::with_capacity(expansions.len());
        for e in expansions {
            let mut tokens = live[e.beam].0.clone();
            tokens.push(e.token);
            if Some(e.token) == eos || tokens.len() >= config.max_length {
                finished.push(Hypothesis {
                    score: length_normalized_score(e.logprob_sum, tokens.len(), config.length_penalty),
                    tokens,
                    logprob_sum: e.logprob_sum,
                    finished: true,
                });
            } else {
                next.push((tokens, e.logprob_sum));
            }
        }
        live = next;
        if live.is_empty() {
            break;
        }
    }

    finished.sort_by(|a, b| by_score_then_tokens((a.score, &a.tokens), (b.score, &b.tokens)));
    finished.truncate(k);
    Ok(finished)
}
