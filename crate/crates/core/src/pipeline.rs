//! The two backward generators.
//!
//! EDGAR grows a story one round at a time: questions about the earliest
//! sentences, QA answers drawn against one reference document, ban-list and
//! duplicate filtering, perplexity ranking, then the winner is prepended.
//! The seq2seq baseline conditions on the earliest two sentences and
//! prepends its best beam.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::answers::{
    answer_all, dedupe, filter_banned, fit_prompt, horizon_tokens, sanitize, select_reference_doc,
    AnswerCandidate, BanList, ReferenceDoc,
};
use crate::decoder::{beam_search, DecodeInput};
use crate::error::{Error, Result};
use crate::model::{
    split_sentences, CandidateRecord, GenerationConfig, IterationRecord, RejectionRecord, RunTrace,
    Sentence, StoryState,
};
use crate::questions::{build_questions, context_text};
use crate::ranker::{rank, select_best};
use crate::protocol::Backend;

/// Model ids for each pipeline role.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelRoles {
    pub comet: String,
    pub extractor: String,
    pub qa: String,
    pub ranker: String,
    pub bart: String,
}

impl Default for ModelRoles {
    fn default() -> Self {
        Self {
            comet: "mock-comet".into(),
            extractor: "mock-extract".into(),
            qa: "mock-qa".into(),
            ranker: "mock-ranker".into(),
            bart: "mock-bart".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Generated {
    pub story: StoryState,
    pub trace: RunTrace,
}

/// A run that stopped early, with everything completed before the failure.
#[derive(Debug, thiserror::Error)]
#[error("{error}")]
pub struct Aborted {
    #[source]
    pub error: Error,
    pub story: StoryState,
    pub trace: RunTrace,
}

impl From<Box<Aborted>> for Error {
    fn from(a: Box<Aborted>) -> Self {
        a.error
    }
}

pub type RunResult = std::result::Result<Generated, Box<Aborted>>;

fn abort(error: Error, story: StoryState, trace: RunTrace) -> Box<Aborted> {
    Box::new(Aborted { error, story, trace })
}

/// Everything EDGAR needs besides the ending.
pub struct EdgarInputs<'a> {
    pub backend: &'a dyn Backend,
    pub models: &'a ModelRoles,
    pub corpus: &'a [ReferenceDoc],
    pub banned: &'a BanList,
    pub config: &'a GenerationConfig,
}

pub fn edgar_generate(inputs: &EdgarInputs<'_>, ending_text: &str) -> RunResult {
    let start = StoryState::from_ending_text(ending_text)
        .and_then(|s| {
            inputs.config.validate()?;
            if inputs.corpus.is_empty() {
                return Err(Error::Config("reference corpus is empty".into()));
            }
            Ok(s)
        })
        .map_err(|e| abort(e, empty_story(), RunTrace::default()))?;

    let mut rng = ChaCha8Rng::seed_from_u64(inputs.config.seed);
    let mut story = start;
    let mut trace = RunTrace::default();
    for iteration in 0..inputs.config.iterations {
        let mut rec = IterationRecord {
            iteration,
            ..Default::default()
        };
        match edgar_round(inputs, &story, &mut rng, &mut rec) {
            Ok(next) => {
                story = next;
                trace.iterations.push(rec);
            }
            Err(e) => {
                trace.iterations.push(rec);
                return Err(abort(e, story, trace));
            }
        }
    }
    Ok(Generated { story, trace })
}

fn edgar_round(
    inputs: &EdgarInputs<'_>,
    story: &StoryState,
    rng: &mut ChaCha8Rng,
    rec: &mut IterationRecord,
) -> Result<StoryState> {
    let EdgarInputs {
        backend,
        models,
        corpus,
        banned,
        config,
    } = *inputs;
    let doc = select_reference_doc(corpus, rng)?;
    rec.reference_doc = Some(doc.doc_id.clone());
    rec.context = context_text(story, config.window_size);

    let questions = build_questions(backend, models, story, config)?;
    rec.questions = questions.iter().map(|q| q.text.clone()).collect();
    if questions.is_empty() {
        rec.skipped = Some("no questions".into());
        return Ok(story.clone());
    }

    let horizon = horizon_tokens(backend, &models.qa, story, config)?;
    let candidates = answer_all(backend, &models.qa, &questions, doc, &horizon, config)?;
    let (kept, rejected) = filter_banned(candidates, banned);
    rec.rejections = rejected
        .into_iter()
        .map(|(c, phrase)| RejectionRecord { text: c.text, phrase })
        .collect();
    let before = kept.len();
    let kept = dedupe(kept, story);
    rec.duplicates_removed = before - kept.len();
    if kept.is_empty() {
        rec.skipped = Some("no viable candidates".into());
        return Ok(story.clone());
    }

    let ranked = rank(backend, &models.ranker, kept, story)?;
    rec.candidates = ranked
        .iter()
        .map(|r| CandidateRecord {
            text: r.candidate.text.clone(),
            question: questions.iter().position(|q| *q == r.candidate.question),
            decoder_score: r.candidate.decoder_score,
            beam_rank: r.candidate.beam_rank,
            perplexity: Some(r.perplexity),
        })
        .collect();
    rec.distribution = ranked.iter().map(|r| r.normalized_score).collect();
    let best = select_best(&ranked)?;
    rec.selected = Some(0);

    let mut next = story.prepend(&to_sentences(&best.candidate)?)?;
    if config.horizon_includes_rejected {
        for r in &ranked[1..] {
            next = next.extend_horizon(&split_sentences(&r.candidate.text));
        }
    }
    Ok(next)
}

fn to_sentences(c: &AnswerCandidate) -> Result<Vec<Sentence>> {
    let s = split_sentences(&c.text);
    if s.is_empty() {
        return Err(Error::Contract(format!("candidate {:?} has no sentences", c.text)));
    }
    Ok(s)
}

fn empty_story() -> StoryState {
    StoryState::from_ending(vec![Sentence::new(".", 0).expect("non-empty")])
        .expect("one sentence")
}

/// Number of earliest sentences the seq2seq baseline conditions on.
pub const BBART_CONTEXT_SENTENCES: usize = 2;

pub fn bbart_generate(
    backend: &dyn Backend,
    models: &ModelRoles,
    ending_text: &str,
    config: &GenerationConfig,
) -> RunResult {
    let start = StoryState::from_ending_text(ending_text)
        .and_then(|s| {
            config.validate()?;
            Ok(s)
        })
        .map_err(|e| abort(e, empty_story(), RunTrace::default()))?;

    let mut story = start;
    let mut trace = RunTrace::default();
    for iteration in 0..config.iterations {
        let mut rec = IterationRecord {
            iteration,
            ..Default::default()
        };
        match bbart_round(backend, models, &story, config, &mut rec) {
            Ok(next) => {
                story = next;
                trace.iterations.push(rec);
            }
            Err(e) => {
                trace.iterations.push(rec);
                return Err(abort(e, story, trace));
            }
        }
    }
    Ok(Generated { story, trace })
}

fn bbart_round(
    backend: &dyn Backend,
    models: &ModelRoles,
    story: &StoryState,
    config: &GenerationConfig,
    rec: &mut IterationRecord,
) -> Result<StoryState> {
    rec.context = context_text(story, BBART_CONTEXT_SENTENCES);
    let encoder = fit_prompt(backend, &models.bart, &rec.context, config.max_length)?;
    let horizon = horizon_tokens(backend, &models.bart, story, config)?;
    let input = DecodeInput {
        model: &models.bart,
        prompt: &[],
        encoder_context: Some(&encoder),
        horizon: &horizon,
    };
    let hyps = beam_search(backend, &input, config, config.beam_width)?;
    for (beam_rank, h) in hyps.iter().enumerate() {
        let text = sanitize(&backend.detokenize(&models.bart, &h.tokens)?);
        if !text.is_empty() {
            rec.candidates.push(CandidateRecord {
                text,
                question: None,
                decoder_score: h.score,
                beam_rank,
                perplexity: None,
            });
        }
    }
    let Some(best) = rec.candidates.first() else {
        rec.skipped = Some("no viable candidates".into());
        return Ok(story.clone());
    };
    rec.selected = Some(0);
    let sentences = split_sentences(&best.text);
    let mut next = story.prepend(&sentences)?;
    if config.horizon_includes_rejected {
        for c in &rec.candidates[1..] {
            next = next.extend_horizon(&split_sentences(&c.text));
        }
    }
    Ok(next)
}
