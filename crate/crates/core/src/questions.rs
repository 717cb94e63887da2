//! Turning the earliest part of a story into "why"/"what" questions.
//!
//! Commonsense inferences (xIntent, xNeed) about the story front are
//! attributed to a character with an extractive QA call, then slotted into
//! the final question templates.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{GenerationConfig, Sentence, StoryState};
use crate::pipeline::ModelRoles;
use crate::protocol::{Backend, ExtractRequest, InferRequest, Relation};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InferenceClause {
    pub relation: Relation,
    pub text: String,
    /// Sentence indices (inclusive) of the window the clause came from.
    pub window_start: usize,
    pub window_end: usize,
}

impl InferenceClause {
    pub fn new(relation: Relation, text: &str, window_start: usize, window_end: usize) -> Result<Self> {
        let text = text.trim();
        if text.is_empty() {
            return Err(Error::Validation("inference clause text is empty".into()));
        }
        Ok(Self {
            relation,
            text: text.to_string(),
            window_start,
            window_end,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuestionKind {
    WhyIntent,
    WhatNeed,
}

impl From<Relation> for QuestionKind {
    fn from(r: Relation) -> Self {
        match r {
            Relation::XIntent => QuestionKind::WhyIntent,
            Relation::XNeed => QuestionKind::WhatNeed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Question {
    pub text: String,
    pub character: String,
    pub clause: InferenceClause,
    pub kind: QuestionKind,
}

const WHY_PREFIX: &str = "Why does ";
const WHY_SEP: &str = " do ";
const WHAT_PREFIX: &str = "What does ";
const WHAT_SEP: &str = " do to need ";

impl Question {
    pub fn new(character: &str, clause: InferenceClause) -> Self {
        let kind = QuestionKind::from(clause.relation);
        let text = match kind {
            QuestionKind::WhyIntent => format!("{WHY_PREFIX}{character}{WHY_SEP}{}?", clause.text),
            QuestionKind::WhatNeed => format!("{WHAT_PREFIX}{character}{WHAT_SEP}{}?", clause.text),
        };
        Self {
            text,
            character: character.to_string(),
            clause,
            kind,
        }
    }

    /// Recovers `(kind, character, clause text)` from a templated question.
    pub fn parse(text: &str) -> Option<(QuestionKind, String, String)> {
        let body = text.strip_suffix('?')?;
        let (kind, rest, sep) = match body.strip_prefix(WHY_PREFIX) {
            Some(rest) => (QuestionKind::WhyIntent, rest, WHY_SEP),
            None => (QuestionKind::WhatNeed, body.strip_prefix(WHAT_PREFIX)?, WHAT_SEP),
        };
        let (character, clause) = rest.split_once(sep)?;
        Some((kind, character.to_string(), clause.to_string()))
    }
}

/// The earliest sentences the inference model looks at.
pub fn context_window(state: &StoryState, window_size: usize) -> Vec<&Sentence> {
    state.earliest(window_size)
}

pub fn context_text(state: &StoryState, window_size: usize) -> String {
    join(&context_window(state, window_size))
}

fn join(sentences: &[&Sentence]) -> String {
    sentences.iter().map(|s| s.text()).collect::<Vec<_>>().join(" ")
}

/// Infers clauses over windows that slide toward the front of the story and
/// keeps the newest `window_size` of each relation, newest first.
///
/// The last window inferred is the one that starts at the earliest
/// sentence, so its clauses count as the most recent.
pub fn collect_window(
    backend: &dyn Backend,
    comet_model: &str,
    state: &StoryState,
    window_size: usize,
) -> Result<Vec<InferenceClause>> {
    if window_size == 0 {
        return Ok(Vec::new());
    }
    let window = context_window(state, window_size);
    let end = window.len().saturating_sub(1);
    let mut chronological = Vec::new();
    for start in (0..window.len()).rev() {
        let clauses = backend.infer_clauses(&InferRequest {
            model: comet_model.to_string(),
            text: join(&window[start..]),
            relations: Relation::ALL.iter().map(|r| r.to_string()).collect(),
            count: window_size,
        })?;
        for c in clauses {
            if let Ok(clause) = InferenceClause::new(c.relation, &c.text, start, end) {
                chronological.push(clause);
            }
        }
    }
    Ok(keep_newest(chronological, window_size))
}

/// Keeps the last `per_relation` clauses of each relation from an
/// oldest-first list and returns them newest first.
pub fn keep_newest(chronological: Vec<InferenceClause>, per_relation: usize) -> Vec<InferenceClause> {
    let mut kept = Vec::new();
    let mut intent = 0;
    let mut need = 0;
    for c in chronological.into_iter().rev() {
        let slot = match c.relation {
            Relation::XIntent => &mut intent,
            Relation::XNeed => &mut need,
        };
        if *slot < per_relation {
            *slot += 1;
            kept.push(c);
        }
    }
    kept
}

/// "Who needs to {xIntent}" / "Who needs {xNeed}".
pub fn attribution_question(clause: &InferenceClause) -> String {
    match clause.relation {
        Relation::XIntent => {
            let mut text = clause.text.as_str();
            while let Some(rest) = text.strip_prefix("to ") {
                text = rest.trim_start();
            }
            format!("Who needs to {text}")
        }
        Relation::XNeed => format!("Who needs {}", clause.text),
    }
}

pub fn attribute_character(
    backend: &dyn Backend,
    extractor_model: &str,
    context: &str,
    clause: &InferenceClause,
    threshold: f64,
) -> Result<Option<String>> {
    if context.trim().is_empty() {
        return Err(Error::Contract("attribution context is empty".into()));
    }
    let span = backend.extract_span(&ExtractRequest {
        model: extractor_model.to_string(),
        context: context.to_string(),
        question: attribution_question(clause),
    })?;
    let answer = span.answer.trim();
    Ok((span.confidence >= threshold && !answer.is_empty()).then(|| answer.to_string()))
}

/// Up to `question_budget` questions, newest clause first. Clauses no
/// character can be attributed to are skipped.
pub fn build_questions(
    backend: &dyn Backend,
    models: &ModelRoles,
    state: &StoryState,
    config: &GenerationConfig,
) -> Result<Vec<Question>> {
    let clauses = collect_window(backend, &models.comet, state, config.window_size)?;
    let context = context_text(state, config.window_size);
    let mut questions = Vec::new();
    for clause in clauses {
        if questions.len() >= config.question_budget {
            break;
        }
        if let Some(character) = attribute_character(
            backend,
            &models.extractor,
            &context,
            &clause,
            config.attribution_threshold,
        )? {
            questions.push(Question::new(&character, clause));
        }
    }
    Ok(questions)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::protocol::{
        BackendError, ClauseWire, LogitMap, LogitsRequest, MockBackend, ModelCapability,
        ScoreRequest, SpanAnswer, TokenId,
    };
    use proptest::prelude::*;

    fn clause(r: Relation, t: &str) -> InferenceClause {
        InferenceClause::new(r, t, 0, 0).unwrap()
    }

    #[test]
    fn attribution_templates() {
        assert_eq!(attribution_question(&clause(Relation::XIntent, "to escape")), "Who needs to escape");
        assert_eq!(attribution_question(&clause(Relation::XIntent, "escape")), "Who needs to escape");
        assert_eq!(attribution_question(&clause(Relation::XNeed, "a rope")), "Who needs a rope");
    }

    #[test]
    fn no_doubled_to_over_fixtures() {
        for r in Relation::ALL {
            for t in crate::protocol::fixture_clauses(r) {
                let q = attribution_question(&clause(r, t));
                assert!(!q.contains("to to "), "{q}");
            }
        }
    }

    #[test]
    fn final_templates() {
        let q = Question::new("Hansel", clause(Relation::XIntent, "to escape"));
        assert_eq!(q.text, "Why does Hansel do to escape?");
        let q = Question::new("Gretel", clause(Relation::XNeed, "a rope"));
        assert_eq!(q.text, "What does Gretel do to need a rope?");
        assert_eq!(q.kind, QuestionKind::WhatNeed);
    }

    /// Serves a fixed clause list and a fixed extraction answer.
    struct Stub {
        clauses: Vec<ClauseWire>,
        answer: SpanAnswer,
    }

    impl Backend for Stub {
        fn models(&self) -> Result<Vec<ModelCapability>, BackendError> {
            Ok(vec![])
        }
        fn next_logits(&self, _: &LogitsRequest) -> Result<LogitMap, BackendError> {
            unimplemented!()
        }
        fn score(&self, _: &ScoreRequest) -> Result<Vec<f64>, BackendError> {
            unimplemented!()
        }
        fn tokenize(&self, _: &str, _: &str) -> Result<Vec<TokenId>, BackendError> {
            unimplemented!()
        }
        fn detokenize(&self, _: &str, _: &[TokenId]) -> Result<String, BackendError> {
            unimplemented!()
        }
        fn infer_clauses(&self, _: &InferRequest) -> Result<Vec<ClauseWire>, BackendError> {
            Ok(self.clauses.clone())
        }
        fn extract_span(&self, _: &ExtractRequest) -> Result<SpanAnswer, BackendError> {
            Ok(self.answer.clone())
        }
    }

    fn stub(intents: usize, needs: usize, confidence: f64) -> Stub {
        let mut clauses = Vec::new();
        for i in 0..intents.max(needs) {
            if i < intents {
                clauses.push(ClauseWire { relation: Relation::XIntent, text: format!("to act {i}") });
            }
            if i < needs {
                clauses.push(ClauseWire { relation: Relation::XNeed, text: format!("thing {i}") });
            }
        }
        Stub {
            clauses,
            answer: SpanAnswer {
                answer: "Hansel".into(),
                start: 0,
                end: 6,
                confidence,
            },
        }
    }

    fn one_sentence_story() -> StoryState {
        StoryState::from_ending_text("Hansel ran.").unwrap()
    }

    #[test]
    fn window_caps_per_relation() {
        let b = stub(7, 3, 1.0);
        let got = collect_window(&b, "c", &one_sentence_story(), 5).unwrap();
        let intents = got.iter().filter(|c| c.relation == Relation::XIntent).count();
        let needs = got.iter().filter(|c| c.relation == Relation::XNeed).count();
        assert_eq!((intents, needs), (5, 3));
        // newest first: the stub's last clause is "to act 6"
        assert_eq!(got[0].text, "to act 6");
    }

    #[test]
    fn window_size_zero_is_empty() {
        let b = stub(7, 3, 1.0);
        assert!(collect_window(&b, "c", &one_sentence_story(), 0).unwrap().is_empty());
    }

    #[test]
    fn budget_truncates() {
        let b = stub(5, 5, 1.0);
        let config = GenerationConfig::default();
        let qs = build_questions(&b, &ModelRoles::default(), &one_sentence_story(), &config).unwrap();
        assert_eq!(qs.len(), 8);
        for q in &qs {
            assert!(q.text.ends_with('?'));
            assert!(q.text.contains("Hansel"));
        }
    }

    #[test]
    fn unattributed_clauses_skipped() {
        let b = stub(5, 5, 0.0);
        let qs = build_questions(&b, &ModelRoles::default(), &one_sentence_story(), &GenerationConfig::default()).unwrap();
        assert!(qs.is_empty());
    }

    #[test]
    fn mock_attribution() {
        let m = MockBackend::with_seed(0);
        let c = clause(Relation::XIntent, "to escape");
        let name = attribute_character(&m, "mock-extract", "Hansel ran.", &c, 0.1).unwrap();
        assert_eq!(name.as_deref(), Some("Hansel"));
        let none = attribute_character(&m, "mock-extract", "he ran.", &c, 0.1).unwrap();
        assert_eq!(none, None);
    }

    #[test]
    fn mock_questions_bounded() {
        let m = MockBackend::with_seed(3);
        let st = StoryState::from_ending_text(
            "Hansel's hand still trembles as he pushes open the twice-cooked door. \
             The last time he saw the house he was glancing back over his shoulder.",
        )
        .unwrap();
        let config = GenerationConfig::default();
        let qs = build_questions(&m, &ModelRoles::default(), &st, &config).unwrap();
        assert!(qs.len() <= config.question_budget.min(2 * config.window_size));
        assert_eq!(qs.len(), 8);
        let context = context_text(&st, config.window_size);
        for q in &qs {
            assert!(context.contains(&q.character));
        }
    }

    proptest! {
        #[test]
        fn questions_round_trip(character in "[A-Z][a-z]{0,10}", text in "[a-z]{1,8}( [a-z]{1,8}){0,4}", intent in any::<bool>()) {
            let r = if intent { Relation::XIntent } else { Relation::XNeed };
            let q = Question::new(&character, clause(r, &text));
            let (kind, c, t) = Question::parse(&q.text).unwrap();
            prop_assert_eq!(kind, q.kind);
            prop_assert_eq!(c, character);
            prop_assert_eq!(t, text);
        }
    }
}
