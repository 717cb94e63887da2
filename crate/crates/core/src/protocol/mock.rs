//! Deterministic mock backend.
//!
//! Every answer is a pure function of the mock's seed and the request, so
//! runs are reproducible across processes and platforms.
//!
//! Logits: for query token `q` after `tokens`, with `w` the last (at most)
//! four tokens,
//!
//! ```text
//! h     = FNV1a64(LE64(seed) ++ LE32(w_0) ++ .. ++ LE32(q))
//! logit = (h mod 10007) / 10007 * 10 - 5
//! ```
//!
//! Requests carrying encoder context (seq2seq models) insert
//! `LE32(u32::MAX) ++ LE32(c_0) ++ .. ++ LE32(u32::MAX)` right after the
//! seed, so the context steers generation.
//!
//! Tokenizer: one token per UTF-8 byte; the last vocabulary id is EOS.
//! Vocabularies smaller than 256 fold bytes modulo `vocab_size - 1`.

use std::collections::BTreeMap;
use std::sync::OnceLock;

use serde::Deserialize;

use super::fnv::Fnv1a64;
use super::{
    log_softmax, Backend, BackendError, ClauseWire, ExtractRequest, InferRequest, LogitMap,
    LogitsRequest, ModelCapability, ModelKind, Relation, ScoreRequest, SpanAnswer, TokenId,
};

/// Models the mock advertises, one per pipeline role.
pub const MOCK_MODELS: &[(&str, ModelKind)] = &[
    ("mock-comet", ModelKind::Seq2seq),
    ("mock-extract", ModelKind::Extractive),
    ("mock-qa", ModelKind::Causal),
    ("mock-ranker", ModelKind::Causal),
    ("mock-bart", ModelKind::Seq2seq),
];

const CONTEXT_WINDOW: usize = 4;
const MODULUS: u64 = 10007;

/// Capitalized words the extractor never returns as a character.
const STOP_WORDS: &[&str] = &[
    "A", "An", "And", "As", "At", "But", "By", "For", "From", "He", "Her", "Hers", "Him", "His",
    "How", "I", "If", "In", "It", "Its", "My", "No", "Not", "Of", "On", "Or", "Our", "She", "So",
    "That", "The", "Their", "Then", "There", "These", "They", "This", "Those", "To", "Was", "We",
    "What", "When", "Where", "Which", "While", "Who", "Why", "With", "Yes", "You", "Your",
];

#[derive(Debug, Clone, PartialEq)]
pub struct MockConfig {
    pub seed: u64,
    pub vocab_size: u32,
    /// Every logit is 0.0, so every distribution is uniform.
    pub uniform: bool,
    pub max_context: usize,
}

impl Default for MockConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            vocab_size: 256,
            uniform: false,
            max_context: 8192,
        }
    }
}

#[derive(Debug, Clone)]
pub struct MockBackend {
    config: MockConfig,
}

#[derive(Deserialize)]
struct ClauseFixtures {
    #[serde(rename = "xIntent")]
    intent: Vec<String>,
    #[serde(rename = "xNeed")]
    need: Vec<String>,
}

fn fixtures() -> &'static ClauseFixtures {
    static FIXTURES: OnceLock<ClauseFixtures> = OnceLock::new();
    FIXTURES.get_or_init(|| {
        serde_json::from_str(include_str!("../../data/comet_fixtures.json"))
            .expect("bundled clause fixtures parse")
    })
}

/// The clause table the mock draws from for `relation`.
pub fn fixture_clauses(relation: Relation) -> &'static [String] {
    match relation {
        Relation::XIntent => &fixtures().intent,
        Relation::XNeed => &fixtures().need,
    }
}

impl MockBackend {
    pub fn new(config: MockConfig) -> Self {
        assert!(config.vocab_size >= 2, "mock vocabulary needs at least 2 ids");
        Self { config }
    }

    pub fn with_seed(seed: u64) -> Self {
        Self::new(MockConfig {
            seed,
            ..MockConfig::default()
        })
    }

    pub fn config(&self) -> &MockConfig {
        &self.config
    }

    pub fn eos(&self) -> TokenId {
        self.config.vocab_size - 1
    }

    fn kind_of(&self, model: &str) -> Result<ModelKind, BackendError> {
        MOCK_MODELS
            .iter()
            .find(|(id, _)| *id == model)
            .map(|(_, k)| *k)
            .ok_or_else(|| BackendError::unknown_model(model))
    }

    fn check_tokens(&self, tokens: &[TokenId], what: &str) -> Result<(), BackendError> {
        match tokens.iter().find(|&&t| t >= self.config.vocab_size) {
            Some(t) => Err(BackendError::bad_request(format!(
                "{what} id {t} outside vocabulary of {}",
                self.config.vocab_size
            ))),
            None => Ok(()),
        }
    }

    fn check_generative(
        &self,
        model: &str,
        context: Option<&[TokenId]>,
    ) -> Result<ModelKind, BackendError> {
        let kind = self.kind_of(model)?;
        match (kind, context) {
            (ModelKind::Extractive, _) => Err(BackendError::bad_request(format!(
                "model {model:?} is extractive and has no token distribution"
            ))),
            (ModelKind::Seq2seq, None) => Err(BackendError::bad_request(format!(
                "model {model:?} is seq2seq and needs context_tokens"
            ))),
            (ModelKind::Causal, Some(_)) => Err(BackendError::bad_request(format!(
                "model {model:?} is causal and takes no context_tokens"
            ))),
            (kind, ctx) => {
                if let Some(ctx) = ctx {
                    self.check_tokens(ctx, "context token")?;
                }
                Ok(kind)
            }
        }
    }

    /// Full-vocabulary logits after `tokens`, in id order.
    fn raw_logits(&self, tokens: &[TokenId], context: Option<&[TokenId]>) -> Vec<f64> {
        let vocab = self.config.vocab_size;
        if self.config.uniform {
            return vec![0.0; vocab as usize];
        }
        let mut prefix = Fnv1a64::new();
        prefix.write_u64(self.config.seed);
        if let Some(ctx) = context {
            prefix.write_u32(u32::MAX);
            for &t in ctx {
                prefix.write_u32(t);
            }
            prefix.write_u32(u32::MAX);
        }
        let start = tokens.len().saturating_sub(CONTEXT_WINDOW);
        for &t in &tokens[start..] {
            prefix.write_u32(t);
        }
        (0..vocab)
            .map(|q| {
                let mut h = prefix;
                h.write_u32(q);
                (h.finish() % MODULUS) as f64 / MODULUS as f64 * 10.0 - 5.0
            })
            .collect()
    }

    fn step_log_softmax(&self, tokens: &[TokenId], context: Option<&[TokenId]>) -> Vec<f64> {
        let logits = self.raw_logits(tokens, context);
        log_softmax(logits.into_iter().enumerate().map(|(i, l)| (i as TokenId, l)))
            .into_iter()
            .map(|(_, lp)| lp)
            .collect()
    }
}

impl Backend for MockBackend {
    fn models(&self) -> Result<Vec<ModelCapability>, BackendError> {
        Ok(MOCK_MODELS
            .iter()
            .map(|(id, kind)| ModelCapability {
                model_id: id.to_string(),
                vocab_size: self.config.vocab_size,
                kind: *kind,
                max_context: self.config.max_context,
                eos_token_id: (*kind != ModelKind::Extractive).then(|| self.eos()),
            })
            .collect())
    }

    fn next_logits(&self, req: &LogitsRequest) -> Result<LogitMap, BackendError> {
        let context = req.context_tokens.as_deref();
        self.check_generative(&req.model, context)?;
        self.check_tokens(&req.tokens, "token")?;
        if let Some(inc) = &req.include_tokens {
            self.check_tokens(inc, "include token")?;
        }
        if req.tokens.len() >= self.config.max_context {
            return Err(BackendError::bad_request(format!(
                "{} tokens exceed max_context {}",
                req.tokens.len(),
                self.config.max_context
            )));
        }
        let entries: BTreeMap<TokenId, f64> = self
            .raw_logits(&req.tokens, context)
            .into_iter()
            .enumerate()
            .map(|(i, l)| (i as TokenId, l))
            .collect();
        Ok(LogitMap {
            entries,
            complete: true,
        })
    }

    fn score(&self, req: &ScoreRequest) -> Result<Vec<f64>, BackendError> {
        let context = req.context_tokens.as_deref();
        let kind = self.check_generative(&req.model, context)?;
        self.check_tokens(&req.tokens, "token")?;
        if req.tokens.len() > self.config.max_context {
            return Err(BackendError::bad_request(format!(
                "{} tokens exceed max_context {}",
                req.tokens.len(),
                self.config.max_context
            )));
        }
        let first = match kind {
            ModelKind::Causal => 1,
            _ => 0,
        };
        if req.tokens.len() < first + 1 {
            return Err(BackendError::bad_request(format!(
                "scoring needs at least {} tokens for a {kind:?} model",
                first + 1
            )));
        }
        Ok((first..req.tokens.len())
            .map(|t| self.step_log_softmax(&req.tokens[..t], context)[req.tokens[t] as usize])
            .collect())
    }

    fn tokenize(&self, model: &str, text: &str) -> Result<Vec<TokenId>, BackendError> {
        self.kind_of(model)?;
        let eos = self.eos();
        Ok(text
            .bytes()
            .map(|b| {
                let b = TokenId::from(b);
                if b < eos {
                    b
                } else {
                    b % eos
                }
            })
            .collect())
    }

    fn detokenize(&self, model: &str, tokens: &[TokenId]) -> Result<String, BackendError> {
        self.kind_of(model)?;
        self.check_tokens(tokens, "token")?;
        let eos = self.eos();
        let mut bytes = Vec::with_capacity(tokens.len());
        for &t in tokens.iter().filter(|&&t| t != eos) {
            match u8::try_from(t) {
                Ok(b) => bytes.push(b),
                Err(_) => bytes.extend_from_slice("\u{FFFD}".as_bytes()),
            }
        }
        Ok(String::from_utf8_lossy(&bytes).into_owned())
    }

    fn infer_clauses(&self, req: &InferRequest) -> Result<Vec<ClauseWire>, BackendError> {
        self.kind_of(&req.model)?;
        if req.relations.is_empty() {
            return Err(BackendError::bad_request("relations must not be empty"));
        }
        let mut wanted = Vec::new();
        for r in &req.relations {
            let r: Relation = r.parse()?;
            if !wanted.contains(&r) {
                wanted.push(r);
            }
        }
        wanted.sort();

        let mut h = Fnv1a64::new();
        h.write_u64(self.config.seed);
        h.write(req.text.as_bytes());
        let h = h.finish();

        let per_relation: Vec<(Relation, &[String], usize)> = wanted
            .iter()
            .map(|&r| {
                let table = fixture_clauses(r);
                let shift = 16 * (r as u32);
                let start = ((h >> shift) % table.len() as u64) as usize;
                (r, table, start)
            })
            .collect();
        let mut out = Vec::new();
        for i in 0..req.count {
            for (relation, table, start) in &per_relation {
                if i < table.len() {
                    out.push(ClauseWire {
                        relation: *relation,
                        text: table[(start + i) % table.len()].clone(),
                    });
                }
            }
        }
        Ok(out)
    }

    fn extract_span(&self, req: &ExtractRequest) -> Result<SpanAnswer, BackendError> {
        self.kind_of(&req.model)?;
        if req.context.trim().is_empty() || req.question.trim().is_empty() {
            return Err(BackendError::bad_request("context and question must be non-empty"));
        }
        Ok(first_name_like_word(&req.context)
            .map(|(start, end)| SpanAnswer {
                answer: req.context[start..end].to_string(),
                start,
                end,
                confidence: 1.0,
            })
            .unwrap_or_else(SpanAnswer::empty))
    }
}

/// Byte range of the first capitalized alphabetic word not in the stop list.
fn first_name_like_word(text: &str) -> Option<(usize, usize)> {
    let mut start = None;
    let check = |s: usize, e: usize| {
        let word = &text[s..e];
        let capitalized = word.chars().next().is_some_and(char::is_uppercase);
        (capitalized && !STOP_WORDS.contains(&word)).then_some((s, e))
    };
    for (i, c) in text.char_indices() {
        match (c.is_alphabetic(), start) {
            (true, None) => start = Some(i),
            (false, Some(s)) => {
                if let Some(hit) = check(s, i) {
                    return Some(hit);
                }
                start = None;
            }
            _ => {}
        }
    }
    start.and_then(|s| check(s, text.len()))
}
