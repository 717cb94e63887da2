use serde::{Deserialize, Serialize};

use super::sentence::{split_sentences, Sentence};
use crate::error::{Error, Result};

/// A story under backward construction.
///
/// Sentences are held earliest-first. `ending` is fixed at construction and
/// never changes; generation only grows `generated` at the front. `horizon`
/// accumulates text produced in earlier iterations so decoding penalties
/// can see it without it entering the prompt.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StoryState {
    generated: Vec<Sentence>,
    ending: Vec<Sentence>,
    horizon: Vec<Sentence>,
}

impl StoryState {
    pub fn from_ending(ending: Vec<Sentence>) -> Result<Self> {
        if ending.is_empty() {
            return Err(Error::Validation("ending has no sentences".into()));
        }
        Ok(Self {
            generated: Vec::new(),
            ending: reindex(ending, 0),
            horizon: Vec::new(),
        })
    }

    pub fn from_ending_text(text: &str) -> Result<Self> {
        Self::from_ending(split_sentences(text))
    }

    pub fn generated(&self) -> &[Sentence] {
        &self.generated
    }

    pub fn ending(&self) -> &[Sentence] {
        &self.ending
    }

    pub fn horizon(&self) -> &[Sentence] {
        &self.horizon
    }

    /// All sentences in narrative order: generated, then ending.
    pub fn sentences(&self) -> impl Iterator<Item = &Sentence> {
        self.generated.iter().chain(self.ending.iter())
    }

    pub fn len(&self) -> usize {
        self.generated.len() + self.ending.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// The earliest `n` sentences (fewer if the story is shorter).
    pub fn earliest(&self, n: usize) -> Vec<&Sentence> {
        self.sentences().take(n).collect()
    }

    /// Sentences joined by single spaces.
    pub fn full_text(&self) -> String {
        join(self.sentences())
    }

    pub fn ending_text(&self) -> String {
        join(self.ending.iter())
    }

    pub fn horizon_text(&self) -> String {
        join(self.horizon.iter())
    }

    /// One sentence per line, ending last.
    pub fn render(&self) -> String {
        let mut out = String::new();
        for s in self.sentences() {
            out.push_str(s.text());
            out.push('\n');
        }
        out
    }

    /// Places `sentences` before everything generated so far and records
    /// them in the horizon.
    pub fn prepend(&self, sentences: &[Sentence]) -> Result<Self> {
        if sentences.is_empty() {
            return Err(Error::Contract("prepend needs at least one sentence".into()));
        }
        let mut generated = sentences.to_vec();
        generated.extend(self.generated.iter().cloned());
        let mut horizon = self.horizon.clone();
        horizon.extend(sentences.iter().cloned());
        let generated = reindex(generated, 0);
        let ending = reindex(self.ending.clone(), generated.len());
        let horizon = reindex(horizon, 0);
        Ok(Self {
            generated,
            ending,
            horizon,
        })
    }

    /// Adds text to the horizon only, leaving the story itself untouched.
    pub fn extend_horizon(&self, sentences: &[Sentence]) -> Self {
        let mut next = self.clone();
        next.horizon.extend(sentences.iter().cloned());
        next.horizon = reindex(next.horizon, 0);
        next
    }
}

fn reindex(v: Vec<Sentence>, offset: usize) -> Vec<Sentence> {
    v.into_iter()
        .enumerate()
        .map(|(i, s)| s.with_index(offset + i))
        .collect()
}

fn join<'a>(it: impl Iterator<Item = &'a Sentence>) -> String {
    it.map(Sentence::text).collect::<Vec<_>>().join(" ")
}
