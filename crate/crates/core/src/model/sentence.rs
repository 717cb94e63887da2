use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Abbreviations that end in a period but never end a sentence.
pub const DEFAULT_ABBREVIATIONS: &[&str] = &[
    "Mr.", "Mrs.", "Ms.", "Dr.", "St.", "Jr.", "Sr.", "Prof.", "Mt.", "vs.", "e.g.", "i.e.",
];

/// One event unit of a story: a trimmed, non-empty run of text.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Sentence {
    text: String,
    index: usize,
}

impl Sentence {
    /// Builds a sentence, collapsing internal whitespace runs to one space.
    pub fn new(text: &str, index: usize) -> Result<Self> {
        let text = normalize_whitespace(text);
        if text.is_empty() {
            return Err(Error::Contract("sentence text is empty".into()));
        }
        Ok(Self { text, index })
    }

    pub fn text(&self) -> &str {
        &self.text
    }

    /// Position in the containing list, 0 = earliest.
    pub fn index(&self) -> usize {
        self.index
    }

    pub(crate) fn with_index(mut self, index: usize) -> Self {
        self.index = index;
        self
    }
}

impl std::fmt::Display for Sentence {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.text)
    }
}

/// Collapses every whitespace run to a single space and trims both ends.
pub fn normalize_whitespace(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Splits text at `.`, `!` or `?` followed by whitespace, using the default
/// abbreviation guard.
pub fn split_sentences(text: &str) -> Vec<Sentence> {
    split_sentences_with(text, DEFAULT_ABBREVIATIONS)
}

pub fn split_sentences_with(text: &str, abbreviations: &[&str]) -> Vec<Sentence> {
    let mut out = Vec::new();
    let mut start = 0;
    let mut chars = text.char_indices().peekable();
    while let Some((pos, c)) = chars.next() {
        if !matches!(c, '.' | '!' | '?') {
            continue;
        }
        let end = pos + c.len_utf8();
        let followed_by_space = match chars.peek() {
            Some((_, next)) => next.is_whitespace(),
            None => false,
        };
        if !followed_by_space {
            continue;
        }
        if c == '.' && ends_with_abbreviation(&text[start..end], abbreviations) {
            continue;
        }
        push_piece(&mut out, &text[start..end]);
        start = end;
    }
    push_piece(&mut out, &text[start..]);
    out
}

fn ends_with_abbreviation(piece: &str, abbreviations: &[&str]) -> bool {
    let last_word = piece
        .rsplit(char::is_whitespace)
        .next()
        .unwrap_or_default();
    abbreviations.contains(&last_word)
}

fn push_piece(out: &mut Vec<Sentence>, piece: &str) {
    if let Ok(s) = Sentence::new(piece, out.len()) {
        out.push(s);
    }
}
