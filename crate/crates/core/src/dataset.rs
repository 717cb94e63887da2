//! Training pairs for the backward seq2seq baseline.
//!
//! Each narrative contributes one contiguous chunk of `2 + 2k` sentences,
//! `k` uniform on 1..=4. In the default backward direction the last two
//! sentences of the chunk are the source and the `2k` before them the
//! target, matching how the baseline generates: from the current earliest
//! two sentences toward what came before. The literal direction takes the
//! first two as source and the next `2k` as target.

use std::io::Write;

use rand::seq::IndexedRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{split_sentences, Sentence};

pub const K_RANGE: std::ops::RangeInclusive<usize> = 1..=4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    #[default]
    Backward,
    Literal,
}

impl std::str::FromStr for Direction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "backward" => Ok(Direction::Backward),
            "literal" => Ok(Direction::Literal),
            other => Err(Error::Validation(format!(
                "unknown direction {other:?} (expected backward or literal)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Narrative {
    pub id: String,
    pub sentences: Vec<Sentence>,
}

impl Narrative {
    pub fn from_text(id: &str, text: &str) -> Self {
        Self {
            id: id.to_string(),
            sentences: split_sentences(text),
        }
    }
}

/// Sentence indices refer to positions in the source narrative.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SourceTargetPair {
    pub source: Vec<Sentence>,
    pub target: Vec<Sentence>,
    pub k: usize,
    pub narrative_id: String,
    /// Index of the first sentence of the chunk.
    pub offset: usize,
}

impl SourceTargetPair {
    /// Source and target are well sized and together form one unbroken run
    /// of the narrative in the order `direction` implies.
    pub fn is_contiguous(&self, narrative: &[Sentence], direction: Direction) -> bool {
        if self.source.len() != 2 || self.target.len() != 2 * self.k || !K_RANGE.contains(&self.k) {
            return false;
        }
        let chunk: Vec<&Sentence> = match direction {
            Direction::Literal => self.source.iter().chain(&self.target).collect(),
            Direction::Backward => self.target.iter().chain(&self.source).collect(),
        };
        chunk.iter().enumerate().all(|(i, s)| {
            s.index() == self.offset + i && narrative.get(self.offset + i) == Some(*s)
        })
    }
}

/// One pair per narrative that fits some `k`. Narratives that fit none are
/// skipped and logged.
pub fn prep_bbart_dataset<R: Rng + ?Sized>(
    narratives: &[Narrative],
    rng: &mut R,
    direction: Direction,
) -> Result<Vec<SourceTargetPair>> {
    if narratives.is_empty() {
        return Err(Error::Config("no narratives to prepare".into()));
    }
    let mut out = Vec::with_capacity(narratives.len());
    for n in narratives {
        match sample_pair(n, rng, direction) {
            Some(p) => out.push(p),
            None => log::warn!(
                "skipping narrative {}: {} sentences is too short for any chunk",
                n.id,
                n.sentences.len()
            ),
        }
    }
    Ok(out)
}

fn sample_pair<R: Rng + ?Sized>(
    n: &Narrative,
    rng: &mut R,
    direction: Direction,
) -> Option<SourceTargetPair> {
    let mut untried: Vec<usize> = K_RANGE.collect();
    while !untried.is_empty() {
        let k = *untried.choose(rng)?;
        let width = 2 + 2 * k;
        if n.sentences.len() >= width {
            let offset = rng.random_range(0..=n.sentences.len() - width);
            let chunk = &n.sentences[offset..offset + width];
            let (source, target) = match direction {
                Direction::Literal => (chunk[..2].to_vec(), chunk[2..].to_vec()),
                Direction::Backward => (chunk[2 * k..].to_vec(), chunk[..2 * k].to_vec()),
            };
            return Some(SourceTargetPair {
                source,
                target,
                k,
                narrative_id: n.id.clone(),
                offset,
            });
        }
        untried.retain(|&u| u != k);
    }
    None
}

/// One JSON object per line.
pub fn write_jsonl<W: Write>(pairs: &[SourceTargetPair], mut w: W) -> std::io::Result<()> {
    for p in pairs {
        serde_json::to_writer(&mut w, p)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn narrative(id: &str, n: usize) -> Narrative {
        let text: Vec<String> = (0..n).map(|i| format!("Event {i} happened.")).collect();
        Narrative::from_text(id, &text.join(" "))
    }

    #[test]
    fn six_sentences_k_two_has_one_offset() {
        let n = narrative("six", 6);
        let mut seen = std::collections::BTreeSet::new();
        for seed in 0..200 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let p = sample_pair(&n, &mut rng, Direction::Literal).unwrap();
            assert!(p.k <= 2);
            if p.k == 2 {
                assert_eq!(p.offset, 0);
                assert_eq!(p.source, n.sentences[0..2]);
                assert_eq!(p.target, n.sentences[2..6]);
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let b = sample_pair(&n, &mut rng, Direction::Backward).unwrap();
                assert_eq!(b.source, n.sentences[4..6]);
                assert_eq!(b.target, n.sentences[0..4]);
            }
            seen.insert(p.k);
        }
        assert_eq!(seen, [1, 2].into());
    }

    #[test]
    fn too_short_is_skipped() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let out = prep_bbart_dataset(&[narrative("short", 3), narrative("ok", 4)], &mut rng, Direction::Backward).unwrap();
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].narrative_id, "ok");
        assert_eq!(out[0].k, 1);
    }

    #[test]
    fn empty_input_is_config_error() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(matches!(prep_bbart_dataset(&[], &mut rng, Direction::Backward), Err(Error::Config(_))));
    }

    #[test]
    fn pairs_are_contiguous() {
        let ns: Vec<_> = (4..30).map(|n| narrative(&format!("n{n}"), n)).collect();
        for dir in [Direction::Backward, Direction::Literal] {
            let mut rng = ChaCha8Rng::seed_from_u64(11);
            for p in prep_bbart_dataset(&ns, &mut rng, dir).unwrap() {
                let n = ns.iter().find(|n| n.id == p.narrative_id).unwrap();
                assert!(p.is_contiguous(&n.sentences, dir), "{p:?}");
                let other = match dir {
                    Direction::Backward => Direction::Literal,
                    Direction::Literal => Direction::Backward,
                };
                assert!(!p.is_contiguous(&n.sentences, other));
            }
        }
    }

    #[test]
    fn jsonl_fields() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let pairs = prep_bbart_dataset(&[narrative("x", 4)], &mut rng, Direction::Literal).unwrap();
        let mut buf = Vec::new();
        write_jsonl(&pairs, &mut buf).unwrap();
        let line = String::from_utf8(buf).unwrap();
        let v: serde_json::Value = serde_json::from_str(line.trim_end()).unwrap();
        for f in ["source", "target", "k", "narrative_id", "offset"] {
            assert!(v.get(f).is_some(), "{f}");
        }
        assert_eq!(line.lines().count(), 1);
    }

    #[test]
    fn direction_names() {
        assert_eq!("literal".parse::<Direction>().unwrap(), Direction::Literal);
        assert!("sideways".parse::<Direction>().is_err());
    }
}
