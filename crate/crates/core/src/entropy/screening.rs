use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::responses::{Answer, ResponseRecord, ResponseSet};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScreeningRules {
    pub screener_story_id: String,
    pub screener_key: BTreeMap<String, Answer>,
    pub min_correct: usize,
    /// Longest repeating period treated as a pattern; 0 turns detection off.
    #[serde(default = "default_max_period")]
    pub max_period: usize,
}

fn default_max_period() -> usize {
    3
}

impl ScreeningRules {
    pub fn validate(&self) -> Result<()> {
        if self.min_correct > self.screener_key.len() {
            return Err(Error::Validation(format!(
                "min_correct {} exceeds the {} screener questions",
                self.min_correct,
                self.screener_key.len()
            )));
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let rules: Self = serde_json::from_str(&text).map_err(|e| Error::parse(path, e))?;
        rules.validate()?;
        Ok(rules)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EliminationReason {
    Incomplete,
    FailedScreener { correct: usize, required: usize },
    Pattern { period: usize },
}

impl std::fmt::Display for EliminationReason {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            EliminationReason::Incomplete => f.write_str("incomplete"),
            EliminationReason::FailedScreener { correct, required } => {
                write!(f, "screener {correct}/{required}")
            }
            EliminationReason::Pattern { period: 1 } => f.write_str("constant"),
            EliminationReason::Pattern { period: 2 } => f.write_str("alternating"),
            EliminationReason::Pattern { period } => write!(f, "period-{period} repeat"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Elimination {
    pub participant_id: String,
    pub reason: EliminationReason,
}

/// Smallest period `p <= max_period` such that the answers repeat with
/// period `p` and at least two full cycles are present.
pub fn detect_pattern(answers: &[Answer], max_period: usize) -> Option<usize> {
    (1..=max_period).find(|&p| {
        answers.len() >= 2 * p && answers.iter().zip(&answers[p..]).all(|(a, b)| a == b)
    })
}

fn judge(records: &[&ResponseRecord], rules: &ScreeningRules) -> Option<EliminationReason> {
    let mut screener: BTreeMap<&str, Answer> = BTreeMap::new();
    let mut rest: Vec<&ResponseRecord> = Vec::new();
    for r in records {
        if r.story_id == rules.screener_story_id {
            screener.insert(&r.question_id, r.answer);
        } else {
            rest.push(r);
        }
    }
    if rules.screener_key.keys().any(|q| !screener.contains_key(q.as_str())) {
        return Some(EliminationReason::Incomplete);
    }
    let correct = rules
        .screener_key
        .iter()
        .filter(|(q, a)| screener.get(q.as_str()) == Some(a))
        .count();
    if correct < rules.min_correct {
        return Some(EliminationReason::FailedScreener {
            correct,
            required: rules.min_correct,
        });
    }
    rest.sort_by(|a, b| {
        (a.presented_at, &a.story_id, &a.question_id).cmp(&(b.presented_at, &b.story_id, &b.question_id))
    });
    let answers: Vec<Answer> = rest.iter().map(|r| r.answer).collect();
    detect_pattern(&answers, rules.max_period).map(|period| EliminationReason::Pattern { period })
}

/// Drops every record of each participant who fails the screener story or
/// answers the other stories in an obvious repeating pattern. Kept
/// participants keep their screener answers, so screening twice changes
/// nothing.
pub fn screen(responses: &ResponseSet, rules: &ScreeningRules) -> Result<(ResponseSet, Vec<Elimination>)> {
    rules.validate()?;
    let mut by_participant: BTreeMap<&str, Vec<&ResponseRecord>> = BTreeMap::new();
    for r in responses.records() {
        by_participant.entry(&r.participant_id).or_default().push(r);
    }
    let mut eliminations = Vec::new();
    for (p, records) in &by_participant {
        if let Some(reason) = judge(records, rules) {
            eliminations.push(Elimination {
                participant_id: p.to_string(),
                reason,
            });
        }
    }
    let out: std::collections::BTreeSet<&str> =
        eliminations.iter().map(|e| e.participant_id.as_str()).collect();
    let kept = responses.filtered(|r| !out.contains(r.participant_id.as_str()));
    Ok((kept, eliminations))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::entropy::responses::{StoryInfo, StoryManifest};
    use Answer::{F, T};

    #[test]
    fn detectors() {
        assert_eq!(detect_pattern(&[T; 7], 3), Some(1));
        let alt: Vec<_> = (0..21).map(|i| if i % 2 == 0 { T } else { F }).collect();
        assert_eq!(detect_pattern(&alt, 3), Some(2));
        assert_eq!(detect_pattern(&[T, T, F, T, T, F, T], 3), Some(3));
        assert_eq!(detect_pattern(&[T, F, F, T, T, F, T], 3), None);
        assert_eq!(detect_pattern(&[T, T, F, T, T, F], 2), None);
        assert_eq!(detect_pattern(&[T], 3), None);
        assert_eq!(detect_pattern(&[T; 9], 0), None);
    }

    fn fixture(answers: &[(&str, Vec<Answer>, Vec<Answer>)]) -> (ResponseSet, ScreeningRules) {
        let mut stories = StoryManifest::new();
        stories.insert(
            "screen".into(),
            StoryInfo { system_id: "screener".into(), question_ids: vec!["a".into(), "b".into()] },
        );
        stories.insert(
            "s1".into(),
            StoryInfo { system_id: "x".into(), question_ids: (0..7).map(|i| format!("q{i}")).collect() },
        );
        let mut records = Vec::new();
        for (p, scr, rest) in answers {
            for (q, a) in ["a", "b"].iter().zip(scr) {
                records.push(ResponseRecord {
                    participant_id: p.to_string(),
                    story_id: "screen".into(),
                    question_id: q.to_string(),
                    answer: *a,
                    presented_at: 0,
                });
            }
            for (i, a) in rest.iter().enumerate() {
                records.push(ResponseRecord {
                    participant_id: p.to_string(),
                    story_id: "s1".into(),
                    question_id: format!("q{i}"),
                    answer: *a,
                    presented_at: 10 + i as u64,
                });
            }
        }
        let rules = ScreeningRules {
            screener_story_id: "screen".into(),
            screener_key: [("a".into(), T), ("b".into(), F)].into(),
            min_correct: 2,
            max_period: 3,
        };
        (ResponseSet::new(records, stories).unwrap(), rules)
    }

    #[test]
    fn screening_outcomes() {
        let mixed = vec![T, F, F, T, T, F, T];
        let (set, rules) = fixture(&[
            ("good", vec![T, F], mixed.clone()),
            ("wrong", vec![F, F], mixed.clone()),
            ("short", vec![T], mixed.clone()),
            ("allT", vec![T, F], vec![T; 7]),
        ]);
        let (kept, out) = screen(&set, &rules).unwrap();
        assert_eq!(kept.participants().into_iter().collect::<Vec<_>>(), ["good"]);
        let reasons: BTreeMap<_, _> = out.iter().map(|e| (e.participant_id.as_str(), e.reason.to_string())).collect();
        assert_eq!(reasons["wrong"], "screener 1/2");
        assert_eq!(reasons["short"], "incomplete");
        assert_eq!(reasons["allT"], "constant");
        // screener records survive for kept participants
        assert_eq!(kept.records().len(), 9);
        let (again, none) = screen(&kept, &rules).unwrap();
        assert_eq!(again, kept);
        assert!(none.is_empty());
    }

    #[test]
    fn min_correct_bound() {
        let (_, mut rules) = fixture(&[]);
        rules.min_correct = 3;
        assert!(rules.validate().is_err());
    }
}
