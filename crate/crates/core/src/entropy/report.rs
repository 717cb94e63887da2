use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;

use serde::{Deserialize, Serialize};

use super::responses::{Answer, ResponseSet};
use super::screening::{screen, Elimination, ScreeningRules};
use super::stats::{mean, median, question_entropy};
use crate::error::Result;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuestionEntropy {
    pub story_id: String,
    pub question_id: String,
    pub t: u64,
    pub f: u64,
    pub entropy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoryIndex {
    pub story_id: String,
    pub system_id: String,
    /// Mean entropy over the story's answered questions.
    pub index: f64,
    pub questions: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemIndex {
    pub system_id: String,
    /// Median of the system's story indices.
    pub index: f64,
    pub stories: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EntropyReport {
    pub questions: Vec<QuestionEntropy>,
    pub stories: Vec<StoryIndex>,
    pub systems: Vec<SystemIndex>,
    pub eliminated: Vec<Elimination>,
    pub warnings: Vec<String>,
}

impl EntropyReport {
    pub fn system(&self, system_id: &str) -> Option<&SystemIndex> {
        self.systems.iter().find(|s| s.system_id == system_id)
    }

    /// Per-story indices as CSV, one row per story, for box plots.
    pub fn write_story_csv<W: Write>(&self, w: W) -> csv::Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["story_id", "system_id", "entropy_index", "questions"])?;
        for s in &self.stories {
            out.write_record([
                s.story_id.as_str(),
                s.system_id.as_str(),
                &s.index.to_string(),
                &s.questions.to_string(),
            ])?;
        }
        out.flush()?;
        Ok(())
    }
}

/// How much lower `index` is than `baseline`, as a fraction of `baseline`.
pub fn relative_gap(index: f64, baseline: f64) -> f64 {
    (baseline - index) / baseline
}

/// Entropy per question, mean per story, median per system. Stories in
/// `exclude` (the screener) are left out; stories with no answers are
/// dropped with a warning.
pub fn aggregate(responses: &ResponseSet, exclude: &BTreeSet<String>) -> EntropyReport {
    let mut counts: BTreeMap<(&str, &str), (u64, u64)> = BTreeMap::new();
    for r in responses.records() {
        if exclude.contains(&r.story_id) {
            continue;
        }
        let c = counts.entry((&r.story_id, &r.question_id)).or_default();
        match r.answer {
            Answer::T => c.0 += 1,
            Answer::F => c.1 += 1,
        }
    }

    let mut report = EntropyReport::default();
    let mut per_system: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
    for (story_id, info) in responses.stories() {
        if exclude.contains(story_id) {
            continue;
        }
        let mut entropies = Vec::new();
        for q in &info.question_ids {
            if let Some(&(t, f)) = counts.get(&(story_id.as_str(), q.as_str())) {
                let entropy = question_entropy(t, f).expect("counted at least one answer");
                entropies.push(entropy);
                report.questions.push(QuestionEntropy {
                    story_id: story_id.clone(),
                    question_id: q.clone(),
                    t,
                    f,
                    entropy,
                });
            }
        }
        let Some(index) = mean(&entropies) else {
            let msg = format!("story {story_id} has no answered questions; excluded");
            log::warn!("{msg}");
            report.warnings.push(msg);
            continue;
        };
        per_system.entry(&info.system_id).or_default().push(index);
        report.stories.push(StoryIndex {
            story_id: story_id.clone(),
            system_id: info.system_id.clone(),
            index,
            questions: entropies.len(),
        });
    }
    for (system_id, indices) in per_system {
        report.systems.push(SystemIndex {
            system_id: system_id.to_string(),
            index: median(&indices).expect("non-empty"),
            stories: indices.len(),
        });
    }
    report
}

/// Screens (when rules are given) and aggregates what remains.
pub fn entropy_report(responses: &ResponseSet, rules: Option<&ScreeningRules>) -> Result<EntropyReport> {
    let Some(rules) = rules else {
        return Ok(aggregate(responses, &BTreeSet::new()));
    };
    let (kept, eliminated) = screen(responses, rules)?;
    let mut report = aggregate(&kept, &[rules.screener_story_id.clone()].into());
    report.eliminated = eliminated;
    Ok(report)
}
