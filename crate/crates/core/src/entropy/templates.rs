use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::StoryState;

const BUILTIN: &str = include_str!("../../data/tf_templates.txt");

/// The true/false template inventory, in published order. Duplicates are
/// kept so positions stay stable.
pub fn tf_templates() -> Vec<&'static str> {
    parse_templates(BUILTIN)
}

pub fn parse_templates(text: &str) -> Vec<&str> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .collect()
}

/// Slot values for one instantiation. Event numbers are 1-based sentence
/// positions in the story.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SlotAssignment {
    pub i: Option<usize>,
    pub j: Option<usize>,
    pub k: Option<usize>,
    pub object: Option<String>,
    pub character: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Scaffold {
    /// Position in the template inventory.
    pub template_index: usize,
    pub template: String,
    pub text: String,
    /// `(event number, sentence text)` for every event the scaffold names.
    pub events: Vec<(usize, String)>,
}

impl SlotAssignment {
    pub fn validate(&self, story_len: usize) -> Result<()> {
        let events = [("i", self.i), ("j", self.j), ("k", self.k)];
        for (name, v) in events {
            if let Some(v) = v {
                if v == 0 || v > story_len {
                    return Err(Error::Validation(format!(
                        "event {name}={v} is outside 1..={story_len}"
                    )));
                }
            }
        }
        let set: Vec<(&str, usize)> = events
            .iter()
            .filter_map(|(n, v)| v.map(|v| (*n, v)))
            .collect();
        for w in set.windows(2) {
            if w[0].1 >= w[1].1 {
                return Err(Error::Validation(format!(
                    "events must satisfy {} < {}, got {} and {}",
                    w[0].0, w[1].0, w[0].1, w[1].1
                )));
            }
        }
        Ok(())
    }
}

fn event_slot(template: &str, slot: &str) -> bool {
    template.contains(slot)
}

/// Fills one template. Fails when a slot it uses is unassigned.
pub fn instantiate(
    template_index: usize,
    template: &str,
    story: &StoryState,
    a: &SlotAssignment,
) -> Result<Scaffold> {
    a.validate(story.len())?;
    let sentences: Vec<&str> = story.sentences().map(|s| s.text()).collect();
    let mut text = template.to_string();
    let mut events = Vec::new();
    for (slot, value) in [("{i}", a.i), ("{j}", a.j), ("{k}", a.k)] {
        if !event_slot(template, slot) {
            continue;
        }
        let v = value.ok_or_else(|| {
            Error::Validation(format!("template {template:?} needs event {slot}"))
        })?;
        text = text.replace(slot, &format!("E_{v}"));
        events.push((v, sentences[v - 1].to_string()));
    }
    if template.contains("E_2") {
        let Some(e2) = sentences.get(1) else {
            return Err(Error::Validation(format!(
                "template {template:?} refers to E_2 but the story has one sentence"
            )));
        };
        if !events.iter().any(|(n, _)| *n == 2) {
            events.push((2, e2.to_string()));
        }
    }
    for (slot, value, what) in [
        ("{O}", &a.object, "an object"),
        ("{C}", &a.character, "a character"),
    ] {
        if template.contains(slot) {
            let v = value.as_deref().ok_or_else(|| {
                Error::Validation(format!("template {template:?} needs {what}"))
            })?;
            text = text.replace(slot, v);
        }
    }
    events.sort();
    Ok(Scaffold {
        template_index,
        template: template.to_string(),
        text,
        events,
    })
}

/// Every inventory template whose slots `a` fills. Templates needing an
/// unassigned slot are left out.
pub fn instantiate_tf_templates(story: &StoryState, a: &SlotAssignment) -> Result<Vec<Scaffold>> {
    a.validate(story.len())?;
    let mut out = Vec::new();
    for (idx, t) in tf_templates().into_iter().enumerate() {
        match instantiate(idx, t, story, a) {
            Ok(s) => out.push(s),
            Err(Error::Validation(_)) => continue,
            Err(e) => return Err(e),
        }
    }
    Ok(out)
}
