use std::collections::{BTreeMap, BTreeSet};
use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Answer {
    T,
    F,
}

impl std::str::FromStr for Answer {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.trim() {
            "T" | "t" => Ok(Answer::T),
            "F" | "f" => Ok(Answer::F),
            other => Err(format!("answer must be T or F, got {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResponseRecord {
    pub participant_id: String,
    pub story_id: String,
    pub question_id: String,
    pub answer: Answer,
    /// Order in which the participant saw the question.
    pub presented_at: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StoryInfo {
    pub system_id: String,
    pub question_ids: Vec<String>,
}

/// Story id to system and question list.
pub type StoryManifest = BTreeMap<String, StoryInfo>;

/// Validated T/F responses.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ResponseSet {
    records: Vec<ResponseRecord>,
    stories: StoryManifest,
}

impl ResponseSet {
    /// Rejects duplicate (participant, story, question) triples and
    /// questions that do not belong to their story, listing every problem.
    pub fn new(records: Vec<ResponseRecord>, stories: StoryManifest) -> Result<Self> {
        let mut problems = Vec::new();
        let mut seen = BTreeSet::new();
        for (row, r) in records.iter().enumerate() {
            let key = (&r.participant_id, &r.story_id, &r.question_id);
            if !seen.insert(key) {
                problems.push(format!(
                    "record {}: duplicate answer by {} to {}/{}",
                    row + 1,
                    r.participant_id,
                    r.story_id,
                    r.question_id
                ));
            }
            match stories.get(&r.story_id) {
                None => problems.push(format!("record {}: unknown story {:?}", row + 1, r.story_id)),
                Some(s) if !s.question_ids.contains(&r.question_id) => problems.push(format!(
                    "record {}: question {:?} is not part of story {:?}",
                    row + 1,
                    r.question_id,
                    r.story_id
                )),
                Some(_) => {}
            }
        }
        if !problems.is_empty() {
            return Err(Error::Ingest { problems });
        }
        Ok(Self { records, stories })
    }

    pub fn records(&self) -> &[ResponseRecord] {
        &self.records
    }

    pub fn stories(&self) -> &StoryManifest {
        &self.stories
    }

    pub fn participants(&self) -> BTreeSet<&str> {
        self.records.iter().map(|r| r.participant_id.as_str()).collect()
    }

    /// Same stories, only the records `keep` accepts.
    pub fn filtered(&self, mut keep: impl FnMut(&ResponseRecord) -> bool) -> Self {
        Self {
            records: self.records.iter().filter(|r| keep(r)).cloned().collect(),
            stories: self.stories.clone(),
        }
    }

    pub fn from_paths(responses: &Path, manifest: &Path) -> Result<Self> {
        let stories = read_manifest(manifest)?;
        let file = std::fs::File::open(responses).map_err(|e| Error::io(responses, e))?;
        let records = read_responses_csv(file).map_err(|e| match e {
            Error::Ingest { problems } => Error::Ingest {
                problems: problems
                    .into_iter()
                    .map(|p| format!("{}: {p}", responses.display()))
                    .collect(),
            },
            other => other,
        })?;
        Self::new(records, stories)
    }
}

pub fn read_manifest(path: &Path) -> Result<StoryManifest> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::parse(path, e))
}

#[derive(Deserialize)]
struct CsvRow {
    participant_id: String,
    story_id: String,
    question_id: String,
    answer: String,
    presented_at: String,
}

/// Reads `participant_id,story_id,question_id,answer,presented_at`.
pub fn read_responses_csv<R: Read>(input: R) -> Result<Vec<ResponseRecord>> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
    let mut records = Vec::new();
    let mut problems = Vec::new();
    for (i, row) in reader.deserialize::<CsvRow>().enumerate() {
        let line = i + 2;
        let row = match row {
            Ok(r) => r,
            Err(e) => {
                problems.push(format!("line {line}: {e}"));
                continue;
            }
        };
        let answer = row.answer.parse::<Answer>();
        let presented = row.presented_at.parse::<u64>();
        match (answer, presented) {
            (Ok(answer), Ok(presented_at)) => records.push(ResponseRecord {
                participant_id: row.participant_id,
                story_id: row.story_id,
                question_id: row.question_id,
                answer,
                presented_at,
            }),
            (Err(e), _) => problems.push(format!("line {line}: {e}")),
            (_, Err(_)) => problems.push(format!(
                "line {line}: presented_at must be a non-negative integer, got {:?}",
                row.presented_at
            )),
        }
    }
    if problems.is_empty() {
        Ok(records)
    } else {
        Err(Error::Ingest { problems })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn manifest() -> StoryManifest {
        [(
            "s1".to_string(),
            StoryInfo {
                system_id: "edgar".into(),
                question_ids: vec!["q1".into(), "q2".into()],
            },
        )]
        .into()
    }

    #[test]
    fn parses_csv() {
        let csv = "participant_id,story_id,question_id,answer,presented_at\np1,s1,q1,T,0\np1,s1,q2, F ,1\n";
        let r = read_responses_csv(csv.as_bytes()).unwrap();
        assert_eq!(r.len(), 2);
        assert_eq!(r[1].answer, Answer::F);
        ResponseSet::new(r, manifest()).unwrap();
    }

    #[test]
    fn reports_every_bad_row() {
        let csv = "participant_id,story_id,question_id,answer,presented_at\np1,s1,q1,X,0\np1,s1,q2,T,first\n";
        let Err(Error::Ingest { problems }) = read_responses_csv(csv.as_bytes()) else {
            panic!("expected ingest error");
        };
        assert_eq!(problems.len(), 2);
        assert!(problems[0].starts_with("line 2"));
    }

    #[test]
    fn rejects_duplicates_and_foreign_questions() {
        let rec = |q: &str| ResponseRecord {
            participant_id: "p".into(),
            story_id: "s1".into(),
            question_id: q.into(),
            answer: Answer::T,
            presented_at: 0,
        };
        let Err(Error::Ingest { problems }) = ResponseSet::new(vec![rec("q1"), rec("q1"), rec("q9")], manifest()) else {
            panic!("expected ingest error");
        };
        assert_eq!(problems.len(), 2);
    }
}
