use serde::{Deserialize, Serialize};

/// Per-iteration log of a generation run.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunTrace {
    pub iterations: Vec<IterationRecord>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    /// Set when the round produced nothing usable and the story was left as is.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub skipped: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reference_doc: Option<String>,
    /// Text the inference and attribution steps looked at.
    pub context: String,
    pub questions: Vec<String>,
    /// Surviving candidates, best first once ranked.
    pub candidates: Vec<CandidateRecord>,
    pub rejections: Vec<RejectionRecord>,
    /// Candidates dropped as verbatim repeats.
    pub duplicates_removed: usize,
    /// Index into `candidates`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub selected: Option<usize>,
    /// Normalized ranking scores, aligned with `candidates`.
    pub distribution: Vec<f64>,
}

impl IterationRecord {
    pub fn selected_candidate(&self) -> Option<&CandidateRecord> {
        self.selected.and_then(|i| self.candidates.get(i))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateRecord {
    pub text: String,
    /// Index into the iteration's `questions`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub question: Option<usize>,
    pub decoder_score: f64,
    pub beam_rank: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub perplexity: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RejectionRecord {
    pub text: String,
    pub phrase: String,
}
