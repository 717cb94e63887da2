//! Story-level domain types: sentences, backward-growing story state,
//! generation settings and the run trace.

mod config;
mod sentence;
mod story;
mod trace;

pub use config::GenerationConfig;
pub use sentence::{
    normalize_whitespace, split_sentences, split_sentences_with, Sentence, DEFAULT_ABBREVIATIONS,
};
pub use story::StoryState;
pub use trace::{CandidateRecord, IterationRecord, RejectionRecord, RunTrace};
