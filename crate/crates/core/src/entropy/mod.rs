//! Entropy index harness: T/F question templates, response ingestion,
//! participant screening and agreement statistics.
//!
//! Agreement on a true/false question is measured as the binary entropy of
//! the answers (bits). A story's index is the mean over its questions and a
//! system's index the median over its stories. The KL divergence of the
//! answer split from a fair coin is the complement, `1 - H`.

mod report;
mod responses;
mod screening;
mod stats;
mod templates;

pub use report::{
    aggregate, entropy_report, relative_gap, EntropyReport, QuestionEntropy, StoryIndex,
    SystemIndex,
};
pub use responses::{
    read_manifest, read_responses_csv, Answer, ResponseRecord, ResponseSet, StoryInfo,
    StoryManifest,
};
pub use screening::{detect_pattern, screen, Elimination, EliminationReason, ScreeningRules};
pub use stats::{binary_entropy, kl_to_uniform, mean, median, question_entropy};
pub use templates::{
    instantiate, instantiate_tf_templates, parse_templates, tf_templates, Scaffold,
    SlotAssignment,
};
