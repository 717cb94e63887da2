use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Knobs shared by both generators and the decoder.
///
/// Field names double as the JSON config file keys.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenerationConfig {
    pub iterations: usize,
    pub beam_width: usize,
    pub repetition_penalty: f64,
    pub length_penalty: f64,
    /// Generated-token cap per hypothesis.
    pub max_length: usize,
    /// n for no-repeat n-gram blocking; 0 disables blocking.
    pub no_repeat_ngram: usize,
    pub window_size: usize,
    pub question_budget: usize,
    pub seed: u64,
    /// Feed earlier iterations' text to the decoder penalties.
    pub horizon: bool,
    /// Also feed non-selected candidates into the horizon.
    pub horizon_includes_rejected: bool,
    /// Minimum extractor confidence for a character attribution.
    pub attribution_threshold: f64,
}

impl Default for GenerationConfig {
    fn default() -> Self {
        Self {
            iterations: 3,
            beam_width: 15,
            repetition_penalty: 10.0,
            length_penalty: 3.0,
            max_length: 150,
            no_repeat_ngram: 3,
            window_size: 5,
            question_budget: 8,
            seed: 0,
            horizon: true,
            horizon_includes_rejected: false,
            attribution_threshold: 0.1,
        }
    }
}

impl GenerationConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::Validation(m.to_string()));
        if self.beam_width < 1 {
            return fail("beam_width must be at least 1");
        }
        if self.max_length < 2 {
            return fail("max_length must be at least 2");
        }
        if !self.repetition_penalty.is_finite() || self.repetition_penalty < 1.0 {
            return fail("repetition_penalty must be a finite value >= 1");
        }
        if !self.length_penalty.is_finite() {
            return fail("length_penalty must be finite");
        }
        if self.no_repeat_ngram == 1 {
            return fail("no_repeat_ngram must be 0 (disabled) or at least 2");
        }
        if self.window_size < 1 {
            return fail("window_size must be at least 1");
        }
        if self.question_budget < 1 {
            return fail("question_budget must be at least 1");
        }
        if !(0.0..=1.0).contains(&self.attribution_threshold) {
            return fail("attribution_threshold must lie in [0, 1]");
        }
        Ok(())
    }

    pub(crate) fn ngram(&self) -> Option<usize> {
        (self.no_repeat_ngram >= 2).then_some(self.no_repeat_ngram)
    }
}
