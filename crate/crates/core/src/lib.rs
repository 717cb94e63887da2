//! Ending-first story generation.
//!
//! A story starts from its final sentences and grows toward its beginning.
//! Each round asks "why" questions about the earliest events, answers them
//! with a long-form QA model, ranks the answers with a fluency model and
//! prepends the winner. A backward seq2seq baseline, dataset preparation for
//! that baseline, and the two human-study harnesses (entropy index and
//! pairwise preference) live alongside.
//!
//! All model access goes through the [`protocol::Backend`] trait, which has
//! a deterministic mock implementation and an HTTP client.

pub mod answers;
pub mod dataset;
pub mod decoder;
pub mod entropy;
mod error;
pub mod model;
pub mod pipeline;
pub mod protocol;
pub mod questions;
pub mod ranker;
pub mod store;
pub mod subjective;

pub use error::{Error, Result};
