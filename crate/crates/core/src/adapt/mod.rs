//! Prompt construction, retrieval of few-shot examples and performance tags.

pub mod prompts;
pub mod retrieval;
pub mod tags;

pub use prompts::{build_prompt, Prompt, PromptError, PromptStyle};
pub use retrieval::{EmbeddingIndex, Embedder, Hit, TfIdf};
pub use tags::{assign_perf_tags, PerfTag};
