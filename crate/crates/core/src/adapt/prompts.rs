//! Versioned prompt templates.
//!
//! Every style ends with the program to optimize. Few-shot and retrieval
//! prompts lay examples out as `slow₁ → fast₁ || slow₂ → fast₂ || query`,
//! in the order given.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::tags::PerfTag;
use crate::dataset::ProgramPair;

/// Bumped whenever any template text changes.
pub const TEMPLATE_VERSION: &str = "v1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PromptStyle {
    Instruction,
    FewShot,
    ChainOfThought,
    Retrieval,
    PerfConditioned,
}

impl PromptStyle {
    pub const ALL: [PromptStyle; 5] = [
        PromptStyle::Instruction,
        PromptStyle::FewShot,
        PromptStyle::ChainOfThought,
        PromptStyle::Retrieval,
        PromptStyle::PerfConditioned,
    ];

    fn needs_examples(self) -> bool {
        matches!(self, PromptStyle::FewShot | PromptStyle::Retrieval)
    }
}

impl std::str::FromStr for PromptStyle {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().replace(['-', '_'], "").as_str() {
            "instruction" => Ok(PromptStyle::Instruction),
            "fewshot" => Ok(PromptStyle::FewShot),
            "chainofthought" | "cot" => Ok(PromptStyle::ChainOfThought),
            "retrieval" => Ok(PromptStyle::Retrieval),
            "perfconditioned" | "conditioned" => Ok(PromptStyle::PerfConditioned),
            other => Err(format!("unknown prompt style {other:?}")),
        }
    }
}

const INSTRUCTION_HEADER: &str = "\
// Rewrite the program below so that it runs faster.
// The new program must behave identically: same input, same output.
// Reply with the complete optimized program.
";

const EXAMPLES_HEADER: &str = "\
// Each example shows a slower program followed by a faster program with
// identical behavior. Write the faster version of the last program.
";

const COT_INSTRUCTION: &str = "\
// First think step by step about where the last program spends its time and
// how to make it faster. Then write the complete optimized program in a
// fenced code block.
";

const CONDITIONED_HEADER: &str = "\
// Optimize the program below and provide a more efficient version.
";

const SLOW_MARK: &str = "### Slower program:";
const FAST_MARK: &str = "### Optimized version:";
const PROGRAM_MARK: &str = "### Program:";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Prompt {
    pub style: PromptStyle,
    pub text: String,
    pub template_version: String,
    /// Rough token count, `ceil(chars / 4)`.
    pub approx_tokens: usize,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PromptError {
    #[error("{0:?} prompts need at least one example pair")]
    MissingExamples(PromptStyle),
    #[error("performance-conditioned prompts need a tag")]
    MissingTag,
    #[error("prompt is ~{tokens} tokens, over the {limit} token budget")]
    TooLong { tokens: usize, limit: usize },
}

pub fn approx_tokens(text: &str) -> usize {
    text.chars().count().div_ceil(4)
}

impl Prompt {
    fn new(style: PromptStyle, text: String) -> Self {
        Self {
            style,
            approx_tokens: approx_tokens(&text),
            text,
            template_version: TEMPLATE_VERSION.into(),
        }
    }

    /// Hard guard against prompts that would not fit a context window.
    pub fn check_budget(&self, max_tokens: usize) -> Result<(), PromptError> {
        if self.approx_tokens > max_tokens {
            Err(PromptError::TooLong {
                tokens: self.approx_tokens,
                limit: max_tokens,
            })
        } else {
            Ok(())
        }
    }
}

fn push_block(out: &mut String, mark: &str, body: &str) {
    out.push_str(mark);
    out.push('\n');
    out.push_str(body.trim_end());
    out.push_str("\n\n");
}

fn push_examples(out: &mut String, examples: &[ProgramPair]) {
    for ex in examples {
        push_block(out, SLOW_MARK, &ex.src);
        push_block(out, FAST_MARK, &ex.tgt);
    }
}

/// The tag line used by performance-conditioned prompts, e.g.
/// `### Optimized version (runtime score 10/10):`.
pub fn tag_line(tag: PerfTag) -> String {
    format!("### Optimized version (runtime score {tag}):")
}

/// Assembles a prompt. The output depends only on the arguments and
/// [`TEMPLATE_VERSION`].
pub fn build_prompt(
    style: PromptStyle,
    examples: &[ProgramPair],
    query: &str,
    tag: Option<PerfTag>,
) -> Result<Prompt, PromptError> {
    if style.needs_examples() && examples.is_empty() {
        return Err(PromptError::MissingExamples(style));
    }
    let mut text = String::new();
    match style {
        PromptStyle::Instruction => {
            text.push_str(INSTRUCTION_HEADER);
            text.push('\n');
            push_block(&mut text, PROGRAM_MARK, query);
            text.push_str(FAST_MARK);
            text.push('\n');
        }
        PromptStyle::FewShot | PromptStyle::Retrieval => {
            text.push_str(EXAMPLES_HEADER);
            text.push('\n');
            push_examples(&mut text, examples);
            push_block(&mut text, SLOW_MARK, query);
            text.push_str(FAST_MARK);
            text.push('\n');
        }
        PromptStyle::ChainOfThought => {
            if !examples.is_empty() {
                text.push_str(EXAMPLES_HEADER);
                text.push('\n');
                push_examples(&mut text, examples);
            }
            text.push_str(COT_INSTRUCTION);
            text.push('\n');
            push_block(&mut text, SLOW_MARK, query);
            text.push_str("### Reasoning:\n");
        }
        PromptStyle::PerfConditioned => {
            let tag = tag.ok_or(PromptError::MissingTag)?;
            text.push_str(CONDITIONED_HEADER);
            text.push('\n');
            push_block(&mut text, PROGRAM_MARK, query);
            let _ = writeln!(text, "{}", tag_line(tag));
        }
    }
    Ok(Prompt::new(style, text))
}

/// One fine-tuning example for performance-conditioned training: the
/// conditioned prompt for `slow` with `tag`, followed by `fast`.
pub fn conditioned_training_example(slow: &str, fast: &str, tag: PerfTag) -> String {
    let prompt = build_prompt(PromptStyle::PerfConditioned, &[], slow, Some(tag))
        .expect("tag is present");
    format!("{}{}\n", prompt.text, fast.trim_end())
}

/// Self-play prompt asking for a new program on the same input format that
/// behaves differently from the reference solution.
pub fn selfplay_prompt(problem_description: &str, reference_solution: &str) -> String {
    let mut text = String::from(
        "// Below is a programming problem and an accepted solution.\n\
         // Write a NEW program that reads the same input format but computes\n\
         // something different, so that it produces different outputs on the\n\
         // same inputs. Reply with the complete program in a fenced code block.\n\n",
    );
    push_block(&mut text, "### Problem:", problem_description);
    push_block(&mut text, "### Accepted solution:", reference_solution);
    text.push_str("### New program:\n");
    text
}
