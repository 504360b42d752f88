// The guide lives in book/ and is rendered with mdbook, which cannot run Rust
// snippets that depend on a workspace crate. Each chapter is pulled in here
// as a doc comment so `cargo test` runs its code blocks as doctests.

#[doc = include_str!("../../../book/src/intro.md")]
pub mod intro {}
#[doc = include_str!("../../../book/src/datasets.md")]
pub mod datasets {}
#[doc = include_str!("../../../book/src/measuring.md")]
pub mod measuring {}
#[doc = include_str!("../../../book/src/metrics.md")]
pub mod metrics {}
#[doc = include_str!("../../../book/src/variance.md")]
pub mod variance {}
#[doc = include_str!("../../../book/src/prompting.md")]
pub mod prompting {}
#[doc = include_str!("../../../book/src/selfplay.md")]
pub mod selfplay {}
#[doc = include_str!("../../../book/src/cli.md")]
pub mod cli {}
