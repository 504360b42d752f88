//! Tools for studying program optimization: build datasets of slow/fast
//! program pairs from judge submission logs, benchmark programs with a
//! correctness gate against deterministic or noisy performance backends,
//! score optimizers with Best@k metrics, and prepare prompts, retrieval
//! indexes, performance tags and deduplicated synthetic data for model
//! adaptation.
//!
//! Start with [`harness::Harness`] and a [`perf::PerfBackend`], then
//! [`dataset::build_dataset`] and [`metrics::aggregate`].

pub mod adapt;
pub mod config;
pub mod dataset;
pub mod gen;
pub mod harness;
pub mod metrics;
pub mod perf;
pub mod process;
pub mod selfplay;
pub mod util;
pub mod variance;
