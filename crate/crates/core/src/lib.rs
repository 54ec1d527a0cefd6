//! Hyperparameter-aware generation toolkit.
//!
//! The crate is organised around the workflow of letting a language model pick
//! its own decoding hyperparameters:
//!
//! - [`decoding`]: temperature, repetition penalty, top-k and nucleus transforms
//!   over a logit vector, plus seeded categorical sampling.
//! - [`space`]: the discrete hyperparameter grid, default/random baselines, and
//!   the textual config format models read and emit.
//! - [`backends`]: the generation interface with a remote chat-completion
//!   client, a character n-gram toy model, and test doubles.
//! - [`tasks`]: the six scored tasks, their file format and generators.
//! - [`metrics`]: sentence BLEU, Self-BLEU and summary statistics.
//! - [`search`]: pruning + greedy search producing per-input target configs.
//! - [`runner`]: two-stage generation and the Default/Random baselines.
//! - [`report`]: evaluation, relative change, sweeps, and report rendering.
//! - [`cli`]: the command workflows behind the `hag` binary.

pub mod backends;
pub mod cli;
pub mod decoding;
pub mod error;
pub mod metrics;
pub mod report;
pub mod runner;
pub mod search;
pub mod space;
pub mod tasks;

pub use error::{Error, Result};
pub use space::HyperparamConfig;
