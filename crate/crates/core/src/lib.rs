//! Progress-aware belief states for partially observed text tasks.
//!
//! The crate is organised bottom-up:
//!
//! - [`belief`]: the belief tuple and its autoregressive update.
//! - [`prompt`]: the tag-delimited prompt format, model-output parsing and token accounting.
//! - [`env`]: deterministic maze, word-guess and crafting environments plus trajectory corpora.
//! - [`annotate`]: critical-step identification, progress synthesis and retention labels.
//! - [`augment`]: turning annotated trajectories into ORM / PRM / PA / PABU datasets.
//! - [`policy`]: the policy interface with oracle, replay, tabular and remote implementations.
//! - [`eval`]: the inference loop and success / step / token metrics.

pub mod annotate;
pub mod augment;
pub mod belief;
pub mod env;
pub mod error;
pub mod eval;
pub mod policy;
pub mod prompt;
pub mod remote;
pub mod stub;
mod util;

pub use error::{Error, Result};
