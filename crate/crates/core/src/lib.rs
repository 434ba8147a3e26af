//! Agentic annotation funnel and multi-task evaluation harness for long
//! procedure videos.
//!
//! The crate is organised by pipeline concern:
//!
//! - [`model`] and [`rle`]: domain types and the run-length mask codec.
//! - [`metrics`]: temporal, box, mask, classification and VQA scoring.
//! - [`gateway`]: mockable access to multimodal model backends for every agent role.
//! - [`tracker`]: box-prompted mask propagation and tracklet import.
//! - [`pipeline`]: the staged funnel (propose, merge, verify, track, confirm, review) with a run journal.
//! - [`bench`]: benchmark assembly, MCQ generation and debiasing.
//! - [`eval`]: model evaluation over the benchmark tasks, error stratification and skill A/B runs.
//! - [`review`]: the human review queue and its HTTP service.
//! - [`cli`]: the `lesion-funnel` command line.
//! - [`synth`]: synthetic sequences with planted lesions for desk-scale runs.

pub mod bench;
pub mod cli;
pub mod error;
pub mod eval;
pub mod gateway;
pub mod io;
pub mod metrics;
pub mod model;
pub mod pipeline;
pub mod prompts;
pub mod review;
pub mod rle;
pub mod synth;
pub mod tracker;

pub use error::{Error, Result};
