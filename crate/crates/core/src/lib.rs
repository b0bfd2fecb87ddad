//! Referral triage over long, multi-document patient records.
//!
//! The crate covers synthetic corpus generation, tokenization and sequence
//! assembly, a small transformer encoder with LoRA adapters, training,
//! three inference strategies for long inputs, evaluation and attention
//! based explanations.

pub mod corpus;
pub mod error;
pub mod eval;
pub mod explain;
pub mod model;
pub mod pipeline;
pub mod strategy;
pub mod team;
pub mod text;
pub mod train;

pub use error::{Error, Result};
pub use team::{TeamLabel, NUM_TEAMS};
