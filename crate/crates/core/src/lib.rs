//! Evidential cross-modal zero-shot learning.
//!
//! Bidirectional grounding transformers embed each instance into attribute
//! space twice (visual regions attended by attribute queries, and the
//! reverse). Each embedding yields Dirichlet evidence over the classes; the
//! two opinions are fused by their uncertainty and checked for conflict.
//! Training combines a calibrated cross-entropy, an instance-level contrastive
//! loss, a pattern-bank triplet loss and the evidential objectives.

pub mod cli;
pub mod config;
pub mod digs;
pub mod edl;
pub mod error;
pub mod grounding;
pub mod inference;
pub mod model;
pub mod numgraph;
pub mod subjective_logic;
pub mod synthzsl;
pub mod trainer;
pub mod vicl;

pub use error::{Error, Result};
