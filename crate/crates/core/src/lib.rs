//! Lifetime caption learning by asking questions.
//!
//! A captioning agent describes synthetic scenes, decides where its caption is
//! uncertain, asks the teacher a pointed question about that word, rebuilds the
//! caption from the answer and retrains on the teacher-scored results. Every
//! teacher interaction is billed to a supervision ledger.

pub mod captioner;
pub mod decision;
pub mod engine;
pub mod error;
pub mod math;
pub mod metrics;
pub mod qgen;
pub mod teacher;
pub mod world;

pub use error::{Error, Result};
