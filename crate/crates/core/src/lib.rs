//! Syntax-augmented transformer encoders: graph attention over dependency
//! trees fused into a small transformer, with CRF tagging and relation
//! heads, plus training, evaluation and parse-quality experiments.

pub mod cli;
pub mod encoder;
pub mod error;
pub mod fusion;
pub mod harness;
pub mod heads;
pub mod nn;
pub mod params;
pub mod syntax_gnn;
pub mod tensor;
pub mod treebank;
pub mod verify;

pub use error::{Error, Result};
