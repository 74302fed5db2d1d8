//! Semantics-aware sample reweighting for CTR training on noisy implicit
//! feedback.

pub mod corpus;
pub mod error;
pub mod harness;
pub mod metrics;
pub mod model;
pub mod reweight;
pub mod semantics;
pub mod synthetic;

pub use error::{Error, Result};
