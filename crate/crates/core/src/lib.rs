//! Visual and textual compression of long code contexts for model
//! evaluation.

mod error;

pub mod budget;
pub mod context;
pub mod filters;
pub mod harness;
pub mod metrics;
pub mod render;
pub mod tokenizer;

pub use error::{Error, Result};
