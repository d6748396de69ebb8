//! Zero-shot attribute-embedding classification with per-attribute
//! misprediction diagnostics, a t-SNE category overview, and steering by
//! attribute down-weighting.

pub mod dataset;
pub mod diagnostics;
mod error;
pub mod matrix;
pub mod model;
pub mod projection;
pub mod steering;

pub use error::{Error, Result};
pub use matrix::Matrix;
