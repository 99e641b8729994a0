//! Dual long-term/short-term graph network for personality detection from
//! user posts, with the data pipeline, autodiff core and training harness it
//! runs on.

pub mod autodiff;
pub mod data;
pub mod embeddings;
mod error;
pub mod graph;
pub mod harness;
pub mod lexicon;
pub mod model;

pub use error::Error;
