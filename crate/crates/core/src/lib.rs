//! Spatio-temporal scene graph generation as set prediction.
//!
//! Subject-object queries are seeded from per-frame relation cues, predicate
//! queries decode against a multi-modal bank of cue tokens, and training
//! matches predicted triplets to ground truth with the Hungarian algorithm.

pub mod autodiff;
pub mod bank;
pub mod config;
pub mod data;
pub mod error;
pub mod geometry;
pub mod gradcheck;
pub mod losses;
pub mod matcher;
pub mod metrics;
pub mod model;
pub mod nn;
pub mod params;
pub mod query;
pub mod tensor;
pub mod train;

pub use error::{Result, SggError};
