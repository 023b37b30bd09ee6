//! Mining periodic probabilistic composition patterns and the temporal
//! relations between them from interval event logs, and predicting the next
//! activity from a partial observation.

pub mod cluster;
pub mod convenience;
pub mod cpminer;
pub mod error;
pub mod event;
pub mod periodic;
pub mod pipeline;
pub mod predictor;
pub mod quality;
pub mod relations;
pub mod synth;

pub use error::{Error, Result};
