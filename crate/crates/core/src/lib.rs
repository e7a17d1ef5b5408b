//! Panoptic pseudo-label generation for stereo video and unsupervised
//! panoptic evaluation.

pub mod config;
pub mod error;
pub mod eval;
pub mod fusion;
pub mod geometry;
pub mod grid;
pub mod io;
pub mod motion;
pub mod pipeline;
pub mod selflabel;
pub mod semantic;
pub mod synth;

pub use error::{Error, Result};
