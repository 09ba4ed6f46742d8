#![allow(clippy::needless_range_loop)]

//! Unsupervised induction of frames, events, and argument slots from parsed documents.

pub mod chain;
pub mod corpus;
pub mod error;
pub mod evaluate;
pub mod extract;
pub mod fixtures;
pub mod learn;
pub mod math;
pub mod params;
pub mod synth;

pub use error::{Error, Result};
