//! Streaming wake-word detection and localization.
//!
//! A small dilated CNN looks at a fixed window of MFCC frames and emits, per
//! frame, the probability that the window ends with the keyword plus the
//! distance back to the keyword start. The crate covers the whole pipeline:
//! featurization, alignment-driven segment mining, training, frame-at-a-time
//! streaming inference, and DET / localization evaluation.

pub mod audio;
pub mod corpus;
pub mod error;
pub mod eval;
pub mod mining;
pub mod model;
pub mod stream;
pub mod synth;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
