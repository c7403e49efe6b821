//! Audio input, MFCC featurization and time-domain augmentation.

mod augment;
mod features;
mod mfcc;
mod wav;

pub use augment::{apply_gain_db, mix_noise, noise_scale, white_noise, MAX_GAIN_DB, MIN_GAIN_DB};
pub use features::{FeatureMatrix, FEATURES_MAGIC, FEATURES_VERSION};
pub use mfcc::{frame_count, mfcc, Mfcc, FRAME_HOP, FRAME_LEN, NUM_COEFFS, SAMPLE_RATE};
pub use wav::{load_wav, write_wav};

use crate::error::{Error, Result};

/// Mono samples, nominally in `[-1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioBuffer {
    pub samples: Vec<f32>,
    pub sample_rate: u32,
}

impl AudioBuffer {
    pub fn new(samples: Vec<f32>, sample_rate: u32) -> Result<Self> {
        if sample_rate == 0 {
            return Err(Error::Precondition("sample rate must be positive".into()));
        }
        if samples.iter().any(|s| !s.is_finite()) {
            return Err(Error::Precondition("audio contains non-finite samples".into()));
        }
        Ok(AudioBuffer {
            samples,
            sample_rate,
        })
    }

    pub fn silence(len: usize, sample_rate: u32) -> Self {
        AudioBuffer {
            samples: vec![0.0; len],
            sample_rate,
        }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_secs(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    /// Mean squared amplitude; zero for an empty buffer.
    pub fn power(&self) -> f64 {
        if self.samples.is_empty() {
            return 0.0;
        }
        self.samples.iter().map(|&s| (s as f64) * (s as f64)).sum::<f64>() / self.samples.len() as f64
    }
}
