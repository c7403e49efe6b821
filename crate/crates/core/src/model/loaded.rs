use std::path::{Path, PathBuf};

use super::{ModelConfig, Mode, Network, WeightStore};
use crate::audio::FeatureMatrix;
use crate::error::{Error, Result};
use crate::tensor::sigmoid;

/// Config file stored next to a weights file: same stem, `.json`.
pub fn sidecar_path(weights: &Path) -> PathBuf {
    weights.with_extension("json")
}

/// A network paired with weights that have been checked against it.
#[derive(Debug, Clone)]
pub struct Model {
    network: Network,
    weights: WeightStore<f32>,
}

/// Score emitted for one input frame once the receptive field is filled.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrameScore {
    /// Index of the last input frame covered by the window.
    pub frame: usize,
    pub prob: f32,
    pub offset: f32,
}

impl Model {
    pub fn new(config: ModelConfig, weights: WeightStore<f32>) -> Result<Self> {
        let network = Network::new(config)?;
        weights
            .validate(network.config())
            .map_err(|e| Error::Config(format!("weights do not match config: {e}")))?;
        Ok(Model { network, weights })
    }

    pub fn load(weights: &Path, config: ModelConfig) -> Result<Self> {
        Self::new(config, WeightStore::load(weights)?)
    }

    /// Loads weights with a config given as a preset name or JSON path, or
    /// from the `<weights>.json` sidecar written at training time.
    pub fn load_resolved(weights: &Path, config: Option<&str>) -> Result<Self> {
        let config = match config {
            Some(c) => ModelConfig::load(c)?,
            None => {
                let side = sidecar_path(weights);
                if !side.exists() {
                    return Err(Error::Config(format!(
                        "no config given and sidecar {} does not exist",
                        side.display()
                    )));
                }
                ModelConfig::load(&side.to_string_lossy())?
            }
        };
        Self::load(weights, config)
    }

    pub fn network(&self) -> &Network {
        &self.network
    }

    pub fn config(&self) -> &ModelConfig {
        self.network.config()
    }

    pub fn weights(&self) -> &WeightStore<f32> {
        &self.weights
    }

    pub fn receptive_field(&self) -> usize {
        self.network.receptive_field()
    }

    /// Whole-utterance inference. Empty when the input is shorter than the
    /// receptive field.
    pub fn score_batch(&self, features: &FeatureMatrix) -> Result<Vec<FrameScore>> {
        let r = self.receptive_field();
        if features.cols() < r {
            return Ok(Vec::new());
        }
        let (out, _) = self.network.forward(&self.weights, &features.to_tensor(), Mode::Infer)?;
        Ok(out
            .detection_logits
            .data()
            .iter()
            .zip(out.offsets.data())
            .enumerate()
            .map(|(i, (&l, &o))| FrameScore {
                frame: i + r - 1,
                prob: sigmoid(l),
                offset: o,
            })
            .collect())
    }
}
