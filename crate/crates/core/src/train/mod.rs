//! Loss, optimizer and the epoch loop.

mod adam;
mod loss;

pub use adam::{cosine_lr, Adam, BASE_LR, BETA1, BETA2, EPSILON};
pub use loss::{batch_loss, segment_loss, BatchLoss, LossTerms, DEFAULT_GAMMA, LOG_CLAMP};

use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::audio::{apply_gain_db, mfcc, mix_noise, AudioBuffer, FeatureMatrix, MAX_GAIN_DB, MIN_GAIN_DB};
use crate::corpus::Corpus;
use crate::error::{Error, Result};
use crate::mining::{compose_batch, Alignment, KeywordSpec};
use crate::model::{ModelConfig, Mode, Network, WeightStore};
use crate::tensor::Tensor;

/// Utterances per optimizer step. A 64-utterance batch (1344 segments) leaves
/// a 500-utterance corpus with 8 steps per epoch, too few for the focal loss
/// to separate the classes in 100 epochs.
pub const DEFAULT_UTTERANCES_PER_BATCH: usize = 16;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AugmentConfig {
    pub enabled: bool,
    pub gain_db_min: f64,
    pub gain_db_max: f64,
    /// Chance that an utterance gets background noise mixed in.
    pub noise_prob: f64,
    pub snr_db_min: f64,
    pub snr_db_max: f64,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        AugmentConfig {
            enabled: true,
            gain_db_min: MIN_GAIN_DB,
            gain_db_max: MAX_GAIN_DB,
            noise_prob: 0.5,
            snr_db_min: 5.0,
            snr_db_max: 20.0,
        }
    }
}

/// Hyper-parameters; loadable from JSON, every field optional.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub seed: u64,
    pub epochs: usize,
    pub utterances_per_batch: usize,
    pub lr: f64,
    pub gamma: f64,
    /// Keyword phones; falls back to the corpus `keyword.txt`.
    pub keyword: Option<String>,
    pub augment: AugmentConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            seed: 0,
            epochs: 100,
            utterances_per_batch: DEFAULT_UTTERANCES_PER_BATCH,
            lr: BASE_LR,
            gamma: DEFAULT_GAMMA,
            keyword: None,
            augment: AugmentConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(format!("train config: {e}")))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("train config serializes")
    }

    fn validate(&self) -> Result<()> {
        if self.utterances_per_batch == 0 {
            return Err(Error::Config("utterances_per_batch must be positive".into()));
        }
        if !(self.lr >= 0.0) || !(self.gamma >= 0.0) {
            return Err(Error::Config("lr and gamma must be non-negative".into()));
        }
        let a = &self.augment;
        if a.enabled
            && (a.gain_db_min > a.gain_db_max
                || a.gain_db_min < MIN_GAIN_DB
                || a.gain_db_max > MAX_GAIN_DB
                || a.snr_db_min > a.snr_db_max
                || !(0.0..=1.0).contains(&a.noise_prob))
        {
            return Err(Error::Config("augmentation ranges are inconsistent".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochLog {
    /// 1-based.
    pub epoch: usize,
    pub lr: f64,
    pub mean_loss: f64,
    pub mean_cls_loss: f64,
    pub mean_offset_loss: f64,
}

pub const EPOCH_LOG_HEADER: &str = "epoch,lr,mean_loss,mean_cls_loss,mean_offset_loss";

pub fn format_epoch_log(rows: &[EpochLog], seed: u64) -> String {
    let mut s = format!("# seed={seed}\n{EPOCH_LOG_HEADER}\n");
    for r in rows {
        let _ = writeln!(
            s,
            "{},{:.8},{:.8},{:.8},{:.8}",
            r.epoch, r.lr, r.mean_loss, r.mean_cls_loss, r.mean_offset_loss
        );
    }
    s
}

/// One utterance as the trainer sees it.
#[derive(Debug, Clone)]
pub struct TrainItem {
    pub alignment: Alignment,
    /// Source audio, needed only when augmenting.
    pub audio: Option<AudioBuffer>,
    pub features: FeatureMatrix,
}

#[derive(Debug, Clone)]
pub struct TrainData {
    pub keyword: KeywordSpec,
    pub items: Vec<TrainItem>,
    /// Background noise for augmentation.
    pub noise: Option<AudioBuffer>,
}

impl TrainData {
    /// Utterances of `corpus` that carry an alignment.
    pub fn from_corpus(corpus: &Corpus, keyword: Option<KeywordSpec>, noise: Option<AudioBuffer>) -> Result<Self> {
        let keyword = keyword
            .or_else(|| corpus.keyword.clone())
            .ok_or_else(|| Error::Config(format!("{}: no keyword given and no keyword.txt", corpus.dir.display())))?;
        let items = corpus
            .utterances
            .iter()
            .filter_map(|u| {
                u.alignment.as_ref().map(|a| TrainItem {
                    alignment: a.clone(),
                    audio: Some(u.audio.clone()),
                    features: u.features.clone(),
                })
            })
            .collect();
        Ok(TrainData { keyword, items, noise })
    }
}

#[derive(Debug, Clone)]
pub struct TrainReport {
    pub weights: WeightStore<f32>,
    pub log: Vec<EpochLog>,
}

/// Runs the epoch loop. `on_epoch` sees each epoch's log row and weights
/// (used for checkpointing); returning an error aborts training.
pub fn train(
    model: &ModelConfig,
    data: &TrainData,
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochLog, &WeightStore<f32>) -> Result<()>,
) -> Result<TrainReport> {
    cfg.validate()?;
    if data.items.is_empty() {
        return Err(Error::Config("training set has no aligned utterances".into()));
    }
    let keyword = match &cfg.keyword {
        Some(k) => KeywordSpec::parse(k)?,
        None => data.keyword.clone(),
    };
    let network = Network::new(model.clone())?;
    let rf = network.receptive_field();
    let mut weights = WeightStore::<f32>::build(model, cfg.seed)?;
    let mut adam = Adam::new();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x7261_696e);
    let mut order: Vec<usize> = (0..data.items.len()).collect();
    let mut log = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        let lr = cosine_lr(epoch, cfg.lr, cfg.epochs);
        order.shuffle(&mut rng);
        let (mut sum, mut sum_cls, mut sum_off, mut count) = (0.0, 0.0, 0.0, 0usize);
        for chunk in order.chunks(cfg.utterances_per_batch) {
            let feats: Vec<FeatureMatrix> = chunk
                .iter()
                .map(|&i| featurize(&data.items[i], data.noise.as_ref(), &cfg.augment, &mut rng))
                .collect::<Result<_>>()?;
            let pairs: Vec<(&Alignment, &FeatureMatrix)> =
                chunk.iter().zip(&feats).map(|(&i, f)| (&data.items[i].alignment, f)).collect();
            let batch = compose_batch(&pairs, &keyword, rf, &mut rng);
            if batch.is_empty() {
                continue;
            }
            let n = batch.len();
            let windows: Vec<&FeatureMatrix> = batch.iter().map(|(_, f)| f).collect();
            let input = FeatureMatrix::stack(&windows)?;
            let labels: Vec<u8> = batch.iter().map(|(s, _)| s.label).collect();
            let targets: Vec<Option<f64>> = batch.iter().map(|(s, _)| s.offset).collect();

            let (out, cache) = network.forward(&weights, &input, Mode::Train(&mut rng))?;
            let cache = cache.expect("train mode returns a cache");
            let logits: Vec<f64> = out.detection_logits.data().iter().map(|&v| v as f64).collect();
            let offsets: Vec<f64> = out.offsets.data().iter().map(|&v| v as f64).collect();
            let loss = batch_loss(&logits, &offsets, &labels, &targets, cfg.gamma);
            if !loss.mean.is_finite() {
                return Err(Error::Precondition(format!("epoch {}: loss diverged", epoch + 1)));
            }
            let to_tensor = |g: &[f64]| Tensor::from_vec(&[n, 1, 1, 1], g.iter().map(|&v| v as f32).collect());
            let grads = network.backward(
                &weights,
                &cache,
                &to_tensor(&loss.grad_logits)?,
                &to_tensor(&loss.grad_offsets)?,
            )?;
            adam.step(&mut weights, &grads, lr)?;
            cache.update_running_stats(&mut weights)?;

            sum += loss.mean * n as f64;
            sum_cls += loss.mean_classification * n as f64;
            sum_off += loss.mean_offset * n as f64;
            count += n;
        }
        let denom = count.max(1) as f64;
        let row = EpochLog {
            epoch: epoch + 1,
            lr,
            mean_loss: sum / denom,
            mean_cls_loss: sum_cls / denom,
            mean_offset_loss: sum_off / denom,
        };
        log::info!(
            "epoch {:>3} lr {:.5} loss {:.5} (cls {:.5}, offset {:.5})",
            row.epoch,
            row.lr,
            row.mean_loss,
            row.mean_cls_loss,
            row.mean_offset_loss
        );
        on_epoch(&row, &weights)?;
        log.push(row);
    }
    Ok(TrainReport { weights, log })
}

/// Features for one utterance, re-computed from augmented audio when
/// augmentation is on and audio is available.
fn featurize<R: Rng + ?Sized>(
    item: &TrainItem,
    noise: Option<&AudioBuffer>,
    aug: &AugmentConfig,
    rng: &mut R,
) -> Result<FeatureMatrix> {
    let audio = match (&item.audio, aug.enabled) {
        (Some(a), true) => a,
        _ => return Ok(item.features.clone()),
    };
    let gain = rng.gen_range(aug.gain_db_min..=aug.gain_db_max);
    let mut a = apply_gain_db(audio, gain)?;
    if let Some(noise) = noise.filter(|n| !n.is_empty()) {
        if rng.gen_bool(aug.noise_prob) {
            let snr = rng.gen_range(aug.snr_db_min..=aug.snr_db_max);
            let off = rng.gen_range(0..noise.len());
            let rotated = AudioBuffer {
                samples: noise.samples[off..].iter().chain(&noise.samples[..off]).copied().collect(),
                sample_rate: noise.sample_rate,
            };
            a = mix_noise(&a, &rotated, snr)?;
        }
    }
    mfcc(&a)
}

/// Writes the epoch log CSV.
pub fn save_epoch_log(path: &Path, rows: &[EpochLog], seed: u64) -> Result<()> {
    std::fs::write(path, format_epoch_log(rows, seed)).map_err(|e| Error::io(path, e))
}
