use rand::RngCore;

use super::config::{freq_dw_spec, pointwise_spec, time_dw_spec, Block, ModelConfig};
use super::weights::WeightStore;
use crate::error::{Error, Result};
use crate::tensor::{
    batchnorm_backward, batchnorm_forward, channel_dropout_backward, channel_dropout_forward,
    conv2d_backward, conv2d_forward, dropout_mask, freq_avgpool_backward, freq_avgpool_forward,
    freq_broadcast_add, freq_broadcast_add_backward, relu_backward, relu_forward,
    subspectral_norm_backward, subspectral_norm_forward, swish_backward, swish_forward,
    time_trim_backward, time_trim_forward, NormCache, NormMode, Real, Tensor, BN_MOMENTUM,
};

/// Forward mode. Training normalizes with batch statistics and draws channel
/// dropout masks from the supplied generator.
pub enum Mode<'a> {
    Infer,
    Train(&'a mut dyn RngCore),
}

impl Mode<'_> {
    fn norm(&self) -> NormMode {
        match self {
            Mode::Infer => NormMode::Infer,
            Mode::Train(_) => NormMode::Train,
        }
    }
}

/// Per-frame detection logits and offsets, each `[n, 1, 1, frames]`.
#[derive(Debug, Clone)]
pub struct ModelOutput<T: Real = f32> {
    pub detection_logits: Tensor<T>,
    pub offsets: Tensor<T>,
}

impl<T: Real> ModelOutput<T> {
    pub fn frames(&self) -> usize {
        self.detection_logits.dims()[3]
    }
}

#[derive(Debug, Clone)]
struct TemporalCache<T: Real> {
    pooled: Tensor<T>,
    normed: Tensor<T>,
    activated: Tensor<T>,
    bn: Option<NormCache<T>>,
    mask: Option<Vec<T>>,
    freq: usize,
}

#[derive(Debug, Clone)]
enum BlockCache<T: Real> {
    Conv {
        x: Tensor<T>,
        y: Tensor<T>,
    },
    Transition {
        x: Tensor<T>,
        pw_bn: NormCache<T>,
        v: Tensor<T>,
        ssn: NormCache<T>,
        temporal: TemporalCache<T>,
        y: Tensor<T>,
    },
    Broadcast {
        x: Tensor<T>,
        ssn: NormCache<T>,
        temporal: TemporalCache<T>,
        y: Tensor<T>,
    },
    Head {
        x: Tensor<T>,
    },
}

/// Activations saved by a train-mode forward, tied to the weight generation
/// they were computed with.
#[derive(Debug, Clone)]
pub struct ForwardCache<T: Real = f32> {
    generation: u64,
    blocks: Vec<BlockCache<T>>,
    norm_stats: Vec<BatchStats<T>>,
}

/// Batch mean and unbiased variance of one normalization layer.
#[derive(Debug, Clone)]
struct BatchStats<T: Real> {
    prefix: String,
    mean: Vec<T>,
    var: Vec<T>,
}

impl<T: Real> BatchStats<T> {
    fn of(prefix: String, cache: &NormCache<T>) -> Self {
        BatchStats {
            prefix,
            mean: cache.batch_mean.clone(),
            var: cache.batch_var.clone(),
        }
    }
}

impl<T: Real> ForwardCache<T> {
    /// Folds this batch's statistics into the running estimates.
    pub fn update_running_stats(&self, weights: &mut WeightStore<T>) -> Result<()> {
        let m = T::from_f64c(BN_MOMENTUM);
        for stats in &self.norm_stats {
            let prefix = &stats.prefix;
            let mut mean = weights.get(&format!("{prefix}.running_mean"))?.clone();
            let mut var = weights.get(&format!("{prefix}.running_var"))?.clone();
            for (r, &b) in mean.data_mut().iter_mut().zip(&stats.mean) {
                *r = (T::one() - m) * *r + m * b;
            }
            for (r, &b) in var.data_mut().iter_mut().zip(&stats.var) {
                *r = (T::one() - m) * *r + m * b;
            }
            *weights.get_mut(&format!("{prefix}.running_mean"))? = mean;
            *weights.get_mut(&format!("{prefix}.running_var"))? = var;
        }
        Ok(())
    }
}

/// The expanded layer stack of a [`ModelConfig`].
#[derive(Debug, Clone)]
pub struct Network {
    config: ModelConfig,
    blocks: Vec<Block>,
    receptive_field: usize,
}

struct NormParams<'a, T: Real> {
    scale: &'a Tensor<T>,
    shift: &'a Tensor<T>,
    mean: &'a Tensor<T>,
    var: &'a Tensor<T>,
}

fn norm_params<'a, T: Real>(w: &'a WeightStore<T>, prefix: &str) -> Result<NormParams<'a, T>> {
    Ok(NormParams {
        scale: w.get(&format!("{prefix}.scale"))?,
        shift: w.get(&format!("{prefix}.shift"))?,
        mean: w.get(&format!("{prefix}.running_mean"))?,
        var: w.get(&format!("{prefix}.running_var"))?,
    })
}

impl Network {
    pub fn new(config: ModelConfig) -> Result<Self> {
        let blocks = config.blocks()?;
        let receptive_field = 1 + blocks.iter().map(Block::time_span).sum::<usize>();
        Ok(Network {
            config,
            blocks,
            receptive_field,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    pub fn receptive_field(&self) -> usize {
        self.receptive_field
    }

    /// Runs the stack on `[n, 1, input_freq, t]` features, `t >= R`, giving
    /// `t - R + 1` output frames. Train mode also returns the cache needed by
    /// [`Network::backward`].
    pub fn forward<T: Real>(
        &self,
        weights: &WeightStore<T>,
        features: &Tensor<T>,
        mut mode: Mode<'_>,
    ) -> Result<(ModelOutput<T>, Option<ForwardCache<T>>)> {
        if features.dims().len() != 4
            || features.dims()[1] != 1
            || features.dims()[2] != self.config.input_freq
        {
            return Err(Error::Shape(format!(
                "features must be [n, 1, {}, t], got {:?}",
                self.config.input_freq,
                features.dims()
            )));
        }
        let frames = features.dims()[3];
        if frames < self.receptive_field {
            return Err(Error::InputTooShort {
                frames,
                receptive_field: self.receptive_field,
            });
        }
        let train = matches!(mode, Mode::Train(_));
        let mut caches = Vec::with_capacity(self.blocks.len());
        let mut norm_stats = Vec::new();
        let mut x = features.clone();
        for block in &self.blocks {
            let (y, cache) = self.block_forward(block, weights, &x, &mut mode, &mut norm_stats)?;
            if let Some(cache) = cache {
                caches.push(cache);
            }
            x = y;
        }
        let (_, c, _, t) = x.dims4();
        debug_assert_eq!(c, 2);
        let n = x.dims()[0];
        let det = &x;
        let mut det_data = Vec::with_capacity(n * t);
        let mut off_data = Vec::with_capacity(n * t);
        for b in 0..n {
            det_data.extend_from_slice(&det.data()[(b * 2) * t..(b * 2 + 1) * t]);
            off_data.extend_from_slice(&det.data()[(b * 2 + 1) * t..(b * 2 + 2) * t]);
        }
        let out = ModelOutput {
            detection_logits: Tensor::from_vec(&[n, 1, 1, t], det_data)?,
            offsets: Tensor::from_vec(&[n, 1, 1, t], off_data)?,
        };
        let cache = train.then(|| ForwardCache {
            generation: weights.generation(),
            blocks: caches,
            norm_stats,
        });
        Ok((out, cache))
    }

    /// Infer-mode output of block `index` alone.
    pub(crate) fn block_infer<T: Real>(&self, index: usize, weights: &WeightStore<T>, x: &Tensor<T>) -> Result<Tensor<T>> {
        let mut mode = Mode::Infer;
        let mut stats = Vec::new();
        Ok(self.block_forward(&self.blocks[index], weights, x, &mut mode, &mut stats)?.0)
    }

    fn block_forward<T: Real>(
        &self,
        block: &Block,
        w: &WeightStore<T>,
        x: &Tensor<T>,
        mode: &mut Mode<'_>,
        stats: &mut Vec<BatchStats<T>>,
    ) -> Result<(Tensor<T>, Option<BlockCache<T>>)> {
        let nm = mode.norm();
        let train = nm == NormMode::Train;
        let groups = self.config.ssn_groups;
        match block {
            Block::Conv { name, spec, relu, .. } => {
                let pre = conv2d_forward(
                    x,
                    w.get(&format!("{name}.weight"))?,
                    Some(w.get(&format!("{name}.bias"))?),
                    spec,
                )?;
                let y = if *relu { relu_forward(&pre) } else { pre };
                let cache = train.then(|| BlockCache::Conv {
                    x: x.clone(),
                    y: y.clone(),
                });
                Ok((y, cache))
            }
            Block::Transition {
                name,
                out_ch,
                freq_stride,
                dilation,
                ..
            } => {
                let u = conv2d_forward(x, w.get(&format!("{name}.pw.weight"))?, None, &pointwise_spec())?;
                let p = norm_params(w, &format!("{name}.pw_bn"))?;
                let (bn, pw_bn) = batchnorm_forward(&u, p.scale, p.shift, p.mean, p.var, nm)?;
                let v = relu_forward(&bn);
                let zpre = conv2d_forward(
                    &v,
                    w.get(&format!("{name}.freq_dw.weight"))?,
                    None,
                    &freq_dw_spec(*out_ch, *freq_stride),
                )?;
                let p = norm_params(w, &format!("{name}.ssn"))?;
                let (z, ssn) = subspectral_norm_forward(&zpre, p.scale, p.shift, p.mean, p.var, groups, nm)?;
                let (h, temporal) = self.temporal_forward(w, name, &z, *out_ch, *dilation, mode, stats)?;
                let skip = time_trim_forward(&z, *dilation, *dilation)?;
                let y = relu_forward(&freq_broadcast_add(&skip, &h)?);
                let cache = match (pw_bn, ssn) {
                    (Some(pw_bn), Some(ssn)) => {
                        stats.push(BatchStats::of(format!("{name}.pw_bn"), &pw_bn));
                        stats.push(BatchStats::of(format!("{name}.ssn"), &ssn));
                        Some(BlockCache::Transition {
                            x: x.clone(),
                            pw_bn,
                            v,
                            ssn,
                            temporal,
                            y: y.clone(),
                        })
                    }
                    _ => None,
                };
                Ok((y, cache))
            }
            Block::Broadcast {
                name,
                channels,
                dilation,
            } => {
                let zpre = conv2d_forward(
                    x,
                    w.get(&format!("{name}.freq_dw.weight"))?,
                    None,
                    &freq_dw_spec(*channels, 1),
                )?;
                let p = norm_params(w, &format!("{name}.ssn"))?;
                let (z, ssn) = subspectral_norm_forward(&zpre, p.scale, p.shift, p.mean, p.var, groups, nm)?;
                let (h, temporal) = self.temporal_forward(w, name, &z, *channels, *dilation, mode, stats)?;
                let skip = time_trim_forward(&x.add(&z)?, *dilation, *dilation)?;
                let y = relu_forward(&freq_broadcast_add(&skip, &h)?);
                let cache = ssn.map(|ssn| {
                    stats.push(BatchStats::of(format!("{name}.ssn"), &ssn));
                    BlockCache::Broadcast {
                        x: x.clone(),
                        ssn,
                        temporal,
                        y: y.clone(),
                    }
                });
                Ok((y, cache))
            }
            Block::Head { name, spec, .. } => {
                let det = conv2d_forward(
                    x,
                    w.get(&format!("{name}.det.weight"))?,
                    Some(w.get(&format!("{name}.det.bias"))?),
                    spec,
                )?;
                let off = conv2d_forward(
                    x,
                    w.get(&format!("{name}.off.weight"))?,
                    Some(w.get(&format!("{name}.off.bias"))?),
                    spec,
                )?;
                // stack as channels [det, off]
                let (n, _, f, t) = det.dims4();
                let mut data = Vec::with_capacity(2 * n * f * t);
                for b in 0..n {
                    data.extend_from_slice(&det.data()[b * f * t..(b + 1) * f * t]);
                    data.extend_from_slice(&off.data()[b * f * t..(b + 1) * f * t]);
                }
                let cache = train.then(|| BlockCache::Head { x: x.clone() });
                Ok((Tensor::from_vec(&[n, 2, f, t], data)?, cache))
            }
        }
    }

    /// Frequency average -> dilated temporal depthwise conv -> BN -> swish ->
    /// 1x1 mix -> channel dropout. Output has frequency extent 1.
    #[allow(clippy::too_many_arguments)]
    fn temporal_forward<T: Real>(
        &self,
        w: &WeightStore<T>,
        name: &str,
        z: &Tensor<T>,
        channels: usize,
        dilation: usize,
        mode: &mut Mode<'_>,
        stats: &mut Vec<BatchStats<T>>,
    ) -> Result<(Tensor<T>, TemporalCache<T>)> {
        let pooled = freq_avgpool_forward(z);
        let b = conv2d_forward(
            &pooled,
            w.get(&format!("{name}.time_dw.weight"))?,
            None,
            &time_dw_spec(channels, dilation),
        )?;
        let p = norm_params(w, &format!("{name}.time_bn"))?;
        let (normed, bn) = batchnorm_forward(&b, p.scale, p.shift, p.mean, p.var, mode.norm())?;
        if let Some(c) = &bn {
            stats.push(BatchStats::of(format!("{name}.time_bn"), c));
        }
        let activated = swish_forward(&normed);
        let mixed = conv2d_forward(&activated, w.get(&format!("{name}.mix.weight"))?, None, &pointwise_spec())?;
        let (h, mask) = match mode {
            Mode::Train(rng) if self.config.dropout > 0.0 => {
                let (n, c, _, _) = mixed.dims4();
                let mask = dropout_mask(&mut **rng, n, c, self.config.dropout);
                (channel_dropout_forward(&mixed, &mask), Some(mask))
            }
            _ => (mixed, None),
        };
        Ok((
            h,
            TemporalCache {
                pooled,
                normed,
                activated,
                bn,
                mask,
                freq: z.dims()[2],
            },
        ))
    }

    fn temporal_backward<T: Real>(
        &self,
        w: &WeightStore<T>,
        grads: &mut WeightStore<T>,
        name: &str,
        channels: usize,
        dilation: usize,
        cache: &TemporalCache<T>,
        grad_h: &Tensor<T>,
    ) -> Result<Tensor<T>> {
        let g = match &cache.mask {
            Some(mask) => channel_dropout_backward(grad_h, mask),
            None => grad_h.clone(),
        };
        let mix_w = w.get(&format!("{name}.mix.weight"))?;
        let gm = conv2d_backward(&g, &cache.activated, mix_w, &pointwise_spec())?;
        grads.accumulate(&format!("{name}.mix.weight"), gm.weight)?;
        let gc = swish_backward(&gm.input, &cache.normed);
        let bn = cache
            .bn
            .as_ref()
            .ok_or_else(|| Error::Usage("backward needs a train-mode cache".into()))?;
        let (gb, gs, gsh) = batchnorm_backward(&gc, bn, w.get(&format!("{name}.time_bn.scale"))?)?;
        grads.accumulate(&format!("{name}.time_bn.scale"), gs)?;
        grads.accumulate(&format!("{name}.time_bn.shift"), gsh)?;
        let gt = conv2d_backward(
            &gb,
            &cache.pooled,
            w.get(&format!("{name}.time_dw.weight"))?,
            &time_dw_spec(channels, dilation),
        )?;
        grads.accumulate(&format!("{name}.time_dw.weight"), gt.weight)?;
        Ok(freq_avgpool_backward(&gt.input, cache.freq))
    }

    /// Gradients of `sum(grad_detection * logits + grad_offset * offsets)`
    /// wrt every trainable tensor.
    pub fn backward<T: Real>(
        &self,
        weights: &WeightStore<T>,
        cache: &ForwardCache<T>,
        grad_detection: &Tensor<T>,
        grad_offset: &Tensor<T>,
    ) -> Result<WeightStore<T>> {
        if cache.generation != weights.generation() {
            return Err(Error::Usage(
                "stale forward cache: weights changed since the forward pass".into(),
            ));
        }
        if cache.blocks.len() != self.blocks.len() {
            return Err(Error::Usage("cache does not belong to this network".into()));
        }
        let (n, _, _, t) = grad_detection.dims4();
        if grad_offset.dims() != grad_detection.dims() {
            return Err(Error::Shape("detection/offset gradients differ in shape".into()));
        }
        let mut data = Vec::with_capacity(2 * n * t);
        for b in 0..n {
            data.extend_from_slice(&grad_detection.data()[b * t..(b + 1) * t]);
            data.extend_from_slice(&grad_offset.data()[b * t..(b + 1) * t]);
        }
        let mut g = Tensor::from_vec(&[n, 2, 1, t], data)?;
        let mut grads = WeightStore::default();
        let groups = self.config.ssn_groups;

        for (block, bc) in self.blocks.iter().zip(&cache.blocks).rev() {
            g = match (block, bc) {
                (Block::Conv { name, spec, relu, .. }, BlockCache::Conv { x, y }) => {
                    let gpre = if *relu { relu_backward(&g, y) } else { g };
                    let cg = conv2d_backward(&gpre, x, weights.get(&format!("{name}.weight"))?, spec)?;
                    grads.accumulate(&format!("{name}.weight"), cg.weight)?;
                    grads.accumulate(&format!("{name}.bias"), cg.bias)?;
                    cg.input
                }
                (Block::Head { name, spec, .. }, BlockCache::Head { x }) => {
                    let (n, _, f, t) = g.dims4();
                    let plane = f * t;
                    let mut gdet = Vec::with_capacity(n * plane);
                    let mut goff = Vec::with_capacity(n * plane);
                    for b in 0..n {
                        gdet.extend_from_slice(&g.data()[2 * b * plane..(2 * b + 1) * plane]);
                        goff.extend_from_slice(&g.data()[(2 * b + 1) * plane..(2 * b + 2) * plane]);
                    }
                    let mut gx = Tensor::zeros(x.dims());
                    for (head, gh) in [("det", gdet), ("off", goff)] {
                        let gh = Tensor::from_vec(&[n, 1, f, t], gh)?;
                        let cg = conv2d_backward(
                            &gh,
                            x,
                            weights.get(&format!("{name}.{head}.weight"))?,
                            spec,
                        )?;
                        grads.accumulate(&format!("{name}.{head}.weight"), cg.weight)?;
                        grads.accumulate(&format!("{name}.{head}.bias"), cg.bias)?;
                        gx.add_assign(&cg.input)?;
                    }
                    gx
                }
                (
                    Block::Transition {
                        name,
                        out_ch,
                        freq_stride,
                        dilation,
                        ..
                    },
                    BlockCache::Transition {
                        x,
                        pw_bn,
                        v,
                        ssn,
                        temporal,
                        y,
                    },
                ) => {
                    let gsum = relu_backward(&g, y);
                    let mut gz = time_trim_backward(&gsum, *dilation, *dilation);
                    let gh = freq_broadcast_add_backward(&gsum);
                    gz.add_assign(&self.temporal_backward(
                        weights, &mut grads, name, *out_ch, *dilation, temporal, &gh,
                    )?)?;
                    let (gzpre, gs, gsh) =
                        subspectral_norm_backward(&gz, ssn, weights.get(&format!("{name}.ssn.scale"))?, groups)?;
                    grads.accumulate(&format!("{name}.ssn.scale"), gs)?;
                    grads.accumulate(&format!("{name}.ssn.shift"), gsh)?;
                    let fg = conv2d_backward(
                        &gzpre,
                        v,
                        weights.get(&format!("{name}.freq_dw.weight"))?,
                        &freq_dw_spec(*out_ch, *freq_stride),
                    )?;
                    grads.accumulate(&format!("{name}.freq_dw.weight"), fg.weight)?;
                    let gbn = relu_backward(&fg.input, v);
                    let (gu, gs, gsh) =
                        batchnorm_backward(&gbn, pw_bn, weights.get(&format!("{name}.pw_bn.scale"))?)?;
                    grads.accumulate(&format!("{name}.pw_bn.scale"), gs)?;
                    grads.accumulate(&format!("{name}.pw_bn.shift"), gsh)?;
                    let pg = conv2d_backward(&gu, x, weights.get(&format!("{name}.pw.weight"))?, &pointwise_spec())?;
                    grads.accumulate(&format!("{name}.pw.weight"), pg.weight)?;
                    pg.input
                }
                (
                    Block::Broadcast {
                        name,
                        channels,
                        dilation,
                    },
                    BlockCache::Broadcast { x, ssn, temporal, y },
                ) => {
                    let gsum = relu_backward(&g, y);
                    let gskip = time_trim_backward(&gsum, *dilation, *dilation);
                    let gh = freq_broadcast_add_backward(&gsum);
                    let mut gz = gskip.clone();
                    gz.add_assign(&self.temporal_backward(
                        weights, &mut grads, name, *channels, *dilation, temporal, &gh,
                    )?)?;
                    let (gzpre, gs, gsh) =
                        subspectral_norm_backward(&gz, ssn, weights.get(&format!("{name}.ssn.scale"))?, groups)?;
                    grads.accumulate(&format!("{name}.ssn.scale"), gs)?;
                    grads.accumulate(&format!("{name}.ssn.shift"), gsh)?;
                    let fg = conv2d_backward(
                        &gzpre,
                        x,
                        weights.get(&format!("{name}.freq_dw.weight"))?,
                        &freq_dw_spec(*channels, 1),
                    )?;
                    grads.accumulate(&format!("{name}.freq_dw.weight"), fg.weight)?;
                    let mut gx = gskip;
                    gx.add_assign(&fg.input)?;
                    gx
                }
                _ => return Err(Error::Usage("backward needs a train-mode cache".into())),
            };
        }
        Ok(grads)
    }
}
