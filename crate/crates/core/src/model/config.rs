use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::ConvSpec;

/// Name of the canonical 131-frame receptive field preset.
pub const CANONICAL_PRESET: &str = "kws-13k";
/// A reduced preset (35-frame receptive field) for desk-scale training.
pub const TINY_PRESET: &str = "kws-tiny";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LayerKind {
    Conv,
    Transition,
    Broadcast,
    Head,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    #[default]
    Relu,
    None,
}

fn one() -> usize {
    1
}

/// One row of the layer table. Blocks repeat `repeat` times; a head with
/// `repeat = 2` is two parallel convolutions (detection and offset).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub kind: LayerKind,
    pub out_channels: usize,
    #[serde(default = "one")]
    pub repeat: usize,
    #[serde(default = "one")]
    pub freq_stride: usize,
    #[serde(default = "one")]
    pub time_dilation: usize,
    /// `(kf, kt)`; required for conv and head layers.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kernel: Option<(usize, usize)>,
    /// `(pf, pt)`; time padding must be zero.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub padding: Option<(usize, usize)>,
    #[serde(default)]
    pub activation: Activation,
}

impl LayerSpec {
    pub fn conv(out: usize, kernel: (usize, usize), padding: (usize, usize), freq_stride: usize) -> Self {
        LayerSpec {
            kind: LayerKind::Conv,
            out_channels: out,
            repeat: 1,
            freq_stride,
            time_dilation: 1,
            kernel: Some(kernel),
            padding: Some(padding),
            activation: Activation::Relu,
        }
    }

    pub fn transition(out: usize, dilation: usize, freq_stride: usize) -> Self {
        LayerSpec {
            kind: LayerKind::Transition,
            out_channels: out,
            repeat: 1,
            freq_stride,
            time_dilation: dilation,
            kernel: None,
            padding: None,
            activation: Activation::Relu,
        }
    }

    pub fn broadcast(channels: usize, dilation: usize, repeat: usize) -> Self {
        LayerSpec {
            kind: LayerKind::Broadcast,
            out_channels: channels,
            repeat,
            freq_stride: 1,
            time_dilation: dilation,
            kernel: None,
            padding: None,
            activation: Activation::Relu,
        }
    }

    pub fn head(kernel: (usize, usize)) -> Self {
        LayerSpec {
            kind: LayerKind::Head,
            out_channels: 1,
            repeat: 2,
            freq_stride: 1,
            time_dilation: 1,
            kernel: Some(kernel),
            padding: Some((0, 0)),
            activation: Activation::None,
        }
    }
}

fn default_input_freq() -> usize {
    16
}
fn default_ssn_groups() -> usize {
    2
}
fn default_dropout() -> f64 {
    0.1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    #[serde(default)]
    pub name: String,
    #[serde(default = "default_input_freq")]
    pub input_freq: usize,
    #[serde(default = "default_ssn_groups")]
    pub ssn_groups: usize,
    #[serde(default = "default_dropout")]
    pub dropout: f64,
    pub layers: Vec<LayerSpec>,
}

/// A layer instance after expanding repeats, carrying its resolved geometry.
#[derive(Debug, Clone, PartialEq)]
pub enum Block {
    Conv {
        name: String,
        in_ch: usize,
        out_ch: usize,
        spec: ConvSpec,
        relu: bool,
    },
    Transition {
        name: String,
        in_ch: usize,
        out_ch: usize,
        freq_stride: usize,
        dilation: usize,
    },
    Broadcast {
        name: String,
        channels: usize,
        dilation: usize,
    },
    Head {
        name: String,
        in_ch: usize,
        spec: ConvSpec,
    },
}

/// Temporal kernel of the dilated depthwise convolution inside every block.
pub const BLOCK_TIME_KERNEL: usize = 3;
/// Frequency kernel of the depthwise convolution inside every block.
pub const BLOCK_FREQ_KERNEL: usize = 3;

impl Block {
    pub fn name(&self) -> &str {
        match self {
            Block::Conv { name, .. }
            | Block::Transition { name, .. }
            | Block::Broadcast { name, .. }
            | Block::Head { name, .. } => name,
        }
    }

    /// Input frames consumed along time: `dilation * (kernel - 1)`.
    pub fn time_span(&self) -> usize {
        match self {
            Block::Conv { spec, .. } | Block::Head { spec, .. } => spec.time_span(),
            Block::Transition { dilation, .. } | Block::Broadcast { dilation, .. } => {
                dilation * (BLOCK_TIME_KERNEL - 1)
            }
        }
    }

    pub fn out_channels(&self) -> usize {
        match self {
            Block::Conv { out_ch, .. } | Block::Transition { out_ch, .. } => *out_ch,
            Block::Broadcast { channels, .. } => *channels,
            Block::Head { .. } => 2,
        }
    }

    /// Output `(freq, time)` extents for an input of `(freq, time)`.
    pub fn output_extent(&self, freq: usize, time: usize) -> Result<(usize, usize)> {
        match self {
            Block::Conv { spec, .. } | Block::Head { spec, .. } => spec.output_extent(freq, time),
            Block::Transition { freq_stride, .. } => {
                let f = freq_dw_spec(1, *freq_stride).output_extent(freq, 1)?.0;
                Ok((f, self.trimmed(time)?))
            }
            Block::Broadcast { .. } => Ok((freq, self.trimmed(time)?)),
        }
    }

    fn trimmed(&self, time: usize) -> Result<usize> {
        let span = self.time_span();
        if time <= span {
            return Err(Error::Shape(format!(
                "{}: time extent {time} too short for span {span}",
                self.name()
            )));
        }
        Ok(time - span)
    }
}

/// Depthwise 3x1 frequency convolution with unit padding.
pub fn freq_dw_spec(channels: usize, freq_stride: usize) -> ConvSpec {
    ConvSpec::new((BLOCK_FREQ_KERNEL, 1))
        .padding(1, 0)
        .stride(freq_stride, 1)
        .groups(channels.max(1))
}

/// Depthwise 1x3 temporal convolution, dilated, never padded in time.
pub fn time_dw_spec(channels: usize, dilation: usize) -> ConvSpec {
    ConvSpec::new((1, BLOCK_TIME_KERNEL))
        .dilation(1, dilation)
        .groups(channels.max(1))
}

pub fn pointwise_spec() -> ConvSpec {
    ConvSpec::new((1, 1))
}

impl ModelConfig {
    pub fn preset(name: &str) -> Option<ModelConfig> {
        match name {
            CANONICAL_PRESET | "canonical" => Some(Self::canonical()),
            TINY_PRESET | "tiny" => Some(Self::tiny()),
            _ => None,
        }
    }

    /// 131-frame receptive field, 16 MFCC bins in, two 1x1 outputs per frame.
    pub fn canonical() -> Self {
        ModelConfig {
            name: CANONICAL_PRESET.into(),
            input_freq: 16,
            ssn_groups: 2,
            dropout: 0.1,
            layers: vec![
                LayerSpec::conv(12, (5, 5), (2, 0), 2),
                LayerSpec::transition(16, 1, 1),
                LayerSpec::broadcast(16, 1, 1),
                LayerSpec::transition(16, 2, 2),
                LayerSpec::broadcast(16, 2, 1),
                LayerSpec::transition(32, 4, 1),
                LayerSpec::broadcast(32, 4, 3),
                LayerSpec::transition(16, 8, 1),
                LayerSpec::broadcast(16, 8, 3),
                LayerSpec::transition(16, 4, 1),
                LayerSpec::broadcast(16, 4, 1),
                LayerSpec::conv(16, (3, 3), (0, 0), 1),
                LayerSpec::conv(8, (1, 1), (0, 0), 1),
                LayerSpec::head((2, 1)),
            ],
        }
    }

    pub fn tiny() -> Self {
        ModelConfig {
            name: TINY_PRESET.into(),
            input_freq: 16,
            ssn_groups: 2,
            dropout: 0.1,
            layers: vec![
                LayerSpec::conv(8, (5, 5), (2, 0), 2),
                LayerSpec::transition(12, 1, 1),
                LayerSpec::broadcast(12, 1, 1),
                LayerSpec::transition(12, 2, 2),
                LayerSpec::broadcast(12, 2, 1),
                LayerSpec::transition(16, 4, 1),
                LayerSpec::broadcast(16, 4, 1),
                LayerSpec::conv(16, (3, 3), (0, 0), 1),
                LayerSpec::conv(8, (1, 1), (0, 0), 1),
                LayerSpec::head((2, 1)),
            ],
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(format!("model config: {e}")))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Reads a config file, or resolves a preset name.
    pub fn load(path_or_preset: &str) -> Result<Self> {
        if let Some(cfg) = Self::preset(path_or_preset) {
            return Ok(cfg);
        }
        let path = Path::new(path_or_preset);
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cfg = Self::from_json(&text)?;
        cfg.blocks()?;
        Ok(cfg)
    }

    /// Expands repeats and shape-checks the stack. Errors name the layer index.
    pub fn blocks(&self) -> Result<Vec<Block>> {
        if self.layers.is_empty() {
            return Err(Error::Config("model has no layers".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!("dropout {} outside [0, 1)", self.dropout)));
        }
        let mut blocks = Vec::new();
        let mut ch = 1usize;
        let mut freq = self.input_freq;
        let cfg_err = |i: usize, msg: String| Error::Config(format!("layer {i}: {msg}"));
        for (i, layer) in self.layers.iter().enumerate() {
            if layer.repeat == 0 || layer.time_dilation == 0 || layer.freq_stride == 0 {
                return Err(cfg_err(i, "repeat, dilation and stride must be >= 1".into()));
            }
            if layer.out_channels == 0 {
                return Err(cfg_err(i, "out_channels must be >= 1".into()));
            }
            let is_last = i + 1 == self.layers.len();
            if (layer.kind == LayerKind::Head) != is_last {
                return Err(cfg_err(i, "exactly the final layer must be the head".into()));
            }
            for r in 0..layer.repeat {
                let name = if layer.repeat > 1 && layer.kind != LayerKind::Head {
                    format!("l{i:02}.{r}")
                } else {
                    format!("l{i:02}")
                };
                let block = match layer.kind {
                    LayerKind::Conv | LayerKind::Head => {
                        let kernel = layer
                            .kernel
                            .ok_or_else(|| cfg_err(i, "conv layer needs a kernel".into()))?;
                        let padding = layer.padding.unwrap_or((0, 0));
                        if padding.1 != 0 {
                            return Err(cfg_err(i, "time padding is not allowed".into()));
                        }
                        let spec = ConvSpec::new(kernel)
                            .padding(padding.0, 0)
                            .stride(layer.freq_stride, 1)
                            .dilation(1, layer.time_dilation);
                        spec.validate().map_err(|e| cfg_err(i, e.to_string()))?;
                        if layer.kind == LayerKind::Head {
                            if layer.repeat != 2 || layer.out_channels != 1 {
                                return Err(cfg_err(
                                    i,
                                    "head must be two parallel single-channel convs".into(),
                                ));
                            }
                            let b = Block::Head {
                                name,
                                in_ch: ch,
                                spec,
                            };
                            let (f, _) = b
                                .output_extent(freq, spec.time_span() + 1)
                                .map_err(|e| cfg_err(i, e.to_string()))?;
                            if f != 1 {
                                return Err(cfg_err(
                                    i,
                                    format!("head leaves frequency extent {f}, expected 1"),
                                ));
                            }
                            blocks.push(b);
                            break;
                        }
                        Block::Conv {
                            name,
                            in_ch: ch,
                            out_ch: layer.out_channels,
                            spec,
                            relu: layer.activation == Activation::Relu,
                        }
                    }
                    LayerKind::Transition => Block::Transition {
                        name,
                        in_ch: ch,
                        out_ch: layer.out_channels,
                        freq_stride: layer.freq_stride,
                        dilation: layer.time_dilation,
                    },
                    LayerKind::Broadcast => {
                        if layer.out_channels != ch {
                            return Err(cfg_err(
                                i,
                                format!(
                                    "broadcast block keeps channels: in {ch}, out {}",
                                    layer.out_channels
                                ),
                            ));
                        }
                        if layer.freq_stride != 1 {
                            return Err(cfg_err(i, "broadcast block cannot stride frequency".into()));
                        }
                        Block::Broadcast {
                            name,
                            channels: ch,
                            dilation: layer.time_dilation,
                        }
                    }
                };
                let (f, _) = block
                    .output_extent(freq, block.time_span() + 1)
                    .map_err(|e| cfg_err(i, e.to_string()))?;
                if matches!(block, Block::Transition { .. } | Block::Broadcast { .. })
                    && f % self.ssn_groups != 0
                {
                    return Err(cfg_err(
                        i,
                        format!("frequency extent {f} not divisible by {} sub-bands", self.ssn_groups),
                    ));
                }
                ch = block.out_channels();
                freq = f;
                blocks.push(block);
            }
        }
        Ok(blocks)
    }

    /// `1 + sum of dilation * (kernel - 1)` over every temporal convolution;
    /// all time strides are 1 and nothing is padded in time.
    pub fn receptive_field(&self) -> Result<usize> {
        Ok(1 + self.blocks()?.iter().map(Block::time_span).sum::<usize>())
    }

    /// Per-block `(name, [c, f, t] out)` for an input of `time` frames.
    pub fn shape_ledger(&self, time: usize) -> Result<Vec<(String, [usize; 3])>> {
        let mut ledger = vec![("input".to_string(), [1, self.input_freq, time])];
        let (mut f, mut t) = (self.input_freq, time);
        for b in self.blocks()? {
            let (nf, nt) = b.output_extent(f, t)?;
            f = nf;
            t = nt;
            ledger.push((b.name().to_string(), [b.out_channels(), f, t]));
        }
        Ok(ledger)
    }
}
