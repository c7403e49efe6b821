//! Frame-at-a-time inference.
//!
//! Every block keeps the last `time_span` input columns it has seen. When a
//! new column arrives the block runs (infer mode) on the `time_span + 1`
//! column window, which yields exactly one output column. Because each block
//! operator is either per-column or a valid temporal convolution, the result
//! is the same arithmetic the batch forward performs for that frame.

use std::collections::VecDeque;
use std::sync::Arc;

use crate::audio::{FeatureMatrix, NUM_COEFFS};
use crate::error::{Error, Result};
use crate::model::{Block, FrameScore, Model};
use crate::tensor::{sigmoid, Tensor};

#[derive(Debug, Clone)]
struct Ring {
    channels: usize,
    freq: usize,
    /// Columns kept between pushes; the window is `span + 1` wide.
    span: usize,
    cols: VecDeque<Vec<f32>>,
}

impl Ring {
    fn column_len(&self) -> usize {
        self.channels * self.freq
    }

    /// `[1, C, F, span + 1]` from the buffered columns.
    fn window(&self) -> Tensor<f32> {
        let w = self.cols.len();
        let mut data = vec![0f32; self.column_len() * w];
        for (t, col) in self.cols.iter().enumerate() {
            for (i, &v) in col.iter().enumerate() {
                data[i * w + t] = v;
            }
        }
        Tensor::from_vec(&[1, self.channels, self.freq, w], data).expect("ring geometry")
    }
}

/// Streaming inference state for one audio stream.
#[derive(Debug, Clone)]
pub struct StreamState {
    model: Arc<Model>,
    rings: Vec<Ring>,
    frames_consumed: usize,
}

impl StreamState {
    pub fn new(model: Arc<Model>) -> Result<Self> {
        let cfg = model.config();
        let mut channels = 1;
        let mut freq = cfg.input_freq;
        let mut rings = Vec::new();
        for block in model.network().blocks() {
            if let Block::Conv { spec, .. } | Block::Head { spec, .. } = block {
                if spec.stride.1 != 1 {
                    return Err(Error::Config(format!(
                        "{}: temporal stride {} cannot stream",
                        block.name(),
                        spec.stride.1
                    )));
                }
            }
            let span = block.time_span();
            rings.push(Ring {
                channels,
                freq,
                span,
                cols: VecDeque::with_capacity(span + 1),
            });
            freq = block.output_extent(freq, span + 1)?.0;
            channels = block.out_channels();
        }
        Ok(StreamState {
            model,
            rings,
            frames_consumed: 0,
        })
    }

    pub fn model(&self) -> &Arc<Model> {
        &self.model
    }

    /// Frames before the first output: `R - 1`.
    pub fn warmup(&self) -> usize {
        self.model.receptive_field() - 1
    }

    pub fn frames_consumed(&self) -> usize {
        self.frames_consumed
    }

    /// Floats reserved across all ring buffers. Fixed at construction.
    pub fn buffer_capacity(&self) -> usize {
        self.rings.iter().map(|r| (r.span + 1) * r.column_len()).sum()
    }

    /// Floats currently held; never exceeds [`Self::buffer_capacity`].
    pub fn buffered(&self) -> usize {
        self.rings.iter().map(|r| r.cols.len() * r.column_len()).sum()
    }

    pub fn reset(&mut self) {
        for r in &mut self.rings {
            r.cols.clear();
        }
        self.frames_consumed = 0;
    }

    /// Consumes one 16-value feature column. Returns a score once the
    /// receptive field is filled, one per frame from then on.
    pub fn push_frame(&mut self, column: &[f32]) -> Result<Option<FrameScore>> {
        if column.len() != NUM_COEFFS {
            return Err(Error::Shape(format!(
                "feature column has {} values, expected {NUM_COEFFS}",
                column.len()
            )));
        }
        let frame = self.frames_consumed;
        self.frames_consumed += 1;
        let network = self.model.network();
        let weights = self.model.weights();
        let mut x = column.to_vec();
        for (i, ring) in self.rings.iter_mut().enumerate() {
            ring.cols.push_back(x);
            if ring.cols.len() <= ring.span {
                return Ok(None);
            }
            let y = network.block_infer(i, weights, &ring.window())?;
            ring.cols.pop_front();
            debug_assert_eq!(y.dims()[3], 1);
            x = y.into_data();
        }
        debug_assert_eq!(x.len(), 2);
        Ok(Some(FrameScore {
            frame,
            prob: sigmoid(x[0]),
            offset: x[1],
        }))
    }

    /// Pushes every column of `features` in order.
    pub fn push_chunk(&mut self, features: &FeatureMatrix) -> Result<Vec<FrameScore>> {
        let mut out = Vec::new();
        for t in 0..features.cols() {
            if let Some(s) = self.push_frame(&features.column(t))? {
                out.push(s);
            }
        }
        Ok(out)
    }
}

/// Streams a whole feature matrix through a fresh state; yields
/// `max(0, T - R + 1)` scores.
pub fn stream_file(model: &Arc<Model>, features: &FeatureMatrix) -> Result<Vec<FrameScore>> {
    StreamState::new(Arc::clone(model))?.push_chunk(features)
}
