//! The dilated broadcasted-residual network: declarative configuration,
//! weight storage and file format, and the forward/backward passes.

mod config;
mod loaded;
mod network;
mod weights;

pub use config::{
    freq_dw_spec, pointwise_spec, time_dw_spec, Activation, Block, LayerKind, LayerSpec,
    ModelConfig, BLOCK_FREQ_KERNEL, BLOCK_TIME_KERNEL, CANONICAL_PRESET, TINY_PRESET,
};
pub use loaded::{sidecar_path, FrameScore, Model};
pub use network::{ForwardCache, Mode, ModelOutput, Network};
pub use weights::{
    param_table, parameter_count, ParamRole, WeightStore, WEIGHTS_MAGIC, WEIGHTS_VERSION,
};
