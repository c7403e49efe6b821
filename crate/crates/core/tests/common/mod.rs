#![allow(dead_code)]

pub mod grad;
pub mod metric;
pub mod mine;
pub mod stream;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use wakeloc::audio::FeatureMatrix;
use wakeloc::model::{LayerSpec, ModelConfig};
use wakeloc::tensor::Tensor;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Uniform in [-1, 1], nudged away from zero so ReLU kinks stay farther than
/// a finite-difference step.
pub fn rand_tensor(rng: &mut impl Rng, dims: &[usize]) -> Tensor<f32> {
    let n = dims.iter().product();
    let data = (0..n)
        .map(|_| {
            let v: f32 = rng.gen_range(0.05..1.0);
            if rng.gen_bool(0.5) {
                v
            } else {
                -v
            }
        })
        .collect();
    Tensor::from_vec(dims, data).unwrap()
}

pub fn rand_features(rng: &mut impl Rng, cols: usize) -> FeatureMatrix {
    let data = (0..16 * cols).map(|_| rng.gen_range(-3.0f32..3.0)).collect();
    FeatureMatrix::from_row_major(data, cols).unwrap()
}

/// `max |a - b| / max(max |a|, max |b|)`: relative to the gradient's scale,
/// so entries that are near zero do not blow the ratio up.
pub fn rel_err(analytic: &[f64], numeric: &[f64]) -> f64 {
    assert_eq!(analytic.len(), numeric.len());
    let scale = analytic
        .iter()
        .chain(numeric)
        .fold(0.0f64, |m, v| m.max(v.abs()))
        .max(1e-12);
    analytic
        .iter()
        .zip(numeric)
        .fold(0.0f64, |m, (a, n)| m.max((a - n).abs()))
        / scale
}

/// Three small streaming-compatible configs with distinct dilation
/// schedules and frequency strides.
pub fn tiny_configs() -> Vec<ModelConfig> {
    let mk = |name: &str, layers: Vec<LayerSpec>| ModelConfig {
        name: name.into(),
        input_freq: 16,
        ssn_groups: 2,
        dropout: 0.1,
        layers,
    };
    vec![
        ModelConfig::tiny(),
        mk(
            "dil-1-3",
            vec![
                LayerSpec::conv(4, (3, 3), (1, 0), 2),
                LayerSpec::transition(6, 1, 2),
                LayerSpec::broadcast(6, 3, 2),
                LayerSpec::conv(4, (1, 1), (0, 0), 1),
                LayerSpec::head((4, 1)),
            ],
        ),
        mk(
            "wide-head",
            vec![
                LayerSpec::conv(6, (5, 1), (2, 0), 2),
                LayerSpec::transition(8, 2, 1),
                LayerSpec::broadcast(8, 1, 1),
                LayerSpec::transition(4, 5, 2),
                LayerSpec::conv(4, (3, 2), (0, 0), 1),
                LayerSpec::head((2, 3)),
            ],
        ),
    ]
}
