//! Streaming-versus-batch comparison helpers.

use std::sync::Arc;

use rand::Rng;

use super::{rand_features, rng, tiny_configs};
use wakeloc::audio::FeatureMatrix;
use wakeloc::model::{FrameScore, Model, ModelConfig, WeightStore};
use wakeloc::stream::{stream_file, StreamState};

pub fn model(cfg: ModelConfig, seed: u64) -> Arc<Model> {
    // Non-trivial running statistics so infer-mode norms are exercised.
    let mut w = WeightStore::<f32>::build(&cfg, seed).unwrap();
    let mut r = rng(seed ^ 0xabc);
    let names: Vec<String> = w.names().map(String::from).collect();
    for n in names {
        let t = w.get_mut(&n).unwrap();
        for v in t.data_mut() {
            if n.ends_with("running_var") {
                *v = r.gen_range(0.5..2.0);
            } else if !n.ends_with(".weight") {
                *v += r.gen_range(-0.2..0.2);
            }
        }
    }
    Arc::new(Model::new(cfg, w).unwrap())
}

pub fn chunked(m: &Arc<Model>, f: &FeatureMatrix, chunk: usize) -> Vec<FrameScore> {
    let mut s = StreamState::new(Arc::clone(m)).unwrap();
    let mut out = Vec::new();
    let mut t = 0;
    while t < f.cols() {
        let end = (t + chunk).min(f.cols());
        let cols: Vec<[f32; 16]> = (t..end).map(|i| f.column(i)).collect();
        out.extend(s.push_chunk(&FeatureMatrix::from_columns(&cols).unwrap()).unwrap());
        t = end;
    }
    out
}

pub fn max_diff(a: &[FrameScore], b: &[FrameScore]) -> f32 {
    assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .map(|(x, y)| {
            assert_eq!(x.frame, y.frame);
            (x.prob - y.prob).abs().max((x.offset - y.offset).abs())
        })
        .fold(0.0, f32::max)
}

/// Result of the streaming-versus-batch sweep.
pub struct StreamReport {
    pub pairs: usize,
    pub max_diff: f32,
    /// Chunk sizes 1, 7 and whole-input gave identical streams.
    pub chunks_identical: bool,
}

/// 25 seeded weight/input pairs for each of the canonical and three tiny
/// configs, with perturbed running statistics.
pub fn stream_vs_batch() -> StreamReport {
    let mut configs = vec![ModelConfig::canonical()];
    configs.extend(tiny_configs());
    let mut report = StreamReport { pairs: 0, max_diff: 0.0, chunks_identical: true };
    for (ci, cfg) in configs.iter().enumerate() {
        let rf = cfg.receptive_field().unwrap();
        for k in 0..25u64 {
            let seed = ci as u64 * 1000 + k;
            let m = model(cfg.clone(), seed);
            let mut r = rng(seed);
            let extra = if ci == 0 { r.gen_range(0..12) } else { r.gen_range(0..60) };
            let f = rand_features(&mut r, rf + extra);
            let batch = m.score_batch(&f).unwrap();
            assert_eq!(batch.len(), extra + 1);
            let streamed = stream_file(&m, &f).unwrap();
            report.max_diff = report.max_diff.max(max_diff(&streamed, &batch));
            report.pairs += 1;
            if k < 3 {
                for chunk in [1, 7, f.cols()] {
                    report.chunks_identical &= chunked(&m, &f, chunk) == streamed;
                }
            }
        }
    }
    println!("{} pairs, max |stream - batch| = {:e}", report.pairs, report.max_diff);
    report
}
