//! Frame-at-a-time inference must reproduce whole-utterance inference.

mod common;

use std::sync::Arc;

use common::stream::{model, stream_vs_batch};
use common::{rand_features, rng, tiny_configs};
use rand::Rng;

use wakeloc::audio::FeatureMatrix;
use wakeloc::model::ModelConfig;
use wakeloc::stream::{stream_file, StreamState};

#[test]
fn streaming_equals_batch_over_100_pairs() {
    let r = stream_vs_batch();
    assert_eq!(r.pairs, 100);
    assert!(r.max_diff <= 1e-5);
    assert!(r.chunks_identical);
}

#[test]
fn warmup_and_output_count() {
    let m = model(ModelConfig::canonical(), 1);
    let mut s = StreamState::new(Arc::clone(&m)).unwrap();
    assert_eq!(s.warmup(), 130);
    let mut r = rng(1);
    let f = rand_features(&mut r, 131 + 4);
    let mut outs = 0;
    for t in 0..f.cols() {
        let o = s.push_frame(&f.column(t)).unwrap();
        assert_eq!(o.is_some(), t >= 130, "frame {t}");
        outs += o.is_some() as usize;
    }
    assert_eq!(outs, 5);
}

#[test]
fn memory_is_bounded() {
    let m = model(tiny_configs().remove(1), 2);
    let mut s = StreamState::new(Arc::clone(&m)).unwrap();
    let cap = s.buffer_capacity();
    let mut r = rng(2);
    for _ in 0..2000 {
        let col: Vec<f32> = (0..16).map(|_| r.gen_range(-2.0..2.0)).collect();
        s.push_frame(&col).unwrap();
        assert!(s.buffered() <= cap);
    }
    assert_eq!(s.buffer_capacity(), cap);
    assert_eq!(s.frames_consumed(), 2000);
}

#[test]
fn translation_equivariance() {
    let m = model(ModelConfig::tiny(), 3);
    let rf = m.receptive_field();
    let mut r = rng(3);
    let f = rand_features(&mut r, rf + 30);
    let long = m.score_batch(&f).unwrap();
    for t in [0, 7, 30] {
        let win = f.window(t as i64, rf, &FeatureMatrix::filled(1, 0.0));
        let one = m.score_batch(&win).unwrap();
        assert_eq!(one.len(), 1);
        assert!((one[0].prob - long[t].prob).abs() <= 1e-5);
        assert!((one[0].offset - long[t].offset).abs() <= 1e-5);
    }
}

#[test]
fn short_and_exact_inputs() {
    let m = model(ModelConfig::tiny(), 4);
    let mut r = rng(4);
    assert!(stream_file(&m, &rand_features(&mut r, 34)).unwrap().is_empty());
    assert_eq!(stream_file(&m, &rand_features(&mut r, 35)).unwrap().len(), 1);
}
