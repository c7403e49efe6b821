//! Acceptance gate: one PASS/FAIL line per criterion, AC1 to AC10.
//!
//! AC8 trains the tiny preset for 100 epochs on a freshly generated
//! synthetic corpus, so this test takes several minutes.

mod common;

use std::collections::BTreeMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::sync::Arc;
use std::time::{Duration, Instant};

use wakeloc::audio::{load_wav, FeatureMatrix};
use wakeloc::corpus::Corpus;
use wakeloc::eval::{evaluate, iou, EvalOptions};
use wakeloc::mining::{compose_batch, find_keyword_spans, format_manifest, load_alignments, mine_utterance, Alignment};
use wakeloc::model::{parameter_count, Mode, Model, ModelConfig, Network, WeightStore};
use wakeloc::synth::{generate, SynthSpec};
use wakeloc::train::{segment_loss, train, TrainConfig, TrainData};

type Check = Result<String, String>;

fn ensure(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

/// Runs one criterion, turning panics into failures and enforcing its time
/// budget.
fn criterion(id: &str, budget: Duration, f: impl FnOnce() -> Check) -> bool {
    let t = Instant::now();
    let result = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
        let msg = p
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_else(|| "panic".into());
        Err(format!("panicked: {msg}"))
    });
    let took = t.elapsed();
    let result = result.and_then(|d| {
        if took <= budget {
            Ok(d)
        } else {
            Err(format!("{d}; took {took:.1?}, budget {budget:?}"))
        }
    });
    match &result {
        Ok(d) => println!("{id} PASS [{:.1}s] {d}", took.as_secs_f64()),
        Err(d) => println!("{id} FAIL [{:.1}s] {d}", took.as_secs_f64()),
    }
    result.is_ok()
}

fn ac1() -> Check {
    let o = Command::new(env!("CARGO_BIN_EXE_wakeloc"))
        .args(["inspect", "--config", "kws-13k"])
        .output()
        .map_err(|e| e.to_string())?;
    let out = String::from_utf8_lossy(&o.stdout);
    ensure(o.status.success(), "inspect failed")?;
    ensure(out.lines().any(|l| l.trim() == "receptive_field: 131"), "inspect does not report R = 131")?;
    let cfg = ModelConfig::canonical();
    let net = Network::new(cfg.clone()).map_err(|e| e.to_string())?;
    let w = WeightStore::<f32>::build(&cfg, 0).map_err(|e| e.to_string())?;
    let x = common::rand_features(&mut common::rng(0), 131);
    let (y, _) = net.forward(&w, &x.to_tensor(), Mode::Infer).map_err(|e| e.to_string())?;
    ensure(y.frames() == 1, "more than one output frame")?;
    // Detection and offset channels, each 1x1.
    let shape = [y.detection_logits.dims()[1] + y.offsets.dims()[1], y.detection_logits.dims()[2], y.frames()];
    ensure(shape == [2, 1, 1], format!("output shape {shape:?}"))?;
    Ok("inspect reports receptive_field: 131; 1x16x131 input gives one 2x1x1 frame".into())
}

fn ac2() -> Check {
    let r = common::stream::stream_vs_batch();
    ensure(r.pairs == 100, format!("{} pairs", r.pairs))?;
    ensure(r.max_diff <= 1e-5, format!("max |diff| {:e}", r.max_diff))?;
    ensure(r.chunks_identical, "chunk sizes 1/7/all disagree")?;
    Ok(format!("100 pairs, max |stream - batch| = {:e}; chunks 1/7/all identical", r.max_diff))
}

fn ac3() -> Check {
    use common::grad::{layer_ops, loss_f64, network_end_to_end, F32_TOL, LOSS_TOL};
    let ops = layer_ops();
    let (worst_name, worst_op) = ops.iter().fold(("", 0.0), |a, &(n, e)| if e > a.1 { (n, e) } else { a });
    for (name, e) in &ops {
        ensure(*e < F32_TOL, format!("{name}: {e:e}"))?;
    }
    let loss = loss_f64();
    ensure(loss < LOSS_TOL, format!("loss: {loss:e}"))?;
    let net = network_end_to_end();
    ensure(net < F32_TOL, format!("tiny network: {net:e}"))?;
    Ok(format!(
        "{} ops, worst {worst_name} {worst_op:.2e}; loss (f64) {loss:.2e}; tiny network {net:.2e}",
        ops.len()
    ))
}

fn ac4() -> Check {
    let bce = segment_loss(0.0, 1, 0.0, Some(0.0), 0.0);
    ensure((bce.classification - std::f64::consts::LN_2).abs() < 1e-12, format!("gamma 0: {}", bce.classification))?;
    let focal = segment_loss(0.0, 1, 0.0, Some(0.0), 4.0).classification;
    ensure((focal - 0.0433217).abs() <= 1e-6, format!("gamma 4: {focal}"))?;
    for z in [-3.0, 0.0, 2.5] {
        let t = segment_loss(z, 0, 0.7, Some(0.2), 4.0);
        ensure(t.offset == 0.0 && t.grad_offset == 0.0, "offset term active for a negative")?;
    }
    Ok(format!("BCE {:.6}, focal {focal:.7}, negative offset term 0", bce.classification))
}

fn ac5() -> Check {
    let agreed = common::mine::admissible_sets_agree(40);
    ensure(agreed == 40, format!("{agreed} of 40 alignments agree"))?;
    let (count, kinds) = common::mine::invariant_sweep(10_000);
    ensure(count >= 10_000, format!("{count} segments"))?;
    Ok(format!(
        "admissible sets equal enumeration on {agreed} toy alignments; invariants hold on {count} segments (pos/neg1/neg2/neg3 {kinds:?})"
    ))
}

fn ac6() -> Check {
    let kw = common::mine::kw();
    let mut r = common::rng(64);
    let aligns: Vec<Alignment> = (0..64)
        .map(|i| loop {
            let a = common::mine::toy(&mut r, &format!("b{i}"), 60, 1);
            if !find_keyword_spans(&a, &kw).is_empty() {
                break a;
            }
        })
        .collect();
    let feats: Vec<FeatureMatrix> = aligns.iter().map(|a| FeatureMatrix::filled(a.total_frames(), 0.0)).collect();
    let items: Vec<(&Alignment, &FeatureMatrix)> = aligns.iter().zip(&feats).collect();
    let batch = compose_batch(&items, &kw, 131, &mut common::rng(1));
    let positives = batch.iter().filter(|(s, _)| s.label == 1).count();
    ensure(batch.len() == 1344 && positives == 64, format!("{} segments, {positives} positives", batch.len()))?;
    Ok("64 utterances -> 1344 segments, 64 positives".into())
}

fn ac7() -> Check {
    let n = parameter_count(&ModelConfig::canonical()).map_err(|e| e.to_string())?;
    ensure((n as f64 - 13832.0).abs() <= 0.2 * 13832.0, format!("{n} outside 13832 +/- 20%"))?;
    ensure(n == 14834, format!("{n} differs from the pinned 14834"))?;
    Ok(format!("canonical parameter count {n} (pinned), within 13832 +/- 20%"))
}

/// Build targets for the synthetic end-to-end run.
const AC8_MAX_FRR: f64 = 0.05;
const AC8_MIN_AUC: f64 = 0.7;
const AC8_MIN_NEG_HOURS: f64 = 0.5;

fn ac8() -> Check {
    let dir = Path::new(env!("CARGO_TARGET_TMPDIR")).join("acceptance-ac8");
    let _ = std::fs::remove_dir_all(&dir);
    let spec = SynthSpec { seed: 1, ..SynthSpec::default() };
    generate(&spec, &dir.join("syn")).map_err(|e| e.to_string())?;
    let syn = dir.join("syn");
    let train_corpus = Corpus::load(&syn.join("train")).map_err(|e| e.to_string())?;
    ensure(train_corpus.len() == 500, format!("{} training utterances", train_corpus.len()))?;
    let noise = load_wav(&syn.join("noise.wav")).map_err(|e| e.to_string())?;
    let data = TrainData::from_corpus(&train_corpus, None, Some(noise)).map_err(|e| e.to_string())?;
    let model_cfg = ModelConfig::tiny();
    let cfg = TrainConfig { seed: 1, epochs: 100, ..TrainConfig::default() };
    let report = train(&model_cfg, &data, &cfg, |_, _| Ok(())).map_err(|e| e.to_string())?;
    let final_loss = report.log.last().map_or(f64::NAN, |l| l.mean_loss);
    let model = Arc::new(Model::new(model_cfg, report.weights).map_err(|e| e.to_string())?);

    let pos = Corpus::load(&syn.join("test_pos")).map_err(|e| e.to_string())?;
    let neg = Corpus::load(&syn.join("test_neg")).map_err(|e| e.to_string())?;
    let kw = spec.keyword_spec().map_err(|e| e.to_string())?;
    let ev = evaluate(&model, &pos, &neg, &kw, &EvalOptions::default()).map_err(|e| e.to_string())?;
    ev.write_dir(&dir.join("eval"), Some(1)).map_err(|e| e.to_string())?;
    let detail = format!(
        "R = {}, final train loss {final_loss:.5}, FRR {:.4} at {} FA/hr (threshold {:.4}), IOU-TPR AUC {:.4}, {:.3} h negatives",
        model.receptive_field(),
        ev.operating.frr,
        ev.operating.target_fa_per_hour,
        ev.operating.threshold,
        ev.auc,
        ev.negative_hours
    );
    ensure(ev.negative_hours >= AC8_MIN_NEG_HOURS, detail.clone())?;
    ensure(final_loss < 0.05, detail.clone())?;
    ensure(ev.operating.frr <= AC8_MAX_FRR, detail.clone())?;
    ensure(ev.auc >= AC8_MIN_AUC, detail.clone())?;
    Ok(detail)
}

fn tree(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.insert(p.strip_prefix(dir).unwrap().display().to_string(), std::fs::read(&p).unwrap());
            }
        }
    }
    out
}

fn ac10() -> Check {
    let spec = SynthSpec {
        seed: 21,
        train_utterances: 24,
        test_positive: 4,
        test_negative_minutes: 0.2,
        ..SynthSpec::default()
    };
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    generate(&spec, a.path()).map_err(|e| e.to_string())?;
    generate(&spec, b.path()).map_err(|e| e.to_string())?;
    let files = tree(a.path());
    ensure(files == tree(b.path()), "synthetic corpora differ")?;

    let kw = spec.keyword_spec().unwrap();
    let aligns = load_alignments(&a.path().join("train/alignments.tsv")).map_err(|e| e.to_string())?;
    let manifest = || {
        let mut r = common::rng(5);
        let segs: Vec<_> = aligns.iter().flat_map(|al| mine_utterance(al, &kw, 35, &mut r)).collect();
        format_manifest(&segs, 5)
    };
    ensure(manifest() == manifest(), "segment manifests differ")?;

    let corpus = Corpus::load(&a.path().join("train")).map_err(|e| e.to_string())?;
    let noise = load_wav(&a.path().join("noise.wav")).map_err(|e| e.to_string())?;
    let data = TrainData::from_corpus(&corpus, None, Some(noise)).map_err(|e| e.to_string())?;
    let cfg = TrainConfig { seed: 5, epochs: 3, ..TrainConfig::default() };
    let run = || train(&ModelConfig::tiny(), &data, &cfg, |_, _| Ok(())).unwrap().weights.to_bytes();
    let (w1, w2) = (run(), run());
    ensure(w1 == w2, "weights differ")?;
    Ok(format!(
        "{} corpus files, manifest and {}-byte weights file bit-identical across runs",
        files.len(),
        w1.len()
    ))
}

fn ac9() -> Check {
    use common::metric::{decode_agreement, det_monotone_trials, match_agreement};
    let d = decode_agreement(500);
    ensure(d == 500, format!("decode agrees on {d} of 500 tracks"))?;
    let m = match_agreement(500);
    ensure(m == 500, format!("match agrees on {m} of 500 sets"))?;
    let t = det_monotone_trials(300);
    ensure(t == 300, format!("DET monotone in {t} of 300 sweeps"))?;
    let cases = [(iou((0, 9), (0, 5)), 0.6), (iou((3, 12), (3, 12)), 1.0), (iou((0, 9), (10, 19)), 0.0)];
    for (got, want) in cases {
        ensure(got == want, format!("IOU {got} != {want}"))?;
    }
    Ok("decode and match equal the references on 500 random cases each; DET monotone over 300 sweeps; IOU 0.6/1.0/0 exact".into())
}

#[test]
fn acceptance() {
    let min = |m: u64| Duration::from_secs(60 * m);
    let results = [
        criterion("AC1", Duration::from_secs(1), ac1),
        criterion("AC2", min(2), ac2),
        criterion("AC3", min(5), ac3),
        criterion("AC4", Duration::from_secs(1), ac4),
        criterion("AC5", min(1), ac5),
        criterion("AC6", Duration::from_secs(10), ac6),
        criterion("AC7", Duration::from_secs(1), ac7),
        criterion("AC8", min(30), ac8),
        criterion("AC9", min(1), ac9),
        criterion("AC10", min(5), ac10),
    ];
    let passed = results.iter().filter(|&&ok| ok).count();
    println!("acceptance: {passed}/{} criteria pass", results.len());
    assert_eq!(passed, results.len());
}
