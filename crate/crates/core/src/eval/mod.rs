//! Trigger decoding, event matching, DET and IOU-vs-TPR curves.

mod decode;
mod det;
mod plot;

pub use decode::{decode_events, iou, match_events, MatchResult, TriggerEvent, DEFAULT_MERGE_GAP};
pub use det::{
    det_curve, det_point, iou_tpr_curve, operating_point, true_positive_ious, DetPoint, OperatingPoint, UttEvents,
};
pub use plot::line_plot_svg;

use std::fmt::Write as _;
use std::path::Path;
use std::sync::Arc;

use crate::audio::FeatureMatrix;
use crate::corpus::Corpus;
use crate::error::{Error, Result};
use crate::mining::{find_keyword_spans, silence_column, KeywordSpec};
use crate::model::{FrameScore, Model};
use crate::stream::stream_file;

pub const DEFAULT_OP_FA_PER_HOUR: f64 = 12.0;
/// Events are segmented once at this score; the sweep then filters them by
/// peak score, which keeps FA and FR counts monotone in the threshold.
pub const DEFAULT_SWEEP_FLOOR: f32 = 0.5;

#[derive(Debug, Clone, PartialEq)]
pub struct EvalOptions {
    pub op_fa_per_hour: f64,
    pub merge_gap: usize,
    pub sweep_floor: f32,
    /// Match against `[S, E_hat]` instead of `[S, E]`.
    pub extended_truth: bool,
    /// Prepend `R - 1` silence columns so every utterance frame is scored.
    pub left_pad: bool,
    pub jobs: usize,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions {
            op_fa_per_hour: DEFAULT_OP_FA_PER_HOUR,
            merge_gap: DEFAULT_MERGE_GAP,
            sweep_floor: DEFAULT_SWEEP_FLOOR,
            extended_truth: false,
            left_pad: true,
            jobs: 1,
        }
    }
}

/// Per-frame scores on the utterance timeline: `frame` is the last frame of
/// the window. With `left_pad`, the first score lands on frame 0.
pub fn score_features(model: &Arc<Model>, features: &FeatureMatrix, left_pad: bool) -> Result<Vec<FrameScore>> {
    if !left_pad {
        return stream_file(model, features);
    }
    let pad = model.receptive_field() - 1;
    let padded = features.left_pad(pad, &silence_column().column(0));
    let mut scores = stream_file(model, &padded)?;
    for s in &mut scores {
        s.frame -= pad;
    }
    Ok(scores)
}

/// Scores every item on up to `jobs` threads; output order matches input.
pub fn score_all(model: &Arc<Model>, items: &[&FeatureMatrix], left_pad: bool, jobs: usize) -> Result<Vec<Vec<FrameScore>>> {
    let jobs = jobs.clamp(1, items.len().max(1));
    if jobs == 1 {
        return items.iter().map(|f| score_features(model, f, left_pad)).collect();
    }
    let per = items.len().div_ceil(jobs);
    let parts: Vec<Result<Vec<Vec<FrameScore>>>> = std::thread::scope(|scope| {
        let handles: Vec<_> = items
            .chunks(per)
            .map(|chunk| scope.spawn(move || chunk.iter().map(|f| score_features(model, f, left_pad)).collect()))
            .collect();
        handles.into_iter().map(|h| h.join().expect("scoring thread panicked")).collect()
    });
    let mut out = Vec::with_capacity(items.len());
    for p in parts {
        out.extend(p?);
    }
    Ok(out)
}

fn corpus_events(
    model: &Arc<Model>,
    corpus: &Corpus,
    keyword: Option<&KeywordSpec>,
    opts: &EvalOptions,
) -> Result<Vec<UttEvents>> {
    let feats: Vec<&FeatureMatrix> = corpus.utterances.iter().map(|u| &u.features).collect();
    let scores = score_all(model, &feats, opts.left_pad, opts.jobs)?;
    let rf = model.receptive_field();
    let mut out = Vec::with_capacity(scores.len());
    for (u, s) in corpus.utterances.iter().zip(scores) {
        let truths = match keyword {
            None => Vec::new(),
            Some(kw) => {
                let align = u.alignment.as_ref().ok_or_else(|| {
                    Error::Format(format!("{}: utterance {} has no alignment", corpus.dir.display(), u.id))
                })?;
                find_keyword_spans(align, kw)
                    .iter()
                    .map(|k| (k.start as i64, if opts.extended_truth { k.end_ext } else { k.end } as i64))
                    .collect()
            }
        };
        out.push(UttEvents {
            utt_id: u.id.clone(),
            events: decode_events(&s, opts.sweep_floor, opts.merge_gap, rf, 0),
            truths,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct EvalReport {
    pub det: Vec<DetPoint>,
    pub operating: OperatingPoint,
    pub iou_curve: Vec<(f64, f64)>,
    pub auc: f64,
    pub positive_windows: usize,
    pub negative_hours: f64,
    pub positives: Vec<UttEvents>,
    pub negatives: Vec<UttEvents>,
}

/// Full evaluation: positives carry alignments, negatives are keyword-free
/// audio whose duration normalizes FA counts.
pub fn evaluate(model: &Arc<Model>, pos: &Corpus, neg: &Corpus, keyword: &KeywordSpec, opts: &EvalOptions) -> Result<EvalReport> {
    if pos.is_empty() {
        return Err(Error::UndefinedFrr(format!("{}: no positive utterances", pos.dir.display())));
    }
    if neg.is_empty() {
        return Err(Error::Precondition(format!("{}: no negative utterances", neg.dir.display())));
    }
    let positives = corpus_events(model, pos, Some(keyword), opts)?;
    let negatives = corpus_events(model, neg, None, opts)?;
    let negative_hours = neg.hours();
    let det = det_curve(&positives, &negatives, negative_hours)?;
    let operating = operating_point(&det, opts.op_fa_per_hour)?;
    let positive_windows: usize = positives.iter().map(|u| u.truths.len()).sum();
    let ious = true_positive_ious(&positives, operating.threshold as f32);
    let (iou_curve, auc) = iou_tpr_curve(&ious, positive_windows);
    Ok(EvalReport {
        det,
        operating,
        iou_curve,
        auc,
        positive_windows,
        negative_hours,
        positives,
        negatives,
    })
}

fn fmt_threshold(t: f64) -> String {
    if t.is_infinite() {
        "inf".into()
    } else {
        format!("{t:.6}")
    }
}

pub fn format_det_csv(det: &[DetPoint], seed: Option<u64>) -> String {
    let mut s = seed_line(seed);
    s.push_str("threshold,frr,fa_per_hour\n");
    for p in det {
        let _ = writeln!(s, "{},{:.6},{:.6}", fmt_threshold(p.threshold), p.frr, p.fa_per_hour);
    }
    s
}

pub fn format_iou_csv(curve: &[(f64, f64)], seed: Option<u64>) -> String {
    let mut s = seed_line(seed);
    s.push_str("tau,tpr\n");
    for (tau, tpr) in curve {
        let _ = writeln!(s, "{tau:.2},{tpr:.6}");
    }
    s
}

fn seed_line(seed: Option<u64>) -> String {
    seed.map(|s| format!("# seed={s}\n")).unwrap_or_default()
}

impl EvalReport {
    pub fn summary(&self) -> String {
        let op = &self.operating;
        format!(
            "positives: {}\nnegative_hours: {:.4}\nthreshold_at_op: {}\nfrr_at_{}_fa_per_hour: {:.6}\nauc: {:.6}\n",
            self.positive_windows,
            self.negative_hours,
            fmt_threshold(op.threshold),
            op.target_fa_per_hour,
            op.frr,
            self.auc
        )
    }

    /// Writes `det.csv`, `det.svg`, `iou.csv`, `iou.svg` and `summary.txt`.
    pub fn write_dir(&self, dir: &Path, seed: Option<u64>) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let det_pts: Vec<(f64, f64)> = self.det.iter().map(|p| (p.fa_per_hour, 100.0 * p.frr)).collect();
        let files = [
            ("det.csv", format_det_csv(&self.det, seed)),
            ("det.svg", line_plot_svg(&det_pts, "FA per hour", "FRR (%)", "DET")),
            ("iou.csv", format_iou_csv(&self.iou_curve, seed)),
            ("iou.svg", line_plot_svg(&self.iou_curve, "IOU threshold", "TPR", &format!("AUC {:.4}", self.auc))),
            ("summary.txt", format!("{}{}", seed_line(seed), self.summary())),
        ];
        for (name, body) in files {
            let p = dir.join(name);
            std::fs::write(&p, body).map_err(|e| Error::io(&p, e))?;
        }
        Ok(())
    }
}
