use super::decode::{iou, match_events, TriggerEvent};
use crate::error::{Error, Result};

/// Events and keyword windows of one utterance.
#[derive(Debug, Clone, PartialEq)]
pub struct UttEvents {
    pub utt_id: String,
    pub events: Vec<TriggerEvent>,
    pub truths: Vec<(i64, i64)>,
}

impl UttEvents {
    fn above(&self, threshold: f32) -> Vec<TriggerEvent> {
        self.events
            .iter()
            .filter(|e| e.peak_score >= threshold)
            .copied()
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetPoint {
    pub threshold: f64,
    pub frr: f64,
    pub fa_per_hour: f64,
    pub true_positives: usize,
    pub false_rejects: usize,
    pub false_accepts: usize,
}

/// Counts at one threshold: an event fires when its peak reaches it.
pub fn det_point(positives: &[UttEvents], negatives: &[UttEvents], negative_hours: f64, threshold: f32) -> DetPoint {
    let (mut tp, mut fr) = (0, 0);
    for u in positives {
        let m = match_events(&u.above(threshold), &u.truths);
        tp += m.true_positives.len();
        fr += m.false_rejects.len();
    }
    let fa: usize = negatives.iter().map(|u| u.above(threshold).len()).sum();
    DetPoint {
        threshold: threshold as f64,
        frr: fr as f64 / (tp + fr).max(1) as f64,
        fa_per_hour: fa as f64 / negative_hours,
        true_positives: tp,
        false_rejects: fr,
        false_accepts: fa,
    }
}

/// Sweeps every distinct event peak score, highest first, plus a leading
/// point above all scores where nothing fires. False accepts are counted on
/// the keyword-free set only.
pub fn det_curve(positives: &[UttEvents], negatives: &[UttEvents], negative_hours: f64) -> Result<Vec<DetPoint>> {
    let truths: usize = positives.iter().map(|u| u.truths.len()).sum();
    if truths == 0 {
        return Err(Error::UndefinedFrr("positive set holds no keyword windows".into()));
    }
    if !(negative_hours > 0.0) {
        return Err(Error::Precondition("negative audio duration must be positive".into()));
    }
    let mut thresholds: Vec<f32> = positives
        .iter()
        .chain(negatives)
        .flat_map(|u| u.events.iter().map(|e| e.peak_score))
        .collect();
    thresholds.sort_by(|a, b| b.total_cmp(a));
    thresholds.dedup();
    let mut curve = Vec::with_capacity(thresholds.len() + 1);
    curve.push(DetPoint {
        threshold: f64::INFINITY,
        frr: 1.0,
        fa_per_hour: 0.0,
        true_positives: 0,
        false_rejects: truths,
        false_accepts: 0,
    });
    for t in thresholds {
        curve.push(det_point(positives, negatives, negative_hours, t));
    }
    Ok(curve)
}

/// FRR at a target FA/hr, linearly interpolated between the two sweep
/// points that bracket it, plus the lowest threshold whose FA/hr does not
/// exceed the target.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OperatingPoint {
    pub target_fa_per_hour: f64,
    pub frr: f64,
    pub threshold: f64,
    /// The sweep point at `threshold`.
    pub at_threshold: DetPoint,
}

pub fn operating_point(curve: &[DetPoint], target_fa_per_hour: f64) -> Result<OperatingPoint> {
    let lo = curve
        .iter()
        .rposition(|p| p.fa_per_hour <= target_fa_per_hour)
        .ok_or_else(|| Error::UndefinedFrr("no sweep point reaches the target FA/hr".into()))?;
    let a = curve[lo];
    let frr = match curve.get(lo + 1) {
        Some(b) if b.fa_per_hour > a.fa_per_hour && a.fa_per_hour < target_fa_per_hour => {
            let w = (target_fa_per_hour - a.fa_per_hour) / (b.fa_per_hour - a.fa_per_hour);
            a.frr + w * (b.frr - a.frr)
        }
        _ => a.frr,
    };
    Ok(OperatingPoint {
        target_fa_per_hour,
        frr,
        threshold: a.threshold,
        at_threshold: a,
    })
}

/// IOU between each true positive's predicted window and its keyword window.
pub fn true_positive_ious(positives: &[UttEvents], threshold: f32) -> Vec<f64> {
    let mut out = Vec::new();
    for u in positives {
        let m = match_events(&u.above(threshold), &u.truths);
        for (e, ti) in m.true_positives {
            out.push(iou((e.predicted_start, e.predicted_end), u.truths[ti]));
        }
    }
    out
}

/// TPR at each IOU threshold tau in 0.00..=1.00 (step 0.01) and the
/// trapezoid area under that curve.
pub fn iou_tpr_curve(ious: &[f64], total_positives: usize) -> (Vec<(f64, f64)>, f64) {
    let curve: Vec<(f64, f64)> = (0..=100)
        .map(|i| {
            let tau = i as f64 / 100.0;
            let hits = ious.iter().filter(|&&v| v >= tau - 1e-12).count();
            (tau, if total_positives == 0 { 0.0 } else { hits as f64 / total_positives as f64 })
        })
        .collect();
    let auc = curve.windows(2).map(|w| 0.5 * (w[0].1 + w[1].1) * (w[1].0 - w[0].0)).sum();
    (curve, auc)
}
