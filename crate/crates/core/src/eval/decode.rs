use crate::model::FrameScore;

/// Runs separated by fewer than this many sub-threshold frames merge.
pub const DEFAULT_MERGE_GAP: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TriggerEvent {
    pub peak_frame: i64,
    pub peak_score: f32,
    pub offset: f32,
    /// `peak_frame - max(0, round(offset * R))`.
    pub predicted_start: i64,
    /// Equal to `peak_frame`.
    pub predicted_end: i64,
}

impl TriggerEvent {
    fn at(score: &FrameScore, rf: usize, frame_shift: i64) -> Self {
        let peak = score.frame as i64 + frame_shift;
        let back = ((score.offset as f64) * rf as f64).round().max(0.0) as i64;
        TriggerEvent {
            peak_frame: peak,
            peak_score: score.prob,
            offset: score.offset,
            predicted_start: peak - back,
            predicted_end: peak,
        }
    }
}

/// Groups consecutive frames with `prob >= threshold` into runs, merges runs
/// whose gap is below `merge_gap`, and emits one event per run at its peak
/// (earliest frame on ties). `frame_shift` is added to every frame index.
pub fn decode_events(
    scores: &[FrameScore],
    threshold: f32,
    merge_gap: usize,
    rf: usize,
    frame_shift: i64,
) -> Vec<TriggerEvent> {
    let mut events = Vec::new();
    // Current merged run: (index of peak, last above-threshold index).
    let mut current: Option<(usize, usize)> = None;
    for (i, s) in scores.iter().enumerate() {
        if s.prob < threshold {
            continue;
        }
        current = match current {
            Some((peak, last)) if i - last - 1 < merge_gap => {
                let peak = if s.prob > scores[peak].prob { i } else { peak };
                Some((peak, i))
            }
            Some((peak, _)) => {
                events.push(TriggerEvent::at(&scores[peak], rf, frame_shift));
                Some((i, i))
            }
            None => Some((i, i)),
        };
    }
    if let Some((peak, _)) = current {
        events.push(TriggerEvent::at(&scores[peak], rf, frame_shift));
    }
    events
}

/// Result of matching events against keyword windows.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MatchResult {
    /// `(event, truth index)`.
    pub true_positives: Vec<(TriggerEvent, usize)>,
    pub false_accepts: Vec<TriggerEvent>,
    /// Truth indices never matched.
    pub false_rejects: Vec<usize>,
    /// Overlapping events beyond the one credited to a truth.
    pub discarded: Vec<TriggerEvent>,
}

fn overlaps(e: &TriggerEvent, (s, t): (i64, i64)) -> bool {
    e.predicted_start <= t && s <= e.predicted_end
}

/// Highest score first, then earliest peak, then earliest start.
fn rank(a: &TriggerEvent, b: &TriggerEvent) -> std::cmp::Ordering {
    b.peak_score
        .total_cmp(&a.peak_score)
        .then(a.peak_frame.cmp(&b.peak_frame))
        .then(a.predicted_start.cmp(&b.predicted_start))
}

/// Each truth (in order of start frame) takes the best-ranked unclaimed
/// event overlapping it. Remaining events that overlap some truth are
/// discarded; the rest are false accepts.
pub fn match_events(events: &[TriggerEvent], truths: &[(i64, i64)]) -> MatchResult {
    let mut sorted: Vec<TriggerEvent> = events.to_vec();
    sorted.sort_by(rank);
    let mut truth_order: Vec<usize> = (0..truths.len()).collect();
    truth_order.sort_by_key(|&i| (truths[i].0, truths[i].1, i));
    let mut used = vec![false; sorted.len()];
    let mut out = MatchResult::default();
    for &ti in &truth_order {
        let pick = (0..sorted.len()).find(|&k| !used[k] && overlaps(&sorted[k], truths[ti]));
        match pick {
            Some(k) => {
                used[k] = true;
                out.true_positives.push((sorted[k], ti));
            }
            None => out.false_rejects.push(ti),
        }
    }
    for (k, e) in sorted.iter().enumerate() {
        if used[k] {
            continue;
        }
        if truths.iter().any(|&t| overlaps(e, t)) {
            out.discarded.push(*e);
        } else {
            out.false_accepts.push(*e);
        }
    }
    out.false_rejects.sort_unstable();
    out
}

/// Intersection over union of two inclusive frame windows.
pub fn iou((a0, a1): (i64, i64), (b0, b1): (i64, i64)) -> f64 {
    let inter = (a1.min(b1) - a0.max(b0) + 1).max(0);
    let union = (a1 - a0 + 1) + (b1 - b0 + 1) - inter;
    if union <= 0 {
        0.0
    } else {
        inter as f64 / union as f64
    }
}
