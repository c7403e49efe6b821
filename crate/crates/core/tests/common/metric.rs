//! Naive references for event decoding and matching.

use rand::Rng;

use super::rng;
use wakeloc::eval::*;
use wakeloc::model::FrameScore;

pub fn track(probs: &[f32], offsets: &[f32]) -> Vec<FrameScore> {
    probs
        .iter()
        .zip(offsets)
        .enumerate()
        .map(|(frame, (&prob, &offset))| FrameScore { frame, prob, offset })
        .collect()
}

/// Reference decoder: list the above-threshold frames, cut wherever the
/// hole between neighbours reaches `gap`, take the first maximum per group.
pub fn naive_decode(scores: &[FrameScore], thr: f32, gap: usize, rf: usize) -> Vec<(i64, i64, f32)> {
    let above: Vec<usize> = (0..scores.len()).filter(|&i| scores[i].prob >= thr).collect();
    let mut groups: Vec<Vec<usize>> = Vec::new();
    for &i in &above {
        match groups.last_mut() {
            Some(g) if i - *g.last().unwrap() - 1 < gap => g.push(i),
            _ => groups.push(vec![i]),
        }
    }
    groups
        .iter()
        .map(|g| {
            let best = g.iter().map(|&i| scores[i].prob).fold(f32::MIN, f32::max);
            let p = *g.iter().find(|&&i| scores[i].prob == best).unwrap();
            let back = (scores[p].offset as f64 * rf as f64).round().max(0.0) as i64;
            (p as i64 - back, p as i64, best)
        })
        .collect()
}

pub fn ev(start: i64, end: i64, score: f32) -> TriggerEvent {
    TriggerEvent {
        peak_frame: end,
        peak_score: score,
        offset: 0.0,
        predicted_start: start,
        predicted_end: end,
    }
}

pub fn random_events(r: &mut impl Rng, n: usize, len: i64) -> Vec<TriggerEvent> {
    (0..n)
        .map(|_| {
            let end = r.gen_range(0..len);
            // Coarse scores so ties occur.
            ev(end - r.gen_range(0..15), end, r.gen_range(1..=10) as f32 / 10.0)
        })
        .collect()
}

pub fn random_truths(r: &mut impl Rng, n: usize, len: i64) -> Vec<(i64, i64)> {
    (0..n)
        .map(|_| {
            let s = r.gen_range(0..len);
            (s, s + r.gen_range(0..20))
        })
        .collect()
}

pub fn key(e: &TriggerEvent) -> (i64, i64, u32) {
    (e.predicted_start, e.peak_frame, e.peak_score.to_bits())
}

/// Reference matcher: truths in start order each take the unclaimed
/// overlapping event with the highest score (earliest peak, then start).
pub fn naive_match(events: &[TriggerEvent], truths: &[(i64, i64)]) -> (Vec<(usize, (i64, i64, u32))>, usize, Vec<usize>) {
    let mut claimed = vec![false; events.len()];
    let mut order: Vec<usize> = (0..truths.len()).collect();
    order.sort_by_key(|&i| (truths[i], i));
    let mut tps = Vec::new();
    let mut frs = Vec::new();
    for ti in order {
        let (s, t) = truths[ti];
        let best = (0..events.len())
            .filter(|&k| !claimed[k] && events[k].predicted_start <= t && s <= events[k].predicted_end)
            .min_by(|&a, &b| {
                let (x, y) = (&events[a], &events[b]);
                y.peak_score
                    .partial_cmp(&x.peak_score)
                    .unwrap()
                    .then(x.peak_frame.cmp(&y.peak_frame))
                    .then(x.predicted_start.cmp(&y.predicted_start))
            });
        match best {
            Some(k) => {
                claimed[k] = true;
                tps.push((ti, key(&events[k])));
            }
            None => frs.push(ti),
        }
    }
    let fa = (0..events.len())
        .filter(|&k| !claimed[k])
        .filter(|&k| !truths.iter().any(|&(s, t)| events[k].predicted_start <= t && s <= events[k].predicted_end))
        .count();
    tps.sort();
    frs.sort();
    (tps, fa, frs)
}

/// Decoder against the reference on `n` random tracks of up to 200 frames.
pub fn decode_agreement(n: u64) -> usize {
    let mut agree = 0;
    for seed in 0..n {
        let mut r = rng(seed);
        let len = r.gen_range(0..=200);
        let probs: Vec<f32> = (0..len).map(|_| (r.gen_range(0.0f32..1.0) * 8.0).round() / 8.0).collect();
        let offsets: Vec<f32> = (0..len).map(|_| r.gen_range(-0.2f32..1.0)).collect();
        let (thr, gap, rf) = (r.gen_range(0.05f32..0.95), r.gen_range(0..8), r.gen_range(1..140));
        let t = track(&probs, &offsets);
        let got: Vec<(i64, i64, f32)> = decode_events(&t, thr, gap, rf, 0)
            .iter()
            .map(|e| (e.predicted_start, e.predicted_end, e.peak_score))
            .collect();
        agree += usize::from(got == naive_decode(&t, thr, gap, rf));
    }
    agree
}

fn sorted_tps(m: &MatchResult) -> Vec<(usize, (i64, i64, u32))> {
    let mut tps: Vec<_> = m.true_positives.iter().map(|(e, ti)| (*ti, key(e))).collect();
    tps.sort();
    tps
}

/// Matcher against the reference on `n` random event/truth sets.
pub fn match_agreement(n: u64) -> usize {
    let mut agree = 0;
    for seed in 0..n {
        let mut r = rng(seed);
        let (ne, nt) = (r.gen_range(0..12), r.gen_range(0..5));
        let events = random_events(&mut r, ne, 200);
        let truths = random_truths(&mut r, nt, 200);
        let m = match_events(&events, &truths);
        let (tps, fa, frs) = naive_match(&events, &truths);
        agree += usize::from(sorted_tps(&m) == tps && m.false_accepts.len() == fa && m.false_rejects == frs);
    }
    agree
}

/// Random positive and negative event sets for a DET sweep.
pub fn random_det_sets(r: &mut impl Rng, npos: usize, nneg: usize) -> (Vec<UttEvents>, Vec<UttEvents>) {
    let pos = (0..npos)
        .map(|i| {
            let n = r.gen_range(0..6);
            let events = random_events(r, n, 150);
            let nt = r.gen_range(1..3);
            UttEvents { utt_id: format!("p{i}"), events, truths: random_truths(r, nt, 150) }
        })
        .collect();
    let neg = (0..nneg)
        .map(|i| {
            let n = r.gen_range(0..6);
            UttEvents { utt_id: format!("n{i}"), events: random_events(r, n, 150), truths: vec![] }
        })
        .collect();
    (pos, neg)
}

/// FRR non-increasing and FA/hr non-decreasing as the threshold falls.
pub fn det_is_monotone(curve: &[DetPoint]) -> bool {
    curve[0].threshold.is_infinite()
        && curve.windows(2).all(|w| {
            w[1].threshold < w[0].threshold
                && w[1].fa_per_hour >= w[0].fa_per_hour
                && w[1].frr <= w[0].frr
                && w[1].true_positives >= w[0].true_positives
        })
}

/// Monotonicity over `n` random sweeps; returns how many held.
pub fn det_monotone_trials(n: u64) -> usize {
    (0..n)
        .filter(|&seed| {
            let mut r = rng(seed);
            let (np, nn) = (r.gen_range(1..8), r.gen_range(0..8));
            let (pos, neg) = random_det_sets(&mut r, np, nn);
            det_is_monotone(&det_curve(&pos, &neg, 0.5).unwrap())
        })
        .count()
}
