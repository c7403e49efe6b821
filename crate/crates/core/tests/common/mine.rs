//! Exhaustive reference for the segment miner and structural checks on
//! mined segments.

use std::collections::BTreeSet;

use rand::Rng;

use super::rng;
use wakeloc::mining::*;

pub const KW: [&str; 3] = ["A", "B", "C"];

pub fn kw() -> KeywordSpec {
    KeywordSpec::parse("A B C").unwrap()
}

/// Random phone runs over a small alphabet with the keyword planted
/// `plants` times (it may also arise by chance).
pub fn toy_runs(r: &mut impl Rng, max_frames: usize, plants: usize) -> Vec<(&'static str, usize)> {
    let alphabet = ["A", "B", "C", "X", "Y"];
    let mut runs = Vec::new();
    let mut total = 0;
    let mut planted = 0;
    while total < max_frames.saturating_sub(12) {
        if planted < plants && r.gen_bool(0.3) {
            for p in KW {
                let n = r.gen_range(1..=4);
                runs.push((p, n));
                total += n;
            }
            planted += 1;
        } else {
            let n = r.gen_range(1..=4);
            runs.push((alphabet[r.gen_range(0..alphabet.len())], n));
            total += n;
        }
    }
    runs
}

pub fn toy(r: &mut impl Rng, id: &str, max_frames: usize, plants: usize) -> Alignment {
    Alignment::from_runs(id, &toy_runs(r, max_frames, plants)).unwrap()
}

/// Independent reference: spans, labels and admissible sets straight from
/// the definitions, by enumerating every window position.
pub struct Oracle {
    pub total: i64,
    pub labels: Vec<u8>,
    /// (S, E, E_hat, second_start, penultimate_end)
    pub spans: Vec<(i64, i64, i64, i64, i64)>,
}

impl Oracle {
    pub fn new(a: &Alignment) -> Self {
        let total = a.total_frames() as i64;
        let mut spans = Vec::new();
        let mut i = 0;
        while i + 3 <= a.spans.len() {
            let w = &a.spans[i..i + 3];
            if w[0].phone == "A" && w[1].phone == "B" && w[2].phone == "C" {
                let r = (w[2].end - w[2].start + 1) as i64;
                let e = w[2].end as i64;
                spans.push((w[0].start as i64, e, (e + r.min(5)).min(total - 1), w[1].start as i64, w[1].end as i64));
                i += 3;
            } else {
                i += 1;
            }
        }
        let mut labels = vec![0u8; total as usize];
        for (sp, &(_, e, eh, _, _)) in spans.iter().enumerate() {
            let last_start = a.spans.iter().find(|p| p.end as i64 == e).unwrap().start as i64;
            let _ = sp;
            for f in last_start..=eh {
                labels[f as usize] = 1;
            }
        }
        Oracle { total, labels, spans }
    }

    fn label(&self, f: i64) -> u8 {
        if (0..self.total).contains(&f) {
            self.labels[f as usize]
        } else {
            0
        }
    }

    fn positive(&self, span: usize, s: i64, e: i64) -> bool {
        let (ss, ee, ..) = self.spans[span];
        self.label(e) == 1 && e >= ee && s <= ss
    }

    fn any_positive(&self, s: i64, e: i64) -> bool {
        (0..self.spans.len()).any(|k| self.positive(k, s, e))
    }

    /// Window starts enumerated over a range wide enough for any padding.
    fn windows(&self, rf: i64) -> impl Iterator<Item = (i64, i64)> {
        (-rf - 2..self.total + rf + 2).map(move |s| (s, s + rf - 1))
    }

    pub fn positive_ends(&self, span: usize, rf: i64) -> BTreeSet<i64> {
        self.windows(rf).filter(|&(s, e)| self.positive(span, s, e)).map(|(_, e)| e).collect()
    }

    pub fn negative_starts(&self, span: usize, kind: SegmentKind, rf: i64) -> BTreeSet<i64> {
        let (ss, ee, eh, second, penult) = self.spans[span];
        self.windows(rf)
            .filter(|&(s, e)| {
                let in_range = match kind {
                    SegmentKind::Neg1 => (ss..=penult).contains(&e),
                    SegmentKind::Neg2 => (second..=ee).contains(&s),
                    SegmentKind::Neg3 => (eh + 1..self.total).contains(&s),
                    SegmentKind::Positive => false,
                };
                in_range && !self.any_positive(s, e)
            })
            .map(|(s, _)| s)
            .collect()
    }
}

/// Compares the miner's admissible sets with the oracle on `count` random
/// toy alignments that hold a keyword; returns the number compared.
pub fn admissible_sets_agree(count: usize) -> usize {
    let mut checked = 0;
    let mut seed = 0;
    while checked < count {
        seed += 1;
        let mut r = rng(seed);
        let (n, plants) = (r.gen_range(20..=60), r.gen_range(1..=2));
        let a = toy(&mut r, "t", n, plants);
        let oracle = Oracle::new(&a);
        if oracle.spans.is_empty() {
            continue;
        }
        let view = MiningView::new(&a, &kw());
        assert_eq!(view.labels, oracle.labels, "labels, seed {seed}");
        assert_eq!(view.spans.len(), oracle.spans.len());
        for rf in [4usize, 9, 17, 30] {
            for (k, span) in view.spans.iter().enumerate() {
                let (s, e, eh, ..) = oracle.spans[k];
                assert_eq!((span.start as i64, span.end as i64, span.end_ext as i64), (s, e, eh));
                let got: BTreeSet<i64> = view.positive_ends(span, rf).into_iter().collect();
                assert_eq!(got, oracle.positive_ends(k, rf as i64), "positive, seed {seed} rf {rf}");
                for kind in [SegmentKind::Neg1, SegmentKind::Neg2, SegmentKind::Neg3] {
                    let got: BTreeSet<i64> = view.negative_starts(span, kind, rf).into_iter().collect();
                    assert_eq!(got, oracle.negative_starts(k, kind, rf as i64), "{kind:?}, seed {seed} rf {rf}");
                }
            }
        }
        checked += 1;
    }
    checked
}

pub fn check_segment(seg: &Segment, view: &MiningView, rf: usize) {
    let r = rf as i64;
    assert_eq!(seg.end - seg.start + 1, r);
    assert_eq!(seg.left_pad, (-seg.start).max(0) as usize);
    assert_eq!(seg.right_pad, (seg.end - view.total as i64 + 1).max(0) as usize);
    assert_eq!(seg.pad_fill.is_some(), seg.left_pad + seg.right_pad > 0);
    let label = |f: i64| if (0..view.total as i64).contains(&f) { view.labels[f as usize] } else { 0 };
    let spans = &view.spans;
    match seg.kind {
        SegmentKind::Positive => {
            assert_eq!(seg.label, 1);
            assert_eq!(label(seg.end), 1);
            let d = seg.offset.unwrap();
            assert!((0.0..=(r - 1) as f64 / r as f64).contains(&d));
            let s_frame = seg.end - (d * r as f64).round() as i64;
            let sp = spans.iter().find(|s| s.start as i64 == s_frame).expect("offset points at a keyword start");
            assert!(seg.start <= sp.start as i64 && seg.end >= sp.end as i64, "keyword contained");
        }
        kind => {
            assert_eq!(seg.label, 0);
            assert!(seg.offset.is_none());
            assert!(!view.is_positive_window(seg.end, rf));
            if spans.is_empty() {
                assert_eq!(kind, SegmentKind::Neg3);
                return;
            }
            let ok = spans.iter().any(|sp| {
                let (s, e, eh) = (sp.start as i64, sp.end as i64, sp.end_ext as i64);
                match kind {
                    SegmentKind::Neg1 => seg.end < e && seg.end >= s,
                    // With the keyword inside R, kind 2 always ends past E.
                    SegmentKind::Neg2 => seg.start > s && seg.start <= e && (e - s >= r || seg.end > e),
                    SegmentKind::Neg3 => seg.start > eh,
                    SegmentKind::Positive => unreachable!(),
                }
            });
            assert!(ok || kind == SegmentKind::Neg3, "{kind:?} at {}..{}", seg.start, seg.end);
        }
    }
}

/// Mines toy utterances until at least `min_segments` segments exist,
/// checking every one; returns the segment count and the count per kind.
pub fn invariant_sweep(min_segments: usize) -> (usize, [usize; 4]) {
    let k = kw();
    let mut r = rng(77);
    let mut count = 0;
    let mut kinds = [0usize; 4];
    let mut i = 0;
    while count < min_segments {
        let plants = [0, 1, 1, 2][i % 4];
        let n = r.gen_range(15..=60);
        let a = toy(&mut r, &format!("u{i}"), n, plants);
        let rf = [9usize, 17, 35][i % 3];
        let view = MiningView::new(&a, &k);
        let segs = mine_utterance(&a, &k, rf, &mut r);
        let positives = segs.iter().filter(|s| s.label == 1).count();
        assert!(positives <= 1);
        assert_eq!(segs.len() - positives, NEGATIVES_PER_UTTERANCE);
        for s in &segs {
            check_segment(s, &view, rf);
            kinds[s.kind as usize] += 1;
        }
        count += segs.len();
        i += 1;
    }
    println!("{count} segments from {i} utterances, per kind {kinds:?}");
    (count, kinds)
}

