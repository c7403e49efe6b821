use std::fmt::Write as _;
use std::path::Path;
use std::sync::OnceLock;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::alignment::{find_keyword_spans, frame_labels, Alignment, KeywordSpan, KeywordSpec};
use crate::audio::{mfcc, white_noise, AudioBuffer, FeatureMatrix, FRAME_HOP, FRAME_LEN, SAMPLE_RATE};
use crate::error::{Error, Result};

/// Negatives per utterance, split across kinds 1, 2 and 3.
pub const NEGATIVE_QUOTA: [usize; 3] = [7, 7, 6];
pub const NEGATIVES_PER_UTTERANCE: usize = 20;
/// Level of the white noise used to fill padded frames.
pub const PAD_NOISE_DBFS: f64 = -30.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SegmentKind {
    Positive,
    /// Ends inside the keyword, before its last phone.
    Neg1,
    /// Starts inside the keyword, ends after it.
    Neg2,
    /// Starts after the extended keyword end.
    Neg3,
}

impl SegmentKind {
    pub fn as_str(self) -> &'static str {
        match self {
            SegmentKind::Positive => "positive",
            SegmentKind::Neg1 => "neg1",
            SegmentKind::Neg2 => "neg2",
            SegmentKind::Neg3 => "neg3",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Ok(match s {
            "positive" => SegmentKind::Positive,
            "neg1" => SegmentKind::Neg1,
            "neg2" => SegmentKind::Neg2,
            "neg3" => SegmentKind::Neg3,
            other => return Err(Error::Format(format!("unknown segment kind '{other}'"))),
        })
    }

    fn negative(k: usize) -> Self {
        [SegmentKind::Neg1, SegmentKind::Neg2, SegmentKind::Neg3][k]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PadFill {
    Silence,
    Noise,
}

/// A training window of exactly R frames, possibly reaching past either end
/// of the utterance.
#[derive(Debug, Clone, PartialEq)]
pub struct Segment {
    pub utt_id: String,
    pub kind: SegmentKind,
    pub start: i64,
    /// Inclusive; `end - start + 1 == R`.
    pub end: i64,
    pub label: u8,
    /// `(end - S) / R`, positives only.
    pub offset: Option<f64>,
    pub left_pad: usize,
    pub right_pad: usize,
    /// How padded frames are filled; `None` when unpadded.
    pub pad_fill: Option<PadFill>,
}

impl Segment {
    fn new<R: Rng + ?Sized>(
        utt_id: &str,
        kind: SegmentKind,
        start: i64,
        rf: usize,
        total: usize,
        offset: Option<f64>,
        rng: &mut R,
    ) -> Self {
        let end = start + rf as i64 - 1;
        let left_pad = (-start).max(0) as usize;
        let right_pad = (end - total as i64 + 1).max(0) as usize;
        let pad_fill = (left_pad + right_pad > 0).then(|| {
            if rng.gen_bool(0.5) {
                PadFill::Noise
            } else {
                PadFill::Silence
            }
        });
        Segment {
            utt_id: utt_id.to_string(),
            kind,
            start,
            end,
            label: u8::from(kind == SegmentKind::Positive),
            offset,
            left_pad,
            right_pad,
            pad_fill,
        }
    }

    pub fn len(&self) -> usize {
        (self.end - self.start + 1) as usize
    }

    pub fn is_empty(&self) -> bool {
        self.end < self.start
    }

    /// Cuts this window out of the utterance features, filling padded frames.
    pub fn features(&self, utterance: &FeatureMatrix) -> FeatureMatrix {
        let fill = match self.pad_fill {
            Some(PadFill::Noise) => pad_noise_bank(),
            _ => silence_column(),
        };
        utterance.window(self.start, self.len(), fill)
    }
}

/// Features of digital silence, one column.
pub fn silence_column() -> &'static FeatureMatrix {
    static SILENCE: OnceLock<FeatureMatrix> = OnceLock::new();
    SILENCE.get_or_init(|| {
        mfcc(&AudioBuffer::silence(FRAME_LEN, SAMPLE_RATE)).expect("silence featurizes")
    })
}

/// Features of fixed-seed white noise at [`PAD_NOISE_DBFS`], cycled when
/// filling padded frames.
pub fn pad_noise_bank() -> &'static FeatureMatrix {
    static BANK: OnceLock<FeatureMatrix> = OnceLock::new();
    BANK.get_or_init(|| {
        let frames = 32;
        let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0f_a11);
        let n = FRAME_LEN + (frames - 1) * FRAME_HOP;
        mfcc(&white_noise(&mut rng, n, PAD_NOISE_DBFS, SAMPLE_RATE)).expect("noise featurizes")
    })
}

/// Label vector plus keyword spans, with the "would be a positive" test used
/// to keep negatives from contradicting the labels.
#[derive(Debug, Clone)]
pub struct MiningView {
    pub total: usize,
    pub labels: Vec<u8>,
    pub spans: Vec<KeywordSpan>,
}

impl MiningView {
    pub fn new(align: &Alignment, kw: &KeywordSpec) -> Self {
        MiningView {
            total: align.total_frames(),
            labels: frame_labels(align, kw),
            spans: find_keyword_spans(align, kw),
        }
    }

    fn label(&self, f: i64) -> u8 {
        if f < 0 || f as usize >= self.total {
            0
        } else {
            self.labels[f as usize]
        }
    }

    /// Whether the window ending at `e` qualifies as a positive for `span`.
    fn positive_for(&self, span: &KeywordSpan, e: i64, rf: usize) -> bool {
        self.label(e) == 1 && e >= span.end as i64 && e - rf as i64 + 1 <= span.start as i64
    }

    /// Whether the window ending at `e` qualifies as a positive for any span.
    pub fn is_positive_window(&self, e: i64, rf: usize) -> bool {
        self.spans.iter().any(|s| self.positive_for(s, e, rf))
    }

    /// Admissible end frames of a positive for `span`.
    pub fn positive_ends(&self, span: &KeywordSpan, rf: usize) -> Vec<i64> {
        (span.end as i64..self.total as i64)
            .filter(|&e| self.positive_for(span, e, rf))
            .collect()
    }

    /// Admissible *start* frames of a negative of kind 1, 2 or 3.
    pub fn negative_starts(&self, span: &KeywordSpan, kind: SegmentKind, rf: usize) -> Vec<i64> {
        let r = rf as i64;
        let starts: Vec<i64> = match kind {
            SegmentKind::Neg1 => (span.start as i64..=span.penultimate_end as i64).map(|e| e - r + 1).collect(),
            SegmentKind::Neg2 => (span.second_start as i64..=span.end as i64).collect(),
            SegmentKind::Neg3 => (span.end_ext as i64 + 1..self.total as i64).collect(),
            SegmentKind::Positive => return Vec::new(),
        };
        starts
            .into_iter()
            .filter(|&s| !self.is_positive_window(s + r - 1, rf))
            .collect()
    }

    /// Starts for windows mined from keyword-free stretches: any start inside
    /// the utterance whose window is not a positive.
    pub fn random_starts(&self, rf: usize) -> Vec<i64> {
        (0..self.total as i64)
            .filter(|&s| !self.is_positive_window(s + rf as i64 - 1, rf))
            .collect()
    }
}

fn pick<R: Rng + ?Sized>(rng: &mut R, items: &[i64]) -> Option<i64> {
    items.choose(rng).copied()
}

/// Draws a positive for `span`. `None` when no end frame is admissible.
pub fn mine_positive<R: Rng + ?Sized>(
    utt_id: &str,
    view: &MiningView,
    span: &KeywordSpan,
    rf: usize,
    rng: &mut R,
) -> Option<Segment> {
    let e = pick(rng, &view.positive_ends(span, rf))?;
    let start = e - rf as i64 + 1;
    let d = (e - span.start as i64) as f64 / rf as f64;
    Some(Segment::new(utt_id, SegmentKind::Positive, start, rf, view.total, Some(d), rng))
}

/// Draws a negative of the given kind. `None` when the range is empty.
pub fn mine_negative<R: Rng + ?Sized>(
    utt_id: &str,
    view: &MiningView,
    span: &KeywordSpan,
    kind: SegmentKind,
    rf: usize,
    rng: &mut R,
) -> Option<Segment> {
    let s = pick(rng, &view.negative_starts(span, kind, rf))?;
    Some(Segment::new(utt_id, kind, s, rf, view.total, None, rng))
}

/// Splits [`NEGATIVE_QUOTA`] over the kinds that are available, handing the
/// share of missing kinds to the available ones in kind order.
pub fn allocate_quota(available: [bool; 3]) -> [usize; 3] {
    let mut q = [0; 3];
    let open: Vec<usize> = (0..3).filter(|&k| available[k]).collect();
    if open.is_empty() {
        return q;
    }
    let mut spare = 0;
    for k in 0..3 {
        if available[k] {
            q[k] = NEGATIVE_QUOTA[k];
        } else {
            spare += NEGATIVE_QUOTA[k];
        }
    }
    for i in 0..spare {
        q[open[i % open.len()]] += 1;
    }
    q
}

/// One positive and twenty negatives for an utterance. Without a keyword, or
/// when no negative kind is available, the twenty negatives are drawn from
/// anywhere in the utterance and tagged kind 3.
pub fn mine_utterance<R: Rng + ?Sized>(align: &Alignment, kw: &KeywordSpec, rf: usize, rng: &mut R) -> Vec<Segment> {
    let view = MiningView::new(align, kw);
    let id = &align.utt_id;
    let mut out = Vec::with_capacity(1 + NEGATIVES_PER_UTTERANCE);
    if view.total == 0 {
        log::warn!("{id}: empty alignment, nothing mined");
        return out;
    }
    let span = view.spans.choose(rng).copied();
    let mut quota = [0; 3];
    let mut pools: [Vec<i64>; 3] = Default::default();
    if let Some(span) = span {
        match mine_positive(id, &view, &span, rf, rng) {
            Some(seg) => out.push(seg),
            None => log::warn!("{id}: no admissible positive window (keyword longer than R={rf}?)"),
        }
        for (k, pool) in pools.iter_mut().enumerate() {
            *pool = view.negative_starts(&span, SegmentKind::negative(k), rf);
        }
        quota = allocate_quota([!pools[0].is_empty(), !pools[1].is_empty(), !pools[2].is_empty()]);
    }
    if quota.iter().sum::<usize>() == 0 {
        let pool = view.random_starts(rf);
        if pool.is_empty() {
            log::warn!("{id}: no negative window available");
            return out;
        }
        pools = [Vec::new(), Vec::new(), pool];
        quota = [0, 0, NEGATIVES_PER_UTTERANCE];
    }
    for k in 0..3 {
        for _ in 0..quota[k] {
            let s = pick(rng, &pools[k]).expect("non-empty pool");
            out.push(Segment::new(id, SegmentKind::negative(k), s, rf, view.total, None, rng));
        }
    }
    out
}

/// Mines every utterance and cuts the windows from its features.
pub fn compose_batch<R: Rng + ?Sized>(
    items: &[(&Alignment, &FeatureMatrix)],
    kw: &KeywordSpec,
    rf: usize,
    rng: &mut R,
) -> Vec<(Segment, FeatureMatrix)> {
    let mut out = Vec::with_capacity(items.len() * (1 + NEGATIVES_PER_UTTERANCE));
    for (align, feats) in items {
        if feats.cols() != align.total_frames() {
            log::debug!(
                "{}: {} feature frames vs {} aligned frames",
                align.utt_id,
                feats.cols(),
                align.total_frames()
            );
        }
        for seg in mine_utterance(align, kw, rf, rng) {
            let f = seg.features(feats);
            out.push((seg, f));
        }
    }
    out
}

pub const MANIFEST_HEADER: &str = "utt_id\tkind\tstart_frame\tend_frame\tlabel\toffset_target\tleft_pad\tright_pad";

pub fn format_manifest(segments: &[Segment], seed: u64) -> String {
    let mut s = format!("# seed={seed}\n{MANIFEST_HEADER}\n");
    for g in segments {
        let off = g.offset.map_or_else(|| "NA".to_string(), |d| format!("{d:.6}"));
        let _ = writeln!(
            s,
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
            g.utt_id,
            g.kind.as_str(),
            g.start,
            g.end,
            g.label,
            off,
            g.left_pad,
            g.right_pad
        );
    }
    s
}

/// Parses a manifest; comment lines starting with `#` are skipped. Padding
/// fill is not recorded in the file and comes back as `None`.
pub fn parse_manifest(text: &str) -> Result<Vec<Segment>> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.starts_with('#') && !l.trim().is_empty());
    match lines.next() {
        Some((_, h)) if h == MANIFEST_HEADER => {}
        _ => return Err(Error::Format("segment manifest lacks its header row".into())),
    }
    lines
        .map(|(i, line)| {
            let f: Vec<&str> = line.split('\t').collect();
            let bad = |what: &str| Error::Format(format!("manifest line {}: bad {what}", i + 1));
            if f.len() != 8 {
                return Err(bad("field count"));
            }
            let int = |s: &str, w: &str| s.parse::<i64>().map_err(|_| bad(w));
            Ok(Segment {
                utt_id: f[0].to_string(),
                kind: SegmentKind::parse(f[1])?,
                start: int(f[2], "start_frame")?,
                end: int(f[3], "end_frame")?,
                label: f[4].parse().map_err(|_| bad("label"))?,
                offset: match f[5] {
                    "NA" => None,
                    v => Some(v.parse().map_err(|_| bad("offset_target"))?),
                },
                left_pad: f[6].parse().map_err(|_| bad("left_pad"))?,
                right_pad: f[7].parse().map_err(|_| bad("right_pad"))?,
                pad_fill: None,
            })
        })
        .collect()
}

pub fn save_manifest(path: &Path, segments: &[Segment], seed: u64) -> Result<()> {
    std::fs::write(path, format_manifest(segments, seed)).map_err(|e| Error::io(path, e))
}
