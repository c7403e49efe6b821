use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

/// Extension frames are capped at this many.
pub const MAX_EXTENSION: usize = 5;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PhoneSpan {
    pub phone: String,
    pub start: usize,
    /// Inclusive.
    pub end: usize,
}

impl PhoneSpan {
    pub fn new(phone: &str, start: usize, end: usize) -> Self {
        PhoneSpan {
            phone: phone.to_string(),
            start,
            end,
        }
    }

    pub fn len(&self) -> usize {
        self.end + 1 - self.start
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

/// Per-frame phone spans of one utterance, contiguous from frame 0.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Alignment {
    pub utt_id: String,
    pub spans: Vec<PhoneSpan>,
}

impl Alignment {
    pub fn new(utt_id: &str, spans: Vec<PhoneSpan>) -> Result<Self> {
        let mut next = 0;
        for s in &spans {
            if s.end < s.start {
                return Err(Error::Format(format!(
                    "{utt_id}: span '{}' ends ({}) before it starts ({})",
                    s.phone, s.end, s.start
                )));
            }
            if s.start != next {
                return Err(Error::Format(format!(
                    "{utt_id}: span '{}' starts at {}, expected {next} (spans must be contiguous from 0)",
                    s.phone, s.start
                )));
            }
            next = s.end + 1;
        }
        Ok(Alignment {
            utt_id: utt_id.to_string(),
            spans,
        })
    }

    /// Builds contiguous spans from `(phone, length)` runs.
    pub fn from_runs(utt_id: &str, runs: &[(&str, usize)]) -> Result<Self> {
        let mut t = 0;
        let mut spans = Vec::with_capacity(runs.len());
        for &(p, n) in runs {
            if n == 0 {
                return Err(Error::Format(format!("{utt_id}: zero-length run for '{p}'")));
            }
            spans.push(PhoneSpan::new(p, t, t + n - 1));
            t += n;
        }
        Self::new(utt_id, spans)
    }

    pub fn total_frames(&self) -> usize {
        self.spans.last().map_or(0, |s| s.end + 1)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KeywordSpec {
    pub phones: Vec<String>,
}

impl KeywordSpec {
    pub fn new(phones: Vec<String>) -> Result<Self> {
        if phones.len() < 2 {
            return Err(Error::Config("keyword needs at least two phones".into()));
        }
        Ok(KeywordSpec { phones })
    }

    /// Whitespace-separated phone symbols, e.g. `"A B C D"`.
    pub fn parse(text: &str) -> Result<Self> {
        Self::new(text.split_whitespace().map(str::to_string).collect())
    }

    pub fn len(&self) -> usize {
        self.phones.len()
    }

    pub fn is_empty(&self) -> bool {
        self.phones.is_empty()
    }
}

impl std::fmt::Display for KeywordSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.phones.join(" "))
    }
}

/// One keyword occurrence in an alignment.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct KeywordSpan {
    /// First frame of the first keyword phone.
    pub start: usize,
    /// Last frame of the last keyword phone.
    pub end: usize,
    /// `end` plus up to [`MAX_EXTENSION`] frames, clamped to the utterance.
    pub end_ext: usize,
    /// Frame count of the final phone.
    pub last_phone_run: usize,
    /// First frame of the second keyword phone.
    pub second_start: usize,
    /// Last frame of the penultimate keyword phone.
    pub penultimate_end: usize,
    /// First frame of the final keyword phone.
    pub last_start: usize,
}

/// Every non-overlapping run of consecutive spans whose phones equal the
/// keyword, scanning left to right.
pub fn find_keyword_spans(align: &Alignment, kw: &KeywordSpec) -> Vec<KeywordSpan> {
    let k = kw.len();
    let n = align.spans.len();
    let total = align.total_frames();
    let mut out = Vec::new();
    let mut i = 0;
    while k >= 2 && i + k <= n {
        let run = &align.spans[i..i + k];
        if run.iter().zip(&kw.phones).all(|(s, p)| s.phone == *p) {
            let last = &run[k - 1];
            let r = last.len();
            out.push(KeywordSpan {
                start: run[0].start,
                end: last.end,
                end_ext: (last.end + r.min(MAX_EXTENSION)).min(total - 1),
                last_phone_run: r,
                second_start: run[1].start,
                penultimate_end: run[k - 2].end,
                last_start: last.start,
            });
            i += k;
        } else {
            i += 1;
        }
    }
    out
}

/// 1 on final-keyword-phone frames and their extension, 0 elsewhere.
pub fn frame_labels(align: &Alignment, kw: &KeywordSpec) -> Vec<u8> {
    let mut labels = vec![0u8; align.total_frames()];
    for s in find_keyword_spans(align, kw) {
        labels[s.last_start..=s.end_ext].fill(1);
    }
    labels
}

/// Reads the alignment TSV (`utt_id, phone, start_frame, end_frame`, header
/// required). Utterances keep their order of first appearance.
pub fn parse_alignments(text: &str) -> Result<Vec<Alignment>> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty() && !l.starts_with('#'));
    let (_, header) = lines
        .next()
        .ok_or_else(|| Error::Format("alignment file is empty (header required)".into()))?;
    let cols: Vec<&str> = header.split('\t').map(str::trim).collect();
    if cols != ["utt_id", "phone", "start_frame", "end_frame"] {
        return Err(Error::Format(format!("unexpected alignment header '{header}'")));
    }
    let mut order: Vec<String> = Vec::new();
    let mut by_utt: HashMap<String, Vec<PhoneSpan>> = HashMap::new();
    for (lineno, line) in lines {
        let f: Vec<&str> = line.split('\t').map(str::trim).collect();
        if f.len() != 4 {
            return Err(Error::Format(format!(
                "alignment line {}: expected 4 fields, got {}",
                lineno + 1,
                f.len()
            )));
        }
        let num = |s: &str| {
            s.parse::<usize>()
                .map_err(|_| Error::Format(format!("alignment line {}: bad frame index '{s}'", lineno + 1)))
        };
        let span = PhoneSpan::new(f[1], num(f[2])?, num(f[3])?);
        if !by_utt.contains_key(f[0]) {
            order.push(f[0].to_string());
        }
        by_utt.entry(f[0].to_string()).or_default().push(span);
    }
    order
        .into_iter()
        .map(|u| {
            let spans = by_utt.remove(&u).unwrap_or_default();
            Alignment::new(&u, spans)
        })
        .collect()
}

pub fn load_alignments(path: &Path) -> Result<Vec<Alignment>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_alignments(&text).map_err(|e| match e {
        Error::Format(m) => Error::Format(format!("{}: {m}", path.display())),
        other => other,
    })
}

pub fn format_alignments<'a>(aligns: impl IntoIterator<Item = &'a Alignment>) -> String {
    let mut s = String::from("utt_id\tphone\tstart_frame\tend_frame\n");
    for a in aligns {
        for p in &a.spans {
            let _ = writeln!(s, "{}\t{}\t{}\t{}", a.utt_id, p.phone, p.start, p.end);
        }
    }
    s
}
