//! Deterministic synthetic keyword corpus.
//!
//! Each phone is a block of energy in its own frequency band, either a small
//! tone chord or band-limited noise (a dense sum of random-phase sines).
//! Alignment frame `j` is rendered so that it sits at the centre of MFCC
//! window `j`, which makes the written alignments exact by construction.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::audio::{write_wav, AudioBuffer, FRAME_HOP, FRAME_LEN, SAMPLE_RATE};
use crate::corpus::{ALIGNMENTS_FILE, KEYWORD_FILE};
use crate::error::{Error, Result};
use crate::mining::{find_keyword_spans, format_alignments, Alignment, KeywordSpec};

pub const SILENCE_PHONE: &str = "sil";
/// Half-width of a phone's band relative to its centre frequency.
pub const BAND_HALF_WIDTH: f64 = 0.05;
const RAMP_SAMPLES: usize = 160;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PhoneRecipe {
    /// Three partials inside the band.
    Tone,
    /// Band-limited noise.
    Noise,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthPhone {
    pub symbol: String,
    pub center_hz: f64,
    pub recipe: PhoneRecipe,
}

impl SynthPhone {
    pub fn band(&self) -> (f64, f64) {
        (
            self.center_hz * (1.0 - BAND_HALF_WIDTH),
            self.center_hz * (1.0 + BAND_HALF_WIDTH),
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthSpec {
    pub seed: u64,
    pub keyword: String,
    pub confusables: Vec<String>,
    /// Phones used as neutral context.
    pub fillers: Vec<String>,
    /// Empty means the built-in inventory.
    pub inventory: Vec<SynthPhone>,
    pub train_utterances: usize,
    pub train_positive_fraction: f64,
    pub test_positive: usize,
    /// Minimum total duration of the keyword-free test split.
    pub test_negative_minutes: f64,
    pub noise_floor_db: f64,
    /// Inclusive phone duration range in frames.
    pub phone_frames: (usize, usize),
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            seed: 1,
            keyword: "A B C D".into(),
            confusables: vec!["X B C D".into(), "A B Y D".into(), "Z W D".into()],
            fillers: ["E", "F", "G", "H", "J", "K", "L", "M"].map(String::from).to_vec(),
            inventory: Vec::new(),
            train_utterances: 500,
            train_positive_fraction: 0.5,
            test_positive: 100,
            test_negative_minutes: 31.0,
            noise_floor_db: -50.0,
            phone_frames: (2, 4),
        }
    }
}

/// Sixteen phones with bands spaced evenly on the mel scale from 250 Hz to
/// 6.5 kHz. Bands are interleaved so keyword phones are not neighbours.
pub fn default_inventory() -> Vec<SynthPhone> {
    let order = ["A", "E", "X", "F", "B", "G", "Y", "H", "C", "J", "Z", "K", "D", "L", "W", "M"];
    let mel = |f: f64| 2595.0 * (1.0 + f / 700.0).log10();
    let hz = |m: f64| 700.0 * (10f64.powf(m / 2595.0) - 1.0);
    let (lo, hi) = (mel(250.0), mel(6500.0));
    order
        .iter()
        .enumerate()
        .map(|(i, s)| SynthPhone {
            symbol: s.to_string(),
            center_hz: hz(lo + (hi - lo) * i as f64 / (order.len() - 1) as f64),
            recipe: if i % 2 == 0 { PhoneRecipe::Tone } else { PhoneRecipe::Noise },
        })
        .collect()
}

impl SynthSpec {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(format!("synth spec: {e}")))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("synth spec serializes")
    }

    pub fn phones(&self) -> Vec<SynthPhone> {
        if self.inventory.is_empty() {
            default_inventory()
        } else {
            self.inventory.clone()
        }
    }

    pub fn keyword_spec(&self) -> Result<KeywordSpec> {
        KeywordSpec::parse(&self.keyword)
    }

    fn validate(&self) -> Result<()> {
        let kw = self.keyword_spec()?;
        if kw.len() < 3 {
            return Err(Error::Config("synthetic keyword needs at least three phones".into()));
        }
        let inv = self.phones();
        let known = |p: &str| inv.iter().any(|x| x.symbol == p);
        let mut all: Vec<&str> = kw.phones.iter().map(String::as_str).collect();
        all.extend(self.confusables.iter().flat_map(|c| c.split_whitespace()));
        all.extend(self.fillers.iter().map(String::as_str));
        if let Some(p) = all.iter().find(|p| !known(p)) {
            return Err(Error::Config(format!("phone '{p}' is not in the inventory")));
        }
        let last = kw.phones.last().expect("non-empty keyword");
        for c in &self.confusables {
            let cp: Vec<&str> = c.split_whitespace().collect();
            if cp.last() != Some(&last.as_str()) {
                return Err(Error::Config(format!("confusable '{c}' must end with the keyword's final phone '{last}'")));
            }
            if cp == kw.phones.iter().map(String::as_str).collect::<Vec<_>>() {
                return Err(Error::Config(format!("confusable '{c}' equals the keyword")));
            }
        }
        if self.fillers.is_empty() {
            return Err(Error::Config("at least one filler phone is required".into()));
        }
        let (a, b) = self.phone_frames;
        if a == 0 || a > b {
            return Err(Error::Config("phone_frames must satisfy 1 <= min <= max".into()));
        }
        if !(0.0..=1.0).contains(&self.train_positive_fraction) {
            return Err(Error::Config("train_positive_fraction must be in [0, 1]".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    TestPos,
    TestNeg,
}

impl Split {
    pub fn dir_name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::TestPos => "test_pos",
            Split::TestNeg => "test_neg",
        }
    }

    fn prefix(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::TestPos => "pos",
            Split::TestNeg => "neg",
        }
    }

    fn stream(self) -> u64 {
        match self {
            Split::Train => 1,
            Split::TestPos => 2,
            Split::TestNeg => 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ManifestRow {
    pub utt_id: String,
    pub split: Split,
    pub contains_keyword: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthManifest {
    pub rows: Vec<ManifestRow>,
    pub negative_hours: f64,
}

impl SynthManifest {
    pub fn to_tsv(&self, seed: u64) -> String {
        let mut s = format!("# seed={seed}\nutt_id\tsplit\tcontains_keyword\n");
        for r in &self.rows {
            let _ = writeln!(s, "{}\t{}\t{}", r.utt_id, r.split.dir_name(), u8::from(r.contains_keyword));
        }
        s
    }
}

/// Phone sequence of one utterance as (symbol, frames) runs.
type Runs = Vec<(String, usize)>;

struct Composer<'a> {
    spec: &'a SynthSpec,
    kw: Vec<String>,
    confusables: Vec<Vec<String>>,
}

impl Composer<'_> {
    fn dur<R: Rng>(&self, rng: &mut R) -> usize {
        rng.gen_range(self.spec.phone_frames.0..=self.spec.phone_frames.1)
    }

    fn push_word<R: Rng>(&self, runs: &mut Runs, word: &[String], rng: &mut R) {
        for p in word {
            let d = self.dur(rng);
            runs.push((p.clone(), d));
        }
    }

    fn push_fillers<R: Rng>(&self, runs: &mut Runs, n: usize, rng: &mut R) {
        for _ in 0..n {
            let p = self.spec.fillers.choose(rng).expect("fillers").clone();
            let d = self.dur(rng);
            runs.push((p, d));
        }
    }

    fn push_sil<R: Rng>(&self, runs: &mut Runs, lo: usize, hi: usize, rng: &mut R) {
        runs.push((SILENCE_PHONE.into(), rng.gen_range(lo..=hi)));
    }

    /// Silence, context, the keyword, context, silence.
    fn positive<R: Rng>(&self, rng: &mut R) -> Runs {
        // Keyword-free context on both sides so that windows away from the
        // keyword look like the negative test audio.
        loop {
            let mut r = Vec::new();
            self.push_sil(&mut r, 2, 6, rng);
            for _ in 0..rng.gen_range(0..=3) {
                self.negative_chunk(&mut r, rng);
                self.push_sil(&mut r, 1, 3, rng);
            }
            self.push_word(&mut r, &self.kw, rng);
            for _ in 0..rng.gen_range(0..=3) {
                self.push_sil(&mut r, 1, 3, rng);
                self.negative_chunk(&mut r, rng);
            }
            self.push_sil(&mut r, 2, 6, rng);
            // A chunk may complete a second keyword; keep exactly one.
            if self.count_keywords(&r) == 1 {
                return r;
            }
        }
    }

    /// One keyword-free chunk: a confusable, a keyword prefix, a shuffled
    /// keyword, or filler babble.
    fn negative_chunk<R: Rng>(&self, r: &mut Runs, rng: &mut R) {
        match rng.gen_range(0..4) {
            0 => {
                let c = self.confusables.choose(rng).expect("confusables");
                self.push_word(r, c, rng);
            }
            1 => {
                let k = rng.gen_range(2..self.kw.len());
                self.push_word(r, &self.kw[..k], rng);
            }
            2 => {
                let mut w = self.kw.clone();
                while w == self.kw {
                    w.shuffle(rng);
                }
                self.push_word(r, &w, rng);
            }
            _ => {
                let n = rng.gen_range(1..=3);
                self.push_fillers(r, n, rng);
            }
        }
    }

    fn negative<R: Rng>(&self, rng: &mut R, min_frames: usize) -> Runs {
        loop {
            let mut r = Vec::new();
            self.push_sil(&mut r, 2, 6, rng);
            let mut total = 0;
            while total < min_frames {
                self.negative_chunk(&mut r, rng);
                if rng.gen_bool(0.5) {
                    self.push_sil(&mut r, 1, 4, rng);
                }
                total = r.iter().map(|x| x.1).sum();
            }
            self.push_sil(&mut r, 2, 6, rng);
            if !self.contains_keyword(&r) {
                return r;
            }
        }
    }

    fn count_keywords(&self, runs: &Runs) -> usize {
        let syms: Vec<&str> = runs.iter().map(|x| x.0.as_str()).collect();
        syms.windows(self.kw.len())
            .filter(|w| w.iter().zip(&self.kw).all(|(a, b)| *a == b.as_str()))
            .count()
    }

    fn contains_keyword(&self, runs: &Runs) -> bool {
        self.count_keywords(runs) > 0
    }
}

/// Audio length whose MFCC frame count equals `frames`.
pub fn samples_for_frames(frames: usize) -> usize {
    FRAME_HOP * frames + (FRAME_LEN - FRAME_HOP)
}

/// Renders runs to audio. Phone level is `level_db` dBFS (RMS) over a white
/// noise floor at `floor_db`.
pub fn render<R: Rng>(runs: &[(String, usize)], inventory: &[SynthPhone], level_db: f64, floor_db: f64, rng: &mut R) -> Result<AudioBuffer> {
    let frames: usize = runs.iter().map(|r| r.1).sum();
    let n = samples_for_frames(frames);
    let sr = SAMPLE_RATE as f64;
    let floor = 10f64.powf(floor_db / 20.0) * 3f64.sqrt();
    let mut out: Vec<f64> = (0..n).map(|_| rng.gen_range(-floor..=floor)).collect();
    // Frame j is centred on sample FRAME_HOP * j + FRAME_LEN / 2.
    let lead = FRAME_LEN / 2 - FRAME_HOP / 2;
    let mut frame = 0;
    for (sym, len) in runs {
        let s0 = lead + FRAME_HOP * frame;
        let s1 = s0 + FRAME_HOP * len;
        frame += len;
        if sym == SILENCE_PHONE {
            continue;
        }
        let phone = inventory
            .iter()
            .find(|p| &p.symbol == sym)
            .ok_or_else(|| Error::Config(format!("phone '{sym}' is not in the inventory")))?;
        let (lo, hi) = phone.band();
        let partials: Vec<(f64, f64)> = match phone.recipe {
            PhoneRecipe::Tone => [0.2, 0.5, 0.8]
                .iter()
                .map(|&u| (lo + u * (hi - lo), rng.gen_range(0.0..2.0 * PI)))
                .collect(),
            PhoneRecipe::Noise => (0..16)
                .map(|_| (rng.gen_range(lo..hi), rng.gen_range(0.0..2.0 * PI)))
                .collect(),
        };
        // Each partial has RMS 1/sqrt(2); normalize the sum to the target level.
        let amp = 10f64.powf(level_db / 20.0) * (2.0 / partials.len() as f64).sqrt();
        let len_s = s1 - s0;
        for i in 0..len_s {
            let ramp = (i.min(len_s - 1 - i) as f64 / RAMP_SAMPLES as f64).min(1.0);
            let t = (s0 + i) as f64 / sr;
            let v: f64 = partials.iter().map(|(f, ph)| (2.0 * PI * f * t + ph).sin()).sum();
            out[s0 + i] += amp * ramp * v;
        }
    }
    AudioBuffer::new(out.into_iter().map(|v| v as f32).collect(), SAMPLE_RATE)
}

fn runs_to_alignment(id: &str, runs: &Runs) -> Result<Alignment> {
    let r: Vec<(&str, usize)> = runs.iter().map(|(s, n)| (s.as_str(), *n)).collect();
    Alignment::from_runs(id, &r)
}

fn utterance_rng(seed: u64, split: Split, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((split.stream() << 32) | index as u64);
    rng
}

/// Writes the corpus under `out_dir` and returns its manifest.
pub fn generate(spec: &SynthSpec, out_dir: &Path) -> Result<SynthManifest> {
    spec.validate()?;
    let inventory = spec.phones();
    let kw = spec.keyword_spec()?;
    let composer = Composer {
        spec,
        kw: kw.phones.clone(),
        confusables: spec
            .confusables
            .iter()
            .map(|c| c.split_whitespace().map(String::from).collect())
            .collect(),
    };
    let mkdir = |p: &Path| std::fs::create_dir_all(p).map_err(|e| Error::io(p, e));
    let write = |p: &Path, s: &str| std::fs::write(p, s).map_err(|e| Error::io(p, e));
    mkdir(out_dir)?;

    let mut rows = Vec::new();
    let mut negative_hours = 0.0;
    let neg_target_frames = (spec.test_negative_minutes * 600.0).ceil() as usize;
    for split in [Split::Train, Split::TestPos, Split::TestNeg] {
        let dir = out_dir.join(split.dir_name());
        mkdir(&dir)?;
        let mut aligns = Vec::new();
        let mut frames_so_far = 0;
        let mut i = 0;
        loop {
            let done = match split {
                Split::Train => i >= spec.train_utterances,
                Split::TestPos => i >= spec.test_positive,
                Split::TestNeg => frames_so_far >= neg_target_frames,
            };
            if done {
                break;
            }
            let mut rng = utterance_rng(spec.seed, split, i);
            let positive = match split {
                Split::Train => rng.gen_bool(spec.train_positive_fraction),
                Split::TestPos => true,
                Split::TestNeg => false,
            };
            let runs = if positive {
                composer.positive(&mut rng)
            } else if split == Split::TestNeg {
                // Long keyword-free stretches. The first few lead with each
                // confusable in turn so every one of them appears.
                let mut r = composer.negative(&mut rng, 60);
                if i < composer.confusables.len() {
                    let mut lead = Vec::new();
                    composer.push_sil(&mut lead, 2, 4, &mut rng);
                    composer.push_word(&mut lead, &composer.confusables[i], &mut rng);
                    lead.extend(r);
                    r = lead;
                }
                r
            } else {
                composer.negative(&mut rng, 40)
            };
            let id = format!("{}_{i:04}", split.prefix());
            let align = runs_to_alignment(&id, &runs)?;
            let contains = !find_keyword_spans(&align, &kw).is_empty();
            debug_assert_eq!(contains, positive);
            let level = rng.gen_range(-20.0..=-10.0);
            let audio = render(&runs, &inventory, level, spec.noise_floor_db, &mut rng)?;
            write_wav(&dir.join(format!("{id}.wav")), &audio)?;
            frames_so_far += align.total_frames();
            if split == Split::TestNeg {
                negative_hours += audio.duration_secs() / 3600.0;
            }
            rows.push(ManifestRow {
                utt_id: id,
                split,
                contains_keyword: contains,
            });
            aligns.push(align);
            i += 1;
        }
        write(&dir.join(ALIGNMENTS_FILE), &format_alignments(&aligns))?;
        write(&dir.join(KEYWORD_FILE), &format!("{kw}\n"))?;
    }

    // Background noise for augmentation: low-passed white noise, 10 s.
    let mut rng = utterance_rng(spec.seed, Split::Train, usize::MAX >> 32);
    let mut y = 0.0f64;
    let raw: Vec<f64> = (0..10 * SAMPLE_RATE as usize)
        .map(|_| {
            y = 0.97 * y + 0.03 * rng.gen_range(-1.0..1.0);
            y
        })
        .collect();
    let rms = (raw.iter().map(|v| v * v).sum::<f64>() / raw.len() as f64).sqrt();
    let noise = AudioBuffer::new(raw.iter().map(|v| (v / rms * 0.05) as f32).collect(), SAMPLE_RATE)?;
    write_wav(&out_dir.join("noise.wav"), &noise)?;

    let manifest = SynthManifest { rows, negative_hours };
    write(&out_dir.join("manifest.tsv"), &manifest.to_tsv(spec.seed))?;
    write(&out_dir.join("spec.json"), &spec.to_json())?;
    Ok(manifest)
}
