//! On-disk utterance directories: `*.wav` files plus optional
//! `alignments.tsv` and `keyword.txt`.

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use crate::audio::{load_wav, mfcc, AudioBuffer, FeatureMatrix};
use crate::error::{Error, Result};
use crate::mining::{load_alignments, Alignment, KeywordSpec};

pub const ALIGNMENTS_FILE: &str = "alignments.tsv";
pub const KEYWORD_FILE: &str = "keyword.txt";

#[derive(Debug, Clone)]
pub struct Utterance {
    pub id: String,
    pub audio: AudioBuffer,
    pub features: FeatureMatrix,
    pub alignment: Option<Alignment>,
}

#[derive(Debug, Clone)]
pub struct Corpus {
    pub dir: PathBuf,
    pub keyword: Option<KeywordSpec>,
    /// Sorted by id.
    pub utterances: Vec<Utterance>,
}

/// Sorted `*.wav` paths directly inside `dir`.
pub fn wav_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let rd = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut out = Vec::new();
    for entry in rd {
        let p = entry.map_err(|e| Error::io(dir, e))?.path();
        if p.extension().is_some_and(|x| x.eq_ignore_ascii_case("wav")) {
            out.push(p);
        }
    }
    out.sort();
    Ok(out)
}

pub fn read_keyword(dir: &Path) -> Result<Option<KeywordSpec>> {
    let p = dir.join(KEYWORD_FILE);
    if !p.exists() {
        return Ok(None);
    }
    let text = std::fs::read_to_string(&p).map_err(|e| Error::io(&p, e))?;
    KeywordSpec::parse(text.trim()).map(Some)
}

fn stem(p: &Path) -> String {
    p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

impl Corpus {
    /// Loads and featurizes every WAV in `dir`. Alignments, when present, are
    /// attached by utterance id.
    pub fn load(dir: &Path) -> Result<Self> {
        let files = wav_files(dir)?;
        let align_path = dir.join(ALIGNMENTS_FILE);
        let mut aligns: HashMap<String, Alignment> = if align_path.exists() {
            load_alignments(&align_path)?
                .into_iter()
                .map(|a| (a.utt_id.clone(), a))
                .collect()
        } else {
            HashMap::new()
        };
        let mut utterances = Vec::with_capacity(files.len());
        for f in files {
            let audio = load_wav(&f)?;
            let features = mfcc(&audio)?;
            let id = stem(&f);
            let alignment = aligns.remove(&id);
            utterances.push(Utterance {
                id,
                audio,
                features,
                alignment,
            });
        }
        Ok(Corpus {
            dir: dir.to_path_buf(),
            keyword: read_keyword(dir)?,
            utterances,
        })
    }

    pub fn len(&self) -> usize {
        self.utterances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.utterances.is_empty()
    }

    /// Total audio duration in hours.
    pub fn hours(&self) -> f64 {
        self.utterances.iter().map(|u| u.audio.duration_secs()).sum::<f64>() / 3600.0
    }
}
