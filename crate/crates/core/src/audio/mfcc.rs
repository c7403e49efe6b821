use std::f64::consts::PI;
use std::sync::{Arc, OnceLock};

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use super::{AudioBuffer, FeatureMatrix};
use crate::error::{Error, Result};

pub const SAMPLE_RATE: u32 = 16_000;
/// 250 ms analysis window.
pub const FRAME_LEN: usize = 4000;
/// 100 ms hop.
pub const FRAME_HOP: usize = 1600;
pub const NUM_COEFFS: usize = 16;

const FFT_LEN: usize = 4096;
const NUM_MEL: usize = 40;
const MEL_LOW_HZ: f64 = 20.0;
const MEL_HIGH_HZ: f64 = 7600.0;
const LOG_FLOOR: f64 = 1e-10;

/// Number of full analysis windows in `n` samples.
pub fn frame_count(n: usize) -> usize {
    if n < FRAME_LEN {
        0
    } else {
        (n - FRAME_LEN) / FRAME_HOP + 1
    }
}

fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

/// Precomputed window, filterbank and DCT tables.
pub struct Mfcc {
    window: Vec<f64>,
    /// Per filter: first bin and its weights.
    filters: Vec<(usize, Vec<f64>)>,
    dct: Vec<f64>,
    fft: Arc<dyn Fft<f64>>,
}

impl Mfcc {
    pub fn new() -> Self {
        // Periodic Hann.
        let window = (0..FRAME_LEN)
            .map(|n| 0.5 - 0.5 * (2.0 * PI * n as f64 / FRAME_LEN as f64).cos())
            .collect();

        let lo = hz_to_mel(MEL_LOW_HZ);
        let hi = hz_to_mel(MEL_HIGH_HZ);
        let edges: Vec<f64> = (0..NUM_MEL + 2)
            .map(|i| mel_to_hz(lo + (hi - lo) * i as f64 / (NUM_MEL + 1) as f64))
            .collect();
        let bin_hz = SAMPLE_RATE as f64 / FFT_LEN as f64;
        let filters = (0..NUM_MEL)
            .map(|m| {
                let (l, c, r) = (edges[m], edges[m + 1], edges[m + 2]);
                let first = (l / bin_hz).ceil() as usize;
                let last = ((r / bin_hz).floor() as usize).min(FFT_LEN / 2);
                let weights = (first..=last)
                    .map(|k| {
                        let f = k as f64 * bin_hz;
                        if f <= c {
                            ((f - l) / (c - l)).max(0.0)
                        } else {
                            ((r - f) / (r - c)).max(0.0)
                        }
                    })
                    .collect();
                (first, weights)
            })
            .collect();

        let mut dct = vec![0.0; NUM_COEFFS * NUM_MEL];
        for k in 0..NUM_COEFFS {
            let s = if k == 0 {
                (1.0 / NUM_MEL as f64).sqrt()
            } else {
                (2.0 / NUM_MEL as f64).sqrt()
            };
            for m in 0..NUM_MEL {
                dct[k * NUM_MEL + m] = s * (PI * k as f64 * (m as f64 + 0.5) / NUM_MEL as f64).cos();
            }
        }

        let fft = FftPlanner::new().plan_fft_forward(FFT_LEN);
        Mfcc {
            window,
            filters,
            dct,
            fft,
        }
    }

    /// Shared instance; tables are immutable once built.
    pub fn shared() -> &'static Mfcc {
        static INSTANCE: OnceLock<Mfcc> = OnceLock::new();
        INSTANCE.get_or_init(Mfcc::new)
    }

    pub fn compute(&self, audio: &AudioBuffer) -> Result<FeatureMatrix> {
        if audio.sample_rate != SAMPLE_RATE {
            return Err(Error::Precondition(format!(
                "mfcc needs {SAMPLE_RATE} Hz audio, got {} Hz",
                audio.sample_rate
            )));
        }
        let t = frame_count(audio.samples.len());
        let mut out = vec![0f32; NUM_COEFFS * t];
        let mut buf = vec![Complex::new(0.0, 0.0); FFT_LEN];
        let mut scratch = vec![Complex::new(0.0, 0.0); self.fft.get_inplace_scratch_len()];
        let mut power = vec![0.0; FFT_LEN / 2 + 1];
        let mut logmel = [0.0; NUM_MEL];
        for frame in 0..t {
            let start = frame * FRAME_HOP;
            let chunk = &audio.samples[start..start + FRAME_LEN];
            for (i, slot) in buf.iter_mut().enumerate() {
                let v = if i < FRAME_LEN {
                    chunk[i] as f64 * self.window[i]
                } else {
                    0.0
                };
                *slot = Complex::new(v, 0.0);
            }
            self.fft.process_with_scratch(&mut buf, &mut scratch);
            for (p, c) in power.iter_mut().zip(&buf) {
                *p = c.norm_sqr();
            }
            for (m, (first, weights)) in self.filters.iter().enumerate() {
                let e: f64 = weights.iter().zip(&power[*first..]).map(|(w, p)| w * p).sum();
                logmel[m] = e.max(LOG_FLOOR).ln();
            }
            for k in 0..NUM_COEFFS {
                let row = &self.dct[k * NUM_MEL..(k + 1) * NUM_MEL];
                let c: f64 = row.iter().zip(&logmel).map(|(a, b)| a * b).sum();
                out[k * t + frame] = c as f32;
            }
        }
        FeatureMatrix::from_row_major(out, t)
    }
}

impl Default for Mfcc {
    fn default() -> Self {
        Mfcc::new()
    }
}

/// 16 x T MFCC matrix for 16 kHz audio.
pub fn mfcc(audio: &AudioBuffer) -> Result<FeatureMatrix> {
    Mfcc::shared().compute(audio)
}
