use rand::Rng;

use super::AudioBuffer;
use crate::error::{Error, Result};

pub const MIN_GAIN_DB: f64 = -40.0;
pub const MAX_GAIN_DB: f64 = 10.0;

/// Scales every sample by `10^(gain_db/20)`. No clipping.
pub fn apply_gain_db(audio: &AudioBuffer, gain_db: f64) -> Result<AudioBuffer> {
    if !(MIN_GAIN_DB..=MAX_GAIN_DB).contains(&gain_db) {
        return Err(Error::Precondition(format!(
            "gain {gain_db} dB outside [{MIN_GAIN_DB}, {MAX_GAIN_DB}]"
        )));
    }
    let k = 10f64.powf(gain_db / 20.0);
    Ok(AudioBuffer {
        samples: audio.samples.iter().map(|&s| (s as f64 * k) as f32).collect(),
        sample_rate: audio.sample_rate,
    })
}

/// Noise scale that puts `noise_power` at `snr_db` below `audio_power`.
///
/// Returns 0 for silent audio, silent noise or an infinite SNR.
pub fn noise_scale(audio_power: f64, noise_power: f64, snr_db: f64) -> f64 {
    if audio_power <= 0.0 || noise_power <= 0.0 || snr_db == f64::INFINITY {
        return 0.0;
    }
    (audio_power / (noise_power * 10f64.powf(snr_db / 10.0))).sqrt()
}

/// Adds `noise` (tiled or cropped to the audio length) at the requested SNR.
pub fn mix_noise(audio: &AudioBuffer, noise: &AudioBuffer, snr_db: f64) -> Result<AudioBuffer> {
    if noise.sample_rate != audio.sample_rate {
        return Err(Error::Precondition(format!(
            "noise rate {} Hz differs from audio rate {} Hz",
            noise.sample_rate, audio.sample_rate
        )));
    }
    if noise.is_empty() || audio.is_empty() {
        return Ok(audio.clone());
    }
    let n = audio.len();
    let tiled = noise.samples.iter().cycle().take(n);
    let noise_power = tiled.clone().map(|&s| (s as f64) * (s as f64)).sum::<f64>() / n as f64;
    let alpha = noise_scale(audio.power(), noise_power, snr_db);
    if alpha == 0.0 {
        return Ok(audio.clone());
    }
    let samples = audio
        .samples
        .iter()
        .zip(tiled)
        .map(|(&a, &b)| (a as f64 + alpha * b as f64) as f32)
        .collect();
    Ok(AudioBuffer {
        samples,
        sample_rate: audio.sample_rate,
    })
}

/// Uniform white noise with RMS level `dbfs` relative to full scale.
pub fn white_noise<R: Rng + ?Sized>(rng: &mut R, len: usize, dbfs: f64, sample_rate: u32) -> AudioBuffer {
    // Uniform on [-a, a] has RMS a / sqrt(3).
    let a = 10f64.powf(dbfs / 20.0) * 3f64.sqrt();
    AudioBuffer {
        samples: (0..len).map(|_| rng.gen_range(-a..=a) as f32).collect(),
        sample_rate,
    }
}
