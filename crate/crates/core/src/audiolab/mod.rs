//! Sample-accurate audio processing for the narration and music beds.
//!
//! Buffers hold interleaved `f32` samples in `[-1, 1]`. Every operation here
//! returns a buffer that satisfies that bound.

mod wav;

pub use wav::{decode_wav, encode_wav, read_wav, write_wav};

use serde::{Deserialize, Serialize};
use tracing::warn;

use crate::backends::{synthesize_speech, SpeechBackend, SpeechConfig};
use crate::error::{Error, Result};
use crate::storyboard::Storyboard;

pub const DEFAULT_SAMPLE_RATE: u32 = 44_100;
pub const TARGET_DURATION_S: f64 = 60.0;

pub const VOICEOVER_FADE_MS: f64 = 1000.0;
pub const MUSIC_FADE_MS: f64 = 2000.0;
pub const MUSIC_ATTENUATION_DB: f64 = -10.0;

#[derive(Clone, PartialEq)]
pub struct AudioBuffer {
    sample_rate: u32,
    channels: u16,
    samples: Vec<f32>,
}

impl std::fmt::Debug for AudioBuffer {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("AudioBuffer")
            .field("sample_rate", &self.sample_rate)
            .field("channels", &self.channels)
            .field("frames", &self.frames())
            .finish()
    }
}

impl AudioBuffer {
    /// Interleaved samples are clamped into `[-1, 1]`; non-finite values are
    /// rejected.
    pub fn new(sample_rate: u32, channels: u16, mut samples: Vec<f32>) -> Result<Self> {
        if sample_rate == 0 {
            return Err(Error::invalid("sample rate must be positive"));
        }
        if !(1..=2).contains(&channels) {
            return Err(Error::invalid(format!("unsupported channel count {channels}")));
        }
        if samples.len() % channels as usize != 0 {
            return Err(Error::invalid(format!(
                "{} samples do not divide into {channels} channels",
                samples.len()
            )));
        }
        if samples.iter().any(|s| !s.is_finite()) {
            return Err(Error::invalid("audio samples must be finite"));
        }
        clamp_all(&mut samples);
        Ok(Self {
            sample_rate,
            channels,
            samples,
        })
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn channels(&self) -> u16 {
        self.channels
    }

    pub fn samples(&self) -> &[f32] {
        &self.samples
    }

    pub fn frames(&self) -> usize {
        self.samples.len() / self.channels as usize
    }

    pub fn duration_s(&self) -> f64 {
        self.frames() as f64 / self.sample_rate as f64
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn peak(&self) -> f32 {
        self.samples.iter().fold(0.0, |m, s| m.max(s.abs()))
    }

    fn with_samples(&self, samples: Vec<f32>) -> Self {
        Self {
            samples,
            ..*self
        }
    }

    /// Mono to stereo by duplicating each sample.
    pub fn to_stereo(&self) -> Self {
        if self.channels == 2 {
            return self.clone();
        }
        let samples = self.samples.iter().flat_map(|&s| [s, s]).collect();
        Self {
            sample_rate: self.sample_rate,
            channels: 2,
            samples,
        }
    }
}

fn clamp_all(samples: &mut [f32]) {
    for s in samples {
        *s = s.clamp(-1.0, 1.0);
    }
}

/// Frame count for a duration, rounded half-up.
pub fn frames_for(duration_s: f64, rate: u32) -> usize {
    (duration_s * rate as f64 + 0.5).floor() as usize
}

/// A result that may have been substituted by a fallback. `fallback` carries
/// the reason when it was.
#[derive(Debug, Clone)]
pub struct Outcome<T> {
    pub value: T,
    pub fallback: Option<String>,
}

impl<T> Outcome<T> {
    pub fn clean(value: T) -> Self {
        Self {
            value,
            fallback: None,
        }
    }

    pub fn degraded(value: T, reason: impl Into<String>) -> Self {
        Self {
            value,
            fallback: Some(reason.into()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MixPlan {
    pub voiceover_gain: f32,
    pub music_gain: f32,
}

impl Default for MixPlan {
    fn default() -> Self {
        Self {
            voiceover_gain: 1.0,
            music_gain: 0.3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DurationMode {
    /// Repeat the buffer end to end until long enough.
    TrimOrLoop,
    /// Append silence.
    TrimOrPad,
}

pub fn silence(duration_s: f64, rate: u32, channels: u16) -> Result<AudioBuffer> {
    if !(duration_s >= 0.0 && duration_s.is_finite()) {
        return Err(Error::invalid(format!("bad silence duration {duration_s}")));
    }
    let frames = frames_for(duration_s, rate);
    AudioBuffer::new(rate, channels, vec![0.0; frames * channels as usize])
}

pub fn normalize_duration(
    buf: &AudioBuffer,
    target_s: f64,
    mode: DurationMode,
) -> Result<AudioBuffer> {
    if !(target_s > 0.0 && target_s.is_finite()) {
        return Err(Error::invalid(format!("target duration must be positive, got {target_s}")));
    }
    let want = frames_for(target_s, buf.sample_rate) * buf.channels as usize;
    let have = buf.samples.len();

    let samples = if have >= want {
        buf.samples[..want].to_vec()
    } else {
        match mode {
            DurationMode::TrimOrLoop => {
                if have == 0 {
                    return Err(Error::invalid("cannot loop an empty buffer"));
                }
                buf.samples.iter().copied().cycle().take(want).collect()
            }
            DurationMode::TrimOrPad => {
                let mut s = buf.samples.clone();
                s.resize(want, 0.0);
                s
            }
        }
    };
    Ok(buf.with_samples(samples))
}

/// Linear amplitude ramps at both ends. A non-zero fade-in starts at exactly
/// zero; a non-zero fade-out ends at exactly zero.
pub fn fade(buf: &AudioBuffer, fade_in_ms: f64, fade_out_ms: f64) -> Result<AudioBuffer> {
    if !(fade_in_ms >= 0.0 && fade_out_ms >= 0.0) {
        return Err(Error::invalid("fade lengths must be non-negative"));
    }
    let frames = buf.frames();
    let n_in = frames_for(fade_in_ms / 1000.0, buf.sample_rate);
    let n_out = frames_for(fade_out_ms / 1000.0, buf.sample_rate);
    if n_in + n_out > frames {
        return Err(Error::invalid(format!(
            "fades of {fade_in_ms} ms + {fade_out_ms} ms exceed {:.3} s of audio",
            buf.duration_s()
        )));
    }

    let ch = buf.channels as usize;
    let mut samples = buf.samples.clone();
    for (i, frame) in samples.chunks_exact_mut(ch).enumerate() {
        let mut g = 1.0f64;
        if i < n_in {
            g = g.min(i as f64 / n_in as f64);
        }
        if i + n_out >= frames {
            g = g.min((frames - 1 - i) as f64 / n_out as f64);
        }
        if g < 1.0 {
            for s in frame {
                *s = (*s as f64 * g) as f32;
            }
        }
    }
    Ok(buf.with_samples(samples))
}

pub fn db_to_factor(db: f64) -> f64 {
    10f64.powf(db / 20.0)
}

pub fn gain_db(buf: &AudioBuffer, db: f64) -> Result<AudioBuffer> {
    if !db.is_finite() {
        return Err(Error::invalid(format!("gain must be finite, got {db} dB")));
    }
    let factor = db_to_factor(db);
    let samples = buf
        .samples
        .iter()
        .map(|&s| ((s as f64 * factor) as f32).clamp(-1.0, 1.0))
        .collect();
    Ok(buf.with_samples(samples))
}

/// Weighted sum of the two beds, clamped. A mono bed is duplicated to stereo
/// when the other is stereo.
pub fn mix(voiceover: &AudioBuffer, music: &AudioBuffer, plan: &MixPlan) -> Result<AudioBuffer> {
    if !(plan.voiceover_gain >= 0.0 && plan.music_gain >= 0.0) {
        return Err(Error::invalid("mix gains must be non-negative"));
    }
    if voiceover.sample_rate != music.sample_rate {
        return Err(Error::invalid(format!(
            "sample rates differ: voiceover {} Hz, music {} Hz",
            voiceover.sample_rate, music.sample_rate
        )));
    }
    if voiceover.frames() != music.frames() {
        return Err(Error::invalid(format!(
            "frame counts differ: voiceover {}, music {}",
            voiceover.frames(),
            music.frames()
        )));
    }
    let (v, m) = if voiceover.channels == music.channels {
        (voiceover.clone(), music.clone())
    } else {
        (voiceover.to_stereo(), music.to_stereo())
    };
    let samples = v
        .samples
        .iter()
        .zip(&m.samples)
        .map(|(&a, &b)| (a * plan.voiceover_gain + b * plan.music_gain).clamp(-1.0, 1.0))
        .collect();
    Ok(v.with_samples(samples))
}

/// Narration text for a storyboard: scene descriptions joined with ". ".
pub fn narration_text(sb: &Storyboard) -> String {
    sb.scenes
        .iter()
        .map(|s| s.description.trim().trim_end_matches('.'))
        .collect::<Vec<_>>()
        .join(". ")
}

/// Pad/trim to 60 s and apply the 1 s fades.
pub fn prepare_voiceover(buf: &AudioBuffer) -> Result<AudioBuffer> {
    let sized = normalize_duration(buf, TARGET_DURATION_S, DurationMode::TrimOrPad)?;
    fade(&sized, VOICEOVER_FADE_MS, VOICEOVER_FADE_MS)
}

pub fn build_voiceover(
    sb: &Storyboard,
    speech: &dyn SpeechBackend,
    cfg: &SpeechConfig,
) -> Outcome<AudioBuffer> {
    let text = narration_text(sb);
    match synthesize_speech(speech, &text, cfg).and_then(|raw| prepare_voiceover(&raw)) {
        Ok(buf) => Outcome::clean(buf),
        Err(e) => {
            warn!(stage = "voiceover", error = %e, "narration failed, using silence");
            Outcome::degraded(silent_bed(), e.to_string())
        }
    }
}

/// Trim or loop to 60 s, attenuate by 10 dB, then apply 2 s fades.
pub fn build_music(source: &AudioBuffer) -> Outcome<AudioBuffer> {
    if source.is_empty() {
        warn!(stage = "music", "empty music source, using silence");
        return Outcome::degraded(silent_bed(), "music source is empty");
    }
    let shaped = normalize_duration(source, TARGET_DURATION_S, DurationMode::TrimOrLoop)
        .and_then(|b| gain_db(&b, MUSIC_ATTENUATION_DB))
        .and_then(|b| fade(&b, MUSIC_FADE_MS, MUSIC_FADE_MS));
    match shaped {
        Ok(buf) => Outcome::clean(buf),
        Err(e) => Outcome::degraded(silent_bed(), e.to_string()),
    }
}

/// 60 s of mono silence at the default rate.
pub fn silent_bed() -> AudioBuffer {
    silence(TARGET_DURATION_S, DEFAULT_SAMPLE_RATE, 1).expect("constant duration is valid")
}
