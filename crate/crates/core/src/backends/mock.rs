//! Deterministic stand-ins for the generators.
//!
//! Outputs depend only on the inputs and use integer or basic IEEE arithmetic
//! (no transcendental functions), so bytes match across runs and platforms.

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use super::{
    ImageBackend, ImageRequest, MusicSource, SpeechBackend, SpeechConfig, TextBackend, TextParams,
};
use crate::audiolab::{AudioBuffer, DEFAULT_SAMPLE_RATE};
use crate::error::{Error, Result};
use crate::imageproc::{quantize, FrameBuffer};
use crate::storyboard::HEADINGS;

/// Seconds of synthetic narration per word.
pub const SECONDS_PER_WORD: f64 = 0.4;
/// Length of the synthetic music beds; shorter than a video so looping runs.
pub const MOCK_TRACK_SECONDS: u32 = 40;
pub const MOCK_MOODS: [&str; 3] = ["cinematic", "epic", "suspense"];

fn digest(parts: &[&[u8]]) -> [u8; 32] {
    let mut h = Sha256::new();
    for p in parts {
        h.update((p.len() as u64).to_le_bytes());
        h.update(p);
    }
    h.finalize().into()
}

fn pick<'a>(options: &[&'a str], byte: u8) -> &'a str {
    options[byte as usize % options.len()]
}

/// Writes a five-scene board in the `Scene n:` grammar, chosen by a hash of
/// the instruction.
#[derive(Debug, Clone, Copy, Default)]
pub struct MockText;

impl MockText {
    fn subject(instruction: &str) -> &str {
        instruction
            .split_once("for '")
            .and_then(|(_, rest)| rest.rsplit_once("', divided"))
            .map(|(s, _)| s)
            .unwrap_or(instruction)
            .trim()
    }
}

const BEATS: [&[&str]; 5] = [
    &["comes into view", "is revealed at first light", "waits in the silence"],
    &["faces a growing threat", "pushes deeper into the unknown", "senses something is wrong"],
    &["confronts the turning point", "is overwhelmed by the moment", "makes a desperate choice"],
    &["picks up the pieces", "retreats as the dust settles", "counts the cost"],
    &["finds a quiet new beginning", "stands transformed", "looks toward the horizon"],
];
const SHOTS: &[&str] = &["wide shot", "close-up", "over-the-shoulder shot", "aerial view", "low angle"];
const LIGHTS: &[&str] = &["golden hour", "moonlight", "neon glow", "overcast haze", "firelight"];

impl TextBackend for MockText {
    fn generate(&self, instruction: &str, _params: &TextParams) -> Result<String> {
        let subject = Self::subject(instruction);
        let h = digest(&[instruction.as_bytes()]);
        let mut out = String::new();
        for (i, heading) in HEADINGS.iter().enumerate() {
            out.push_str(&format!(
                "Scene {}: {heading}: {subject} {}.\nPrompt: {subject}, {}, {} lighting\n",
                i + 1,
                pick(BEATS[i], h[i]),
                pick(SHOTS, h[5 + i]),
                pick(LIGHTS, h[10 + i]),
            ));
        }
        Ok(out)
    }
}

/// Seeded value-noise gradient with a white fiducial block per scene number.
#[derive(Debug, Clone, Copy, Default)]
pub struct MockImage;

const GRID_X: usize = 8;
const GRID_Y: usize = 6;

impl ImageBackend for MockImage {
    fn generate(&self, req: &ImageRequest) -> Result<FrameBuffer> {
        let (w, h) = (req.width as usize, req.height as usize);
        let key = digest(&[
            &req.seed.to_le_bytes(),
            &req.width.to_le_bytes(),
            &req.height.to_le_bytes(),
            req.visual_prompt.as_bytes(),
        ]);
        let mut rng = ChaCha8Rng::from_seed(key);
        let nodes: Vec<[f64; 3]> = (0..(GRID_X + 1) * (GRID_Y + 1))
            .map(|_| {
                let v = rng.next_u32().to_le_bytes();
                [v[0] as f64, v[1] as f64, v[2] as f64]
            })
            .collect();
        let node = |gx: usize, gy: usize| &nodes[gy * (GRID_X + 1) + gx];
        let smooth = |t: f64| t * t * (3.0 - 2.0 * t);

        let mut pixels = Vec::with_capacity(w * h * 3);
        for y in 0..h {
            let fy = if h > 1 { y as f64 * GRID_Y as f64 / (h - 1) as f64 } else { 0.0 };
            let gy = (fy.floor() as usize).min(GRID_Y - 1);
            let ty = smooth(fy - gy as f64);
            for x in 0..w {
                let fx = if w > 1 { x as f64 * GRID_X as f64 / (w - 1) as f64 } else { 0.0 };
                let gx = (fx.floor() as usize).min(GRID_X - 1);
                let tx = smooth(fx - gx as f64);
                let (a, b, c, d) = (node(gx, gy), node(gx + 1, gy), node(gx, gy + 1), node(gx + 1, gy + 1));
                for ch in 0..3 {
                    let top = a[ch] + (b[ch] - a[ch]) * tx;
                    let bottom = c[ch] + (d[ch] - c[ch]) * tx;
                    pixels.push(quantize(top + (bottom - top) * ty));
                }
            }
        }
        let mut frame = FrameBuffer::new(req.width, req.height, pixels)?;

        let marks = req.scene.map(usize::from).unwrap_or(1).max(1);
        let block = (w.min(h) / 12).max(1);
        let origin_x = match req.scene {
            Some(_) => block,
            None => (u16::from_le_bytes([key[30], key[31]]) as usize) % w.saturating_sub(block).max(1),
        };
        for m in 0..marks {
            let x0 = origin_x + m * block * 2;
            for dy in 0..block + 2 {
                for dx in 0..block + 2 {
                    let (x, y) = (x0 + dx, block + dy);
                    if x < w && y < h {
                        let edge = dx == 0 || dy == 0 || dx == block + 1 || dy == block + 1;
                        let rgb = if edge { [0, 0, 0] } else { [255, 255, 255] };
                        frame.set_pixel(x as u32, y as u32, rgb);
                    }
                }
            }
        }
        Ok(frame)
    }
}

/// Triangle wave in `[-1, 1]` at `freq` Hz, evaluated with integer phase so
/// sample `n` is exact.
fn triangle(n: u64, freq: u64, rate: u64) -> f64 {
    let phase = ((n * freq) % rate) as f64 / rate as f64;
    4.0 * (phase - 0.5).abs() - 1.0
}

/// One triangle tone per word, 0.4 s each, mono at 44.1 kHz.
#[derive(Debug, Clone, Copy, Default)]
pub struct MockSpeech;

impl SpeechBackend for MockSpeech {
    fn synthesize(&self, text: &str, cfg: &SpeechConfig) -> Result<AudioBuffer> {
        let rate = DEFAULT_SAMPLE_RATE as u64;
        let per_word = (SECONDS_PER_WORD * rate as f64).round() as u64;
        let ramp = per_word / 10;
        let pitch_shift = if cfg.slow { 0 } else { 40 };
        let mut samples = Vec::new();
        for word in text.split_whitespace() {
            let h = digest(&[word.as_bytes(), cfg.language.as_bytes()]);
            let freq = 140 + pitch_shift + u16::from_le_bytes([h[0], h[1]]) as u64 % 220;
            for n in 0..per_word {
                let env = (n.min(per_word - 1 - n) as f64 / ramp as f64).min(1.0);
                samples.push((0.45 * env * triangle(n, freq, rate)) as f32);
            }
        }
        AudioBuffer::new(DEFAULT_SAMPLE_RATE, 1, samples)
    }
}

/// Stereo chord beds for the built-in moods.
#[derive(Debug, Clone, Copy, Default)]
pub struct MockMusic;

impl MusicSource for MockMusic {
    fn fetch(&self, mood: &str) -> Result<AudioBuffer> {
        let idx = MOCK_MOODS
            .iter()
            .position(|m| m.eq_ignore_ascii_case(mood.trim()))
            .ok_or_else(|| Error::UnknownMood(mood.to_string()))?;
        let rate = DEFAULT_SAMPLE_RATE as u64;
        let chord: [u64; 3] = [[110, 165, 220], [98, 147, 196], [104, 123, 156]][idx];
        let frames = MOCK_TRACK_SECONDS as u64 * rate;
        let mut samples = Vec::with_capacity(frames as usize * 2);
        for n in 0..frames {
            let left = chord.iter().map(|&f| triangle(n, f, rate)).sum::<f64>() / 3.0;
            let right = chord.iter().map(|&f| triangle(n, f + 1, rate)).sum::<f64>() / 3.0;
            samples.push((0.6 * left) as f32);
            samples.push((0.6 * right) as f32);
        }
        AudioBuffer::new(DEFAULT_SAMPLE_RATE, 2, samples)
    }
}

/// A generator that is always down.
#[derive(Debug, Clone, Copy, Default)]
pub struct Unavailable;

impl TextBackend for Unavailable {
    fn generate(&self, _: &str, _: &TextParams) -> Result<String> {
        Err(Error::generation("storyboard", None, "text backend unavailable"))
    }
}

impl ImageBackend for Unavailable {
    fn generate(&self, req: &ImageRequest) -> Result<FrameBuffer> {
        Err(Error::generation(
            "keyframe",
            req.scene.map(usize::from),
            "image backend unavailable",
        ))
    }
}

impl SpeechBackend for Unavailable {
    fn synthesize(&self, _: &str, _: &SpeechConfig) -> Result<AudioBuffer> {
        Err(Error::generation("voiceover", None, "speech backend unavailable"))
    }
}

impl MusicSource for Unavailable {
    fn fetch(&self, _: &str) -> Result<AudioBuffer> {
        Err(Error::generation("music", None, "music download failed: network unreachable"))
    }
}
