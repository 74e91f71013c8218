//! Keyframe-to-timeline expansion by linear cross-blending.
//!
//! Output frame `j` of `N` sits at position `j·(K−1)/(N−1)` on the keyframe
//! axis. The position is tracked as an exact fraction so blended bytes do not
//! depend on floating-point representation of the weight.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use tracing::{debug, info};

use crate::error::{Error, Result};
use crate::imageproc::{quantize, FrameBuffer};

pub const VIDEO_DURATION_S: u32 = 60;
pub const MIN_FPS: u32 = 15;
pub const MAX_FPS: u32 = 30;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Timeline {
    pub fps: u32,
    pub duration_s: u32,
    pub target_frames: usize,
}

impl Timeline {
    pub fn new(fps: u32) -> Result<Self> {
        if !(MIN_FPS..=MAX_FPS).contains(&fps) {
            return Err(Error::invalid(format!(
                "fps must be within {MIN_FPS}..={MAX_FPS}, got {fps}"
            )));
        }
        Ok(Self {
            fps,
            duration_s: VIDEO_DURATION_S,
            target_frames: target_frame_count(VIDEO_DURATION_S, fps),
        })
    }
}

pub fn target_frame_count(duration_s: u32, fps: u32) -> usize {
    duration_s as usize * fps as usize
}

/// Where an output frame falls between two keyframes.
///
/// `weight == numerator / denominator`; the fraction is what blending uses.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlendPosition {
    pub left_index: usize,
    pub weight: f64,
    pub numerator: u64,
    pub denominator: u64,
}

impl BlendPosition {
    pub fn right_index(&self) -> usize {
        if self.numerator == 0 {
            self.left_index
        } else {
            self.left_index + 1
        }
    }
}

/// Position of output frame `j` among `keyframes` keyframes on an `target`-frame
/// timeline. The last output frame maps to the last keyframe with zero weight.
pub fn blend_position(j: usize, keyframes: usize, target: usize) -> BlendPosition {
    assert!(keyframes >= 2 && target >= 2 && j < target, "bad blend grid");
    let span = (keyframes - 1) as u64;
    let denominator = (target - 1) as u64;
    let scaled = j as u64 * span;
    let left_index = (scaled / denominator) as usize;
    let numerator = scaled % denominator;
    BlendPosition {
        left_index,
        weight: numerator as f64 / denominator as f64,
        numerator,
        denominator,
    }
}

fn check_same_dims(a: &FrameBuffer, b: &FrameBuffer) -> Result<()> {
    if a.dimensions() != b.dimensions() {
        return Err(Error::invalid(format!(
            "cannot blend {}x{} with {}x{}",
            a.width(),
            a.height(),
            b.width(),
            b.height()
        )));
    }
    Ok(())
}

/// `round((1 − w)·a + w·b)` per channel.
pub fn blend(frame1: &FrameBuffer, frame2: &FrameBuffer, weight: f64) -> Result<FrameBuffer> {
    check_same_dims(frame1, frame2)?;
    if !(0.0..=1.0).contains(&weight) {
        return Err(Error::invalid(format!("blend weight {weight} outside [0, 1]")));
    }
    let pixels = frame1
        .as_bytes()
        .iter()
        .zip(frame2.as_bytes())
        .map(|(&a, &b)| quantize((1.0 - weight) * a as f64 + weight * b as f64))
        .collect();
    FrameBuffer::new(frame1.width(), frame1.height(), pixels)
}

/// Blend with weight `numerator / denominator`, rounding the exact rational
/// result half-up.
pub fn blend_exact(
    frame1: &FrameBuffer,
    frame2: &FrameBuffer,
    numerator: u64,
    denominator: u64,
) -> Result<FrameBuffer> {
    check_same_dims(frame1, frame2)?;
    if denominator == 0 || numerator > denominator {
        return Err(Error::invalid(format!(
            "blend weight {numerator}/{denominator} outside [0, 1]"
        )));
    }
    if numerator == 0 {
        return Ok(frame1.clone());
    }
    if numerator == denominator {
        return Ok(frame2.clone());
    }

    // a + round(num·(b − a)/den) depends only on d = b − a.
    let (num, den) = (numerator as i128, denominator as i128);
    let offsets: Vec<i16> = (-255i128..=255)
        .map(|d| (2 * num * d + den).div_euclid(2 * den) as i16)
        .collect();
    let pixels = frame1
        .as_bytes()
        .iter()
        .zip(frame2.as_bytes())
        .map(|(&a, &b)| {
            let d = b as i16 - a as i16;
            (a as i16 + offsets[(d + 255) as usize]) as u8
        })
        .collect();
    FrameBuffer::new(frame1.width(), frame1.height(), pixels)
}

pub(crate) fn check_keyframes(keyframes: &[FrameBuffer], target: usize) -> Result<()> {
    if keyframes.len() < 2 {
        return Err(Error::invalid(format!(
            "interpolation needs at least 2 keyframes, got {}",
            keyframes.len()
        )));
    }
    if target < keyframes.len() {
        return Err(Error::invalid(format!(
            "target frame count {target} is below keyframe count {}",
            keyframes.len()
        )));
    }
    let dims = keyframes[0].dimensions();
    if keyframes.iter().any(|k| k.dimensions() != dims) {
        return Err(Error::invalid("keyframes have mixed dimensions"));
    }
    Ok(())
}

/// Strategy for filling the timeline between keyframes.
///
/// Implementations must compute each output frame independently so frames can
/// be produced in parallel or streamed straight to disk.
pub trait FrameInterpolator: Send + Sync {
    fn frame_at(&self, keyframes: &[FrameBuffer], j: usize, target: usize) -> Result<FrameBuffer>;

    fn interpolate(&self, keyframes: &[FrameBuffer], target: usize) -> Result<Vec<FrameBuffer>> {
        check_keyframes(keyframes, target)?;
        (0..target)
            .into_par_iter()
            .map(|j| self.frame_at(keyframes, j, target))
            .collect()
    }
}

/// Per-pixel linear cross-fade between neighbouring keyframes.
#[derive(Debug, Clone, Copy, Default)]
pub struct LinearBlend;

impl FrameInterpolator for LinearBlend {
    fn frame_at(&self, keyframes: &[FrameBuffer], j: usize, target: usize) -> Result<FrameBuffer> {
        check_keyframes(keyframes, target)?;
        if j >= target {
            return Err(Error::invalid(format!("frame {j} beyond timeline of {target}")));
        }
        let pos = blend_position(j, keyframes.len(), target);
        let left = &keyframes[pos.left_index];
        if pos.numerator == 0 {
            return Ok(left.clone());
        }
        blend_exact(
            left,
            &keyframes[pos.left_index + 1],
            pos.numerator,
            pos.denominator,
        )
    }
}

/// Frames contributed by each keyframe segment (indexed by left keyframe).
pub fn segment_counts(keyframes: usize, target: usize) -> Vec<usize> {
    let mut counts = vec![0; keyframes];
    for j in 0..target {
        counts[blend_position(j, keyframes, target).left_index] += 1;
    }
    counts
}

pub(crate) fn log_plan(keyframes: usize, target: usize, fps: Option<u32>) {
    info!(event = "interpolate", keyframes, target, fps, "interpolation started");
    debug!(segments = ?segment_counts(keyframes, target), "frames per segment");
}

/// Linear interpolation of `keyframes` out to `target` frames.
pub fn interpolate_frames(keyframes: &[FrameBuffer], target: usize) -> Result<Vec<FrameBuffer>> {
    check_keyframes(keyframes, target)?;
    log_plan(keyframes.len(), target, None);
    let frames = LinearBlend.interpolate(keyframes, target)?;
    info!(event = "interpolate", frames = frames.len(), "interpolation finished");
    Ok(frames)
}
