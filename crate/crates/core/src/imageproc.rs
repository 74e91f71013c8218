//! RGB8 rasters and the cinematic post-processing pass.
//!
//! All arithmetic rounds half-up before clamping so results are bit-exact on
//! every platform.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A `width × height` RGB8 raster, row-major, three bytes per pixel.
#[derive(Clone, PartialEq, Eq)]
pub struct FrameBuffer {
    width: u32,
    height: u32,
    pixels: Vec<u8>,
}

impl std::fmt::Debug for FrameBuffer {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FrameBuffer")
            .field("width", &self.width)
            .field("height", &self.height)
            .finish_non_exhaustive()
    }
}

impl FrameBuffer {
    pub fn new(width: u32, height: u32, pixels: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::invalid(format!(
                "frame dimensions must be at least 1x1, got {width}x{height}"
            )));
        }
        let expected = width as usize * height as usize * 3;
        if pixels.len() != expected {
            return Err(Error::invalid(format!(
                "{width}x{height} frame needs {expected} bytes, got {}",
                pixels.len()
            )));
        }
        Ok(Self {
            width,
            height,
            pixels,
        })
    }

    /// Frame filled with one color. Panics on zero dimensions.
    pub fn filled(width: u32, height: u32, rgb: [u8; 3]) -> Self {
        assert!(width > 0 && height > 0, "frame dimensions must be non-zero");
        let pixels = rgb
            .iter()
            .copied()
            .cycle()
            .take(width as usize * height as usize * 3)
            .collect();
        Self {
            width,
            height,
            pixels,
        }
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn dimensions(&self) -> (u32, u32) {
        (self.width, self.height)
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.pixels
    }

    pub fn into_bytes(self) -> Vec<u8> {
        self.pixels
    }

    pub fn pixel(&self, x: u32, y: u32) -> [u8; 3] {
        let i = self.offset(x, y);
        [self.pixels[i], self.pixels[i + 1], self.pixels[i + 2]]
    }

    pub fn set_pixel(&mut self, x: u32, y: u32, rgb: [u8; 3]) {
        let i = self.offset(x, y);
        self.pixels[i..i + 3].copy_from_slice(&rgb);
    }

    fn offset(&self, x: u32, y: u32) -> usize {
        assert!(x < self.width && y < self.height, "pixel ({x},{y}) out of bounds");
        (y as usize * self.width as usize + x as usize) * 3
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Channel {
    R,
    G,
    B,
}

impl Channel {
    fn offset(self) -> usize {
        match self {
            Channel::R => 0,
            Channel::G => 1,
            Channel::B => 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PostProcessConfig {
    pub brightness_gain: f64,
    pub blue_gain: f64,
    pub sharpen_enabled: bool,
}

impl Default for PostProcessConfig {
    fn default() -> Self {
        Self {
            brightness_gain: 1.1,
            blue_gain: 1.05,
            sharpen_enabled: true,
        }
    }
}

impl PostProcessConfig {
    /// Gains of 1.0 and no sharpening.
    pub fn neutral() -> Self {
        Self {
            brightness_gain: 1.0,
            blue_gain: 1.0,
            sharpen_enabled: false,
        }
    }
}

/// Round half-up, then clamp to the u8 range.
#[inline]
pub(crate) fn quantize(x: f64) -> u8 {
    (x + 0.5).floor().clamp(0.0, 255.0) as u8
}

fn gain_table(gain: f64) -> [u8; 256] {
    let mut lut = [0u8; 256];
    for (v, out) in lut.iter_mut().enumerate() {
        *out = quantize(v as f64 * gain);
    }
    lut
}

fn check_gain(gain: f64) -> Result<()> {
    if gain.is_finite() && gain > 0.0 {
        Ok(())
    } else {
        Err(Error::invalid(format!("gain must be positive, got {gain}")))
    }
}

/// Scales every channel by `gain`.
pub fn apply_brightness(f: &FrameBuffer, gain: f64) -> Result<FrameBuffer> {
    check_gain(gain)?;
    let lut = gain_table(gain);
    let pixels = f.pixels.iter().map(|&v| lut[v as usize]).collect();
    Ok(FrameBuffer { pixels, ..*f })
}

/// Scales one channel by `gain`, leaving the other two untouched.
pub fn apply_channel_gain(f: &FrameBuffer, channel: Channel, gain: f64) -> Result<FrameBuffer> {
    check_gain(gain)?;
    let lut = gain_table(gain);
    let mut pixels = f.pixels.clone();
    for px in pixels.chunks_exact_mut(3) {
        let c = &mut px[channel.offset()];
        *c = lut[*c as usize];
    }
    Ok(FrameBuffer { pixels, ..*f })
}

/// 3×3 sharpen: centre weight 32, neighbours −2, divisor 16. Borders
/// replicate the edge pixel.
pub fn sharpen(f: &FrameBuffer) -> FrameBuffer {
    let (w, h) = (f.width as usize, f.height as usize);
    let src = &f.pixels;
    let mut out = vec![0u8; src.len()];
    let row_stride = w * 3;

    for y in 0..h {
        let rows = [y.saturating_sub(1), y, (y + 1).min(h - 1)];
        for x in 0..w {
            let cols = [x.saturating_sub(1), x, (x + 1).min(w - 1)];
            for c in 0..3 {
                let mut acc: i32 = 0;
                for &ry in &rows {
                    let base = ry * row_stride + c;
                    for &cx in &cols {
                        acc += src[base + cx * 3] as i32;
                    }
                }
                let centre = src[y * row_stride + x * 3 + c] as i32;
                // 32·centre − 2·(neighbours) = 34·centre − 2·(all nine taps)
                let sum = 34 * centre - 2 * acc;
                let v = (sum + 8).div_euclid(16);
                out[y * row_stride + x * 3 + c] = v.clamp(0, 255) as u8;
            }
        }
    }

    FrameBuffer {
        pixels: out,
        ..*f
    }
}

pub fn post_process_frame(f: &FrameBuffer, cfg: &PostProcessConfig) -> Result<FrameBuffer> {
    let bright = apply_brightness(f, cfg.brightness_gain)?;
    let blue = apply_channel_gain(&bright, Channel::B, cfg.blue_gain)?;
    Ok(if cfg.sharpen_enabled {
        sharpen(&blue)
    } else {
        blue
    })
}

/// Brightness, then blue gain, then sharpen, on every frame.
pub fn post_process_frames(
    frames: &[FrameBuffer],
    cfg: &PostProcessConfig,
) -> Result<Vec<FrameBuffer>> {
    if let Some(first) = frames.first() {
        let dims = first.dimensions();
        if let Some(odd) = frames.iter().find(|f| f.dimensions() != dims) {
            return Err(Error::invalid(format!(
                "post-processing needs uniform frames: {}x{} vs {}x{}",
                dims.0, dims.1, odd.width, odd.height
            )));
        }
    }
    frames.iter().map(|f| post_process_frame(f, cfg)).collect()
}

/// Bilinear resample using pixel-centre alignment, clamped at the borders.
pub fn resize(f: &FrameBuffer, w: u32, h: u32) -> Result<FrameBuffer> {
    if w == 0 || h == 0 {
        return Err(Error::invalid(format!("cannot resize to {w}x{h}")));
    }
    if f.dimensions() == (w, h) {
        return Ok(f.clone());
    }

    let sx = f.width as f64 / w as f64;
    let sy = f.height as f64 / h as f64;
    let max_x = (f.width - 1) as f64;
    let max_y = (f.height - 1) as f64;

    let taps = |dst: u32, scale: f64, max: f64| -> (usize, usize, f64) {
        let p = ((dst as f64 + 0.5) * scale - 0.5).clamp(0.0, max);
        let lo = p.floor();
        let hi = (lo + 1.0).min(max);
        (lo as usize, hi as usize, p - lo)
    };
    let xs: Vec<_> = (0..w).map(|x| taps(x, sx, max_x)).collect();

    let stride = f.width as usize * 3;
    let mut pixels = Vec::with_capacity(w as usize * h as usize * 3);
    for y in 0..h {
        let (y0, y1, wy) = taps(y, sy, max_y);
        let (r0, r1) = (&f.pixels[y0 * stride..], &f.pixels[y1 * stride..]);
        for &(x0, x1, wx) in &xs {
            for c in 0..3 {
                let top = r0[x0 * 3 + c] as f64 * (1.0 - wx) + r0[x1 * 3 + c] as f64 * wx;
                let bottom = r1[x0 * 3 + c] as f64 * (1.0 - wx) + r1[x1 * 3 + c] as f64 * wx;
                pixels.push(quantize(top * (1.0 - wy) + bottom * wy));
            }
        }
    }
    FrameBuffer::new(w, h, pixels)
}
