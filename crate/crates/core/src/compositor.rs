//! Frame-sequence persistence and final muxing through an external encoder.
//!
//! Frames are written as `frame_0001.png`, `frame_0002.png`, ... (1-based,
//! four-digit zero padding). The encoder is an ffmpeg-compatible program run
//! from the frame directory with a fixed argument template. A missing
//! encoder is not an error: the frames and mixed WAV stay on disk and the
//! caller gets a degraded result.

use std::io::ErrorKind;
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};
use std::sync::LazyLock;

use rayon::prelude::*;
use regex::Regex;
use serde::{Deserialize, Serialize};
use tracing::{info, warn};

use crate::audiolab::{write_wav, AudioBuffer};
use crate::error::{Error, IoContext, Result};
use crate::imageproc::FrameBuffer;

pub const ENV_ENCODER: &str = "CINEFORGE_ENCODER";
pub const DEFAULT_ENCODER: &str = "ffmpeg";

pub const FRAMES_DIR: &str = "temp/frames";
pub const AUDIO_FILE: &str = "temp/audio.wav";
pub const VIDEO_FILE: &str = "outputs/final_video.mp4";
pub const LOG_FILE: &str = "error_log.txt";

/// Frames encoded per parallel batch when streaming.
const BATCH: usize = 48;

static FRAME_FILE: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"^frame_(\d{4,})\.png$").unwrap());

pub fn frame_file_name(number: usize) -> String {
    format!("frame_{number:04}.png")
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrameSequence {
    pub directory: PathBuf,
    pub count: usize,
    pub fps: u32,
    pub width: u32,
    pub height: u32,
}

impl FrameSequence {
    /// Path of the 1-based frame `number`.
    pub fn frame_path(&self, number: usize) -> PathBuf {
        self.directory.join(frame_file_name(number))
    }

    pub fn duration_s(&self) -> f64 {
        self.count as f64 / self.fps as f64
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RenderArtifacts {
    pub video_path: Option<PathBuf>,
    pub frames: FrameSequence,
    pub audio_path: PathBuf,
    pub log_path: PathBuf,
}

pub fn blank_frame(w: u32, h: u32) -> FrameBuffer {
    FrameBuffer::filled(w, h, [0, 0, 0])
}

pub fn encode_png(frame: &FrameBuffer) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    {
        let mut enc = png::Encoder::new(&mut out, frame.width(), frame.height());
        enc.set_color(png::ColorType::Rgb);
        enc.set_depth(png::BitDepth::Eight);
        enc.set_compression(png::Compression::Fast);
        enc.set_filter(png::Filter::Paeth);
        let mut writer = enc.write_header().map_err(|e| Error::Png(e.to_string()))?;
        writer
            .write_image_data(frame.as_bytes())
            .map_err(|e| Error::Png(e.to_string()))?;
        writer.finish().map_err(|e| Error::Png(e.to_string()))?;
    }
    Ok(out)
}

/// Decodes an 8-bit RGB or RGBA PNG; alpha is dropped.
pub fn decode_png(bytes: &[u8]) -> Result<FrameBuffer> {
    let decoder = png::Decoder::new(std::io::Cursor::new(bytes));
    let mut reader = decoder.read_info().map_err(|e| Error::Png(e.to_string()))?;
    let size = reader
        .output_buffer_size()
        .ok_or_else(|| Error::Png("image too large".into()))?;
    let mut buf = vec![0; size];
    let info = reader
        .next_frame(&mut buf)
        .map_err(|e| Error::Png(e.to_string()))?;
    buf.truncate(info.buffer_size());
    if info.bit_depth != png::BitDepth::Eight {
        return Err(Error::Png(format!("unsupported bit depth {:?}", info.bit_depth)));
    }
    let rgb = match info.color_type {
        png::ColorType::Rgb => buf,
        png::ColorType::Rgba => buf
            .chunks_exact(4)
            .flat_map(|p| [p[0], p[1], p[2]])
            .collect(),
        other => return Err(Error::Png(format!("unsupported color type {other:?}"))),
    };
    FrameBuffer::new(info.width, info.height, rgb)
}

pub fn read_png(path: &Path) -> Result<FrameBuffer> {
    decode_png(&std::fs::read(path).at(path)?)
}

fn remove_stale_frames(dir: &Path, count: usize) -> Result<()> {
    for entry in std::fs::read_dir(dir).at(dir)? {
        let entry = entry.at(dir)?;
        let name = entry.file_name();
        let Some(caps) = name.to_str().and_then(|n| FRAME_FILE.captures(n)) else {
            continue;
        };
        let stale = caps[1].parse::<usize>().map_or(true, |n| n == 0 || n > count);
        if stale {
            std::fs::remove_file(entry.path()).at(entry.path())?;
        }
    }
    Ok(())
}

/// Writes `count` frames produced on demand by `produce(j)` (0-based), in
/// parallel batches. `progress` is called with the number of frames written
/// after each batch.
pub fn write_frames_with<F, P>(
    count: usize,
    dir: &Path,
    fps: u32,
    produce: F,
    mut progress: P,
) -> Result<FrameSequence>
where
    F: Fn(usize) -> Result<FrameBuffer> + Sync,
    P: FnMut(usize),
{
    if count == 0 {
        return Err(Error::invalid("frame sequence must not be empty"));
    }
    if fps == 0 {
        return Err(Error::invalid("fps must be positive"));
    }
    std::fs::create_dir_all(dir).at(dir)?;

    let first = produce(0)?;
    let dims = first.dimensions();
    let write = |j: usize, frame: &FrameBuffer| -> Result<()> {
        if frame.dimensions() != dims {
            return Err(Error::invalid(format!(
                "frame {} is {}x{}, sequence is {}x{}",
                j + 1,
                frame.width(),
                frame.height(),
                dims.0,
                dims.1
            )));
        }
        let path = dir.join(frame_file_name(j + 1));
        std::fs::write(&path, encode_png(frame)?).at(path)
    };
    write(0, &first)?;
    drop(first);

    let mut done = 1;
    progress(done);
    while done < count {
        let end = (done + BATCH).min(count);
        (done..end)
            .into_par_iter()
            .try_for_each(|j| write(j, &produce(j)?))?;
        done = end;
        progress(done);
    }
    remove_stale_frames(dir, count)?;

    Ok(FrameSequence {
        directory: dir.to_path_buf(),
        count,
        fps,
        width: dims.0,
        height: dims.1,
    })
}

pub fn write_frame_sequence(frames: &[FrameBuffer], dir: &Path, fps: u32) -> Result<FrameSequence> {
    write_frames_with(frames.len(), dir, fps, |j| Ok(frames[j].clone()), |_| {})
}

/// The external encoder program.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Encoder {
    pub program: PathBuf,
}

impl Default for Encoder {
    fn default() -> Self {
        Self {
            program: DEFAULT_ENCODER.into(),
        }
    }
}

impl Encoder {
    pub fn new(program: impl Into<PathBuf>) -> Self {
        Self {
            program: program.into(),
        }
    }

    /// `CINEFORGE_ENCODER`, else `ffmpeg` from `PATH`.
    pub fn from_env() -> Self {
        std::env::var_os(ENV_ENCODER)
            .filter(|v| !v.is_empty())
            .map(Self::new)
            .unwrap_or_default()
    }
}

/// Argument template; the frame pattern is relative to the frame directory.
pub fn encoder_args(fps: u32, audio: &Path, out: &Path) -> Vec<String> {
    [
        "-framerate".to_string(),
        fps.to_string(),
        "-i".into(),
        "frame_%04d.png".into(),
        "-i".into(),
        audio.display().to_string(),
        "-c:v".into(),
        "libx264".into(),
        "-pix_fmt".into(),
        "yuv420p".into(),
        "-c:a".into(),
        "aac".into(),
        "-shortest".into(),
        "-movflags".into(),
        "+faststart".into(),
        out.display().to_string(),
    ]
    .into()
}

#[derive(Debug, Clone)]
pub struct EncodeOutcome {
    pub artifacts: RenderArtifacts,
    /// Set when no video was produced because the encoder is unavailable.
    pub degraded: Option<String>,
}

fn absolute(p: &Path) -> Result<PathBuf> {
    std::path::absolute(p).at(p)
}

fn tail(bytes: &[u8], lines: usize) -> String {
    let text = String::from_utf8_lossy(bytes);
    let all: Vec<&str> = text.lines().collect();
    all[all.len().saturating_sub(lines)..].join("\n")
}

/// Writes `audio` to `audio_path`, then muxes the sequence and audio into
/// `out` (H.264 + AAC). Source frames and audio are left in place whatever
/// the outcome.
pub fn encode_video(
    seq: &FrameSequence,
    audio: &AudioBuffer,
    audio_path: &Path,
    out: &Path,
    encoder: &Encoder,
    log_path: &Path,
) -> Result<EncodeOutcome> {
    let frame_s = 1.0 / seq.fps as f64;
    let drift = (audio.duration_s() - seq.duration_s()).abs();
    if drift > frame_s + 1e-9 {
        return Err(Error::invalid(format!(
            "audio runs {:.3} s but video runs {:.3} s",
            audio.duration_s(),
            seq.duration_s()
        )));
    }

    if let Some(parent) = audio_path.parent() {
        std::fs::create_dir_all(parent).at(parent)?;
    }
    write_wav(audio, audio_path)?;
    if let Some(parent) = out.parent() {
        std::fs::create_dir_all(parent).at(parent)?;
    }
    let (audio_abs, out_abs) = (absolute(audio_path)?, absolute(out)?);
    if out_abs.exists() {
        std::fs::remove_file(&out_abs).at(&out_abs)?;
    }

    let mut artifacts = RenderArtifacts {
        video_path: None,
        frames: seq.clone(),
        audio_path: audio_path.to_path_buf(),
        log_path: log_path.to_path_buf(),
    };

    let args = encoder_args(seq.fps, &audio_abs, &out_abs);
    info!(program = %encoder.program.display(), ?args, "encoding video");
    let output = Command::new(&encoder.program)
        .current_dir(&seq.directory)
        .args(&args)
        .stdin(Stdio::null())
        .output();

    match output {
        Err(e) if matches!(e.kind(), ErrorKind::NotFound | ErrorKind::PermissionDenied) => {
            let reason = format!("encoder {} unavailable ({e}); frames and audio kept", encoder.program.display());
            warn!(%reason, "skipping video encode");
            Ok(EncodeOutcome {
                artifacts,
                degraded: Some(reason),
            })
        }
        Err(e) => Err(Error::io(&encoder.program, e)),
        Ok(o) if !o.status.success() => Err(Error::Encode {
            status: o.status.to_string(),
            diagnostics: tail(&o.stderr, 20),
        }),
        Ok(_) => {
            artifacts.video_path = Some(out.to_path_buf());
            Ok(EncodeOutcome {
                artifacts,
                degraded: None,
            })
        }
    }
}
