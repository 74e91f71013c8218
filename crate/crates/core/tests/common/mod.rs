#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::Command;

use cineforge::compositor::{Encoder, ENV_ENCODER};

/// A path that is guaranteed not to resolve to a program.
pub const MISSING_ENCODER: &str = "/nonexistent/cineforge-test/ffmpeg";

/// The reference encoder, if one is installed (`CINEFORGE_ENCODER`, else
/// `ffmpeg` on `PATH`).
pub fn reference_encoder() -> Option<Encoder> {
    let enc = Encoder::from_env();
    let candidate = match std::env::var_os(ENV_ENCODER) {
        Some(_) => enc.program.clone(),
        None => which(&enc.program)?,
    };
    let ok = Command::new(&candidate)
        .arg("-version")
        .output()
        .map(|o| o.status.success())
        .unwrap_or(false);
    ok.then(|| Encoder::new(candidate))
}

fn which(program: &Path) -> Option<PathBuf> {
    if program.components().count() > 1 {
        return program.is_file().then(|| program.to_path_buf());
    }
    std::env::split_paths(&std::env::var_os("PATH")?)
        .map(|d| d.join(program))
        .find(|p| p.is_file())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Probe {
    pub duration_s: f64,
    pub video_frames: usize,
    pub fps: f64,
    pub has_audio: bool,
    pub video_codec: String,
    pub audio_codec: String,
}

fn grab<'a>(text: &'a str, re: &str) -> Option<regex::Captures<'a>> {
    regex::Regex::new(re).unwrap().captures(text)
}

/// Reads container duration and stream info with `ffmpeg -i`, and counts
/// video frames by decoding to the null muxer.
pub fn probe(encoder: &Encoder, video: &Path) -> Probe {
    let info = Command::new(&encoder.program)
        .args(["-hide_banner", "-i"])
        .arg(video)
        .output()
        .expect("run encoder for probe");
    let info = String::from_utf8_lossy(&info.stderr).into_owned();
    let d = grab(&info, r"Duration: (\d+):(\d+):(\d+\.\d+)").expect("duration in probe output");
    let duration_s = d[1].parse::<f64>().unwrap() * 3600.0 + d[2].parse::<f64>().unwrap() * 60.0 + d[3].parse::<f64>().unwrap();
    let video_line = grab(&info, r"Stream #\S+.*Video: (\w+).*?([\d.]+) fps").expect("video stream");
    let audio_line = grab(&info, r"Stream #\S+.*Audio: (\w+)");

    let count = Command::new(&encoder.program)
        .args(["-hide_banner", "-i"])
        .arg(video)
        .args(["-map", "0:v:0", "-f", "null", "-"])
        .output()
        .expect("run encoder for frame count");
    let count = String::from_utf8_lossy(&count.stderr).into_owned();
    let frames: Vec<usize> = regex::Regex::new(r"frame=\s*(\d+)")
        .unwrap()
        .captures_iter(&count)
        .map(|c| c[1].parse().unwrap())
        .collect();

    Probe {
        duration_s,
        video_frames: *frames.last().expect("frame count in output"),
        fps: video_line[2].parse().unwrap(),
        has_audio: audio_line.is_some(),
        video_codec: video_line[1].to_string(),
        audio_codec: audio_line.map(|a| a[1].to_string()).unwrap_or_default(),
    }
}

pub fn corpus_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/storyboards")
}

pub fn frame_names(dir: &Path) -> Vec<String> {
    let mut names: Vec<String> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .filter(|n| n.starts_with("frame_"))
        .collect();
    names.sort();
    names
}
