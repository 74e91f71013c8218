//! Job orchestration: configuration validation, the staged render run with
//! per-stage fallbacks, progress reporting and the incident log.
//!
//! Stages run in order: storyboard, keyframes, interpolation (frames are
//! post-processed, blended and streamed to disk), audio, compositing. Only
//! unrecoverable I/O fails a job; every generator failure is substituted and
//! recorded.

use std::collections::BTreeMap;
use std::fmt;
use std::fs::OpenOptions;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::{Arc, RwLock};

use chrono::{SecondsFormat, Utc};
use serde::{Deserialize, Serialize};
use tracing::{info, warn};

use crate::audiolab::{
    build_music, build_voiceover, mix, prepare_voiceover, read_wav, silence, AudioBuffer, MixPlan, Outcome,
};
use crate::backends::{
    generate_scene_image, generate_story_text, scene_seed, select_image_tier, BackendCapabilities, BackendSet,
    ImageModelTier, ImageRequest, Resolution, SpeechConfig, TextParams, DEFAULT_NEGATIVE_PROMPT,
};
use crate::compositor::{
    blank_frame, encode_video, write_frames_with, Encoder, RenderArtifacts, AUDIO_FILE, FRAMES_DIR, LOG_FILE,
    VIDEO_FILE,
};
use crate::error::{Error, IoContext, Result};
use crate::imageproc::{post_process_frames, FrameBuffer, PostProcessConfig};
use crate::interpolate::{log_plan, FrameInterpolator, LinearBlend, Timeline, MAX_FPS, MIN_FPS};
use crate::storyboard::{
    build_generation_instruction, fallback_storyboard, parse_custom_storyboard, parse_generated_storyboard,
    serialize_storyboard, CinematicVocabulary, FormatHint, Storyboard,
};

pub const STORYBOARD_FILE: &str = "storyboard.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    #[default]
    Simple,
    Advanced,
}

impl FromStr for Mode {
    type Err = ();

    fn from_str(s: &str) -> std::result::Result<Self, ()> {
        match s.trim().to_ascii_lowercase().as_str() {
            "simple" => Ok(Self::Simple),
            "advanced" => Ok(Self::Advanced),
            _ => Err(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Quality {
    Medium,
    #[default]
    High,
    Ultra,
}

impl Quality {
    pub const ALL: [Quality; 3] = [Quality::Medium, Quality::High, Quality::Ultra];

    pub fn profile(self) -> QualityProfile {
        let (steps, guidance_scale) = match self {
            Quality::Medium => (20, 7.0),
            Quality::High => (30, 7.5),
            Quality::Ultra => (50, 8.5),
        };
        QualityProfile { steps, guidance_scale }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Quality::Medium => "medium",
            Quality::High => "high",
            Quality::Ultra => "ultra",
        }
    }
}

impl FromStr for Quality {
    type Err = ();

    fn from_str(s: &str) -> std::result::Result<Self, ()> {
        match s.trim().to_ascii_lowercase().as_str() {
            "medium" => Ok(Self::Medium),
            "high" => Ok(Self::High),
            "ultra" => Ok(Self::Ultra),
            _ => Err(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QualityProfile {
    pub steps: u32,
    pub guidance_scale: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RenderConfig {
    pub prompt: String,
    pub mode: Mode,
    pub resolution: Resolution,
    pub fps: u32,
    pub quality: Quality,
    pub mood: String,
    pub seed_base: Option<u64>,
    pub custom_storyboard: Option<String>,
    pub voiceover_upload: Option<PathBuf>,
    pub music_upload: Option<PathBuf>,
}

impl RenderConfig {
    /// Simple-mode defaults for `prompt`.
    pub fn new(prompt: impl Into<String>) -> Self {
        Self {
            prompt: prompt.into(),
            mode: Mode::Simple,
            resolution: Resolution::default(),
            fps: 24,
            quality: Quality::High,
            mood: "cinematic".into(),
            seed_base: None,
            custom_storyboard: None,
            voiceover_upload: None,
            music_upload: None,
        }
    }

    pub fn target_frames(&self) -> usize {
        crate::interpolate::target_frame_count(crate::interpolate::VIDEO_DURATION_S, self.fps)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FieldIssue {
    pub field: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, thiserror::Error)]
pub struct ValidationError {
    pub issues: Vec<FieldIssue>,
}

impl fmt::Display for ValidationError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("invalid configuration")?;
        for (i, issue) in self.issues.iter().enumerate() {
            let sep = if i == 0 { ": " } else { "; " };
            write!(f, "{sep}{}: {}", issue.field, issue.message)?;
        }
        Ok(())
    }
}

impl ValidationError {
    pub fn single(field: &str, message: impl Into<String>) -> Self {
        Self {
            issues: vec![FieldIssue {
                field: field.into(),
                message: message.into(),
            }],
        }
    }

    pub fn has_field(&self, field: &str) -> bool {
        self.issues.iter().any(|i| i.field == field)
    }
}

pub const CONFIG_KEYS: [&str; 10] = [
    "prompt",
    "mode",
    "resolution",
    "fps",
    "quality",
    "mood",
    "seed_base",
    "custom_storyboard",
    "voiceover_upload",
    "music_upload",
];

const ADVANCED_ONLY: [&str; 3] = ["custom_storyboard", "voiceover_upload", "music_upload"];

/// Parses and checks a flat key/value configuration. All problems are
/// reported together.
pub fn validate_config(raw: &BTreeMap<String, String>) -> std::result::Result<RenderConfig, ValidationError> {
    let mut issues = Vec::new();
    let mut issue = |field: &str, message: String| {
        issues.push(FieldIssue {
            field: field.into(),
            message,
        })
    };

    for key in raw.keys().filter(|k| !CONFIG_KEYS.contains(&k.as_str())) {
        issue(key, format!("unknown field; allowed: {}", CONFIG_KEYS.join(", ")));
    }

    let mut cfg = RenderConfig::new(String::new());
    match raw.get("prompt").map(|p| p.trim()) {
        Some(p) if !p.is_empty() => cfg.prompt = p.to_string(),
        _ => issue("prompt", "required and must not be blank".into()),
    }
    if let Some(v) = raw.get("mode") {
        match v.parse() {
            Ok(m) => cfg.mode = m,
            Err(()) => issue("mode", format!("{v:?} not allowed; allowed: simple, advanced")),
        }
    }
    if let Some(v) = raw.get("resolution") {
        match v.parse() {
            Ok(r) => cfg.resolution = r,
            Err(_) => issue("resolution", format!("{v:?} not allowed; allowed: 720x480, 768x512, 1024x768")),
        }
    }
    if let Some(v) = raw.get("fps") {
        match v.trim().parse::<u32>() {
            Ok(f) if (MIN_FPS..=MAX_FPS).contains(&f) => cfg.fps = f,
            _ => issue("fps", format!("{v:?} not allowed; allowed: integers {MIN_FPS}..={MAX_FPS}")),
        }
    }
    if let Some(v) = raw.get("quality") {
        match v.parse() {
            Ok(q) => cfg.quality = q,
            Err(()) => issue("quality", format!("{v:?} not allowed; allowed: medium, high, ultra")),
        }
    }
    if let Some(v) = raw.get("mood") {
        if v.trim().is_empty() {
            issue("mood", "must not be blank".into());
        } else {
            cfg.mood = v.trim().to_lowercase();
        }
    }
    if let Some(v) = raw.get("seed_base") {
        match v.trim().parse::<u64>() {
            Ok(s) => cfg.seed_base = Some(s),
            Err(_) => issue("seed_base", format!("{v:?} is not an unsigned 64-bit integer")),
        }
    }

    for key in ADVANCED_ONLY {
        let Some(v) = raw.get(key) else { continue };
        if cfg.mode == Mode::Simple {
            issue(key, "only allowed in advanced mode".into());
        } else if v.trim().is_empty() {
            issue(key, "must not be blank".into());
        }
    }
    if cfg.mode == Mode::Advanced {
        cfg.custom_storyboard = raw.get("custom_storyboard").cloned();
        cfg.voiceover_upload = raw.get("voiceover_upload").map(PathBuf::from);
        cfg.music_upload = raw.get("music_upload").map(PathBuf::from);
    }

    if issues.is_empty() {
        Ok(cfg)
    } else {
        Err(ValidationError { issues })
    }
}

/// Flattens a JSON object into the key/value form `validate_config` takes.
/// Nulls are dropped; strings, numbers and booleans are stringified.
pub fn config_map_from_json(
    value: &serde_json::Value,
) -> std::result::Result<BTreeMap<String, String>, ValidationError> {
    let obj = value
        .as_object()
        .ok_or_else(|| ValidationError::single("config", "must be a JSON object"))?;
    let mut map = BTreeMap::new();
    for (k, v) in obj {
        let s = match v {
            serde_json::Value::Null => continue,
            serde_json::Value::String(s) => s.clone(),
            serde_json::Value::Number(n) => n.to_string(),
            serde_json::Value::Bool(b) => b.to_string(),
            _ => return Err(ValidationError::single(k, "must be a string or number")),
        };
        map.insert(k.clone(), s);
    }
    Ok(map)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum JobState {
    Queued,
    Storyboard,
    Keyframes,
    Interpolating,
    Audio,
    Compositing,
    Done,
    Failed,
}

impl JobState {
    pub fn is_terminal(self) -> bool {
        matches!(self, JobState::Done | JobState::Failed)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            JobState::Queued => "queued",
            JobState::Storyboard => "storyboard",
            JobState::Keyframes => "keyframes",
            JobState::Interpolating => "interpolating",
            JobState::Audio => "audio",
            JobState::Compositing => "compositing",
            JobState::Done => "done",
            JobState::Failed => "failed",
        }
    }
}

impl fmt::Display for JobState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fallback {
    pub stage: String,
    pub reason: String,
    /// RFC 3339, UTC.
    pub timestamp: String,
}

impl Fallback {
    pub fn now(stage: impl Into<String>, reason: impl Into<String>) -> Self {
        Self {
            stage: stage.into(),
            reason: reason.into(),
            timestamp: Utc::now().to_rfc3339_opts(SecondsFormat::Millis, true),
        }
    }

    /// One incident-log line, without the newline.
    pub fn log_line(&self) -> String {
        let reason: String = self
            .reason
            .chars()
            .map(|c| if c.is_control() { ' ' } else { c })
            .collect();
        format!("{} {} {}", self.timestamp, self.stage, reason.trim())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Job {
    pub id: String,
    pub state: JobState,
    pub progress: f64,
    pub fallbacks: Vec<Fallback>,
    pub artifacts: Option<RenderArtifacts>,
    pub storyboard: Option<Storyboard>,
    pub seed_base: Option<u64>,
    pub image_tier: Option<ImageModelTier>,
    pub workdir: PathBuf,
    pub error: Option<String>,
}

impl Job {
    pub fn new(id: impl Into<String>, workdir: impl Into<PathBuf>) -> Self {
        Self {
            id: id.into(),
            state: JobState::Queued,
            progress: 0.0,
            fallbacks: Vec::new(),
            artifacts: None,
            storyboard: None,
            seed_base: None,
            image_tier: None,
            workdir: workdir.into(),
            error: None,
        }
    }

    pub fn log_path(&self) -> PathBuf {
        self.workdir.join(LOG_FILE)
    }
}

/// Shared view of a running job. The runner is the only writer; everyone
/// else reads snapshots.
#[derive(Debug, Clone)]
pub struct JobHandle(Arc<RwLock<Job>>);

impl JobHandle {
    pub fn new(job: Job) -> Self {
        Self(Arc::new(RwLock::new(job)))
    }

    pub fn snapshot(&self) -> Job {
        self.0.read().unwrap_or_else(|e| e.into_inner()).clone()
    }

    fn update<R>(&self, f: impl FnOnce(&mut Job) -> R) -> R {
        f(&mut self.0.write().unwrap_or_else(|e| e.into_inner()))
    }

    fn enter(&self, state: JobState, progress: f64) {
        info!(state = %state, "job stage");
        self.update(|j| {
            j.state = state;
            j.progress = j.progress.max(progress);
        });
    }

    fn advance(&self, progress: f64) {
        self.update(|j| j.progress = j.progress.max(progress.min(1.0)));
    }

    /// Records a fallback on the job and appends it to the incident log.
    fn record(&self, stage: impl Into<String>, reason: impl Into<String>) {
        let fb = Fallback::now(stage, reason);
        warn!(stage = %fb.stage, reason = %fb.reason, "fallback");
        let log = self.update(|j| {
            j.fallbacks.push(fb.clone());
            j.log_path()
        });
        append_incident(&log, &fb);
    }
}

/// Appends one record to the incident log. Best effort: failures are only
/// traced.
pub fn append_incident(path: &Path, fb: &Fallback) {
    let res = OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .and_then(|mut f| writeln!(f, "{}", fb.log_line()));
    if let Err(e) = res {
        warn!(path = %path.display(), error = %e, "could not write incident log");
    }
}

/// Writes every fallback of `job` to its incident log, replacing the file.
pub fn incident_log(job: &Job) -> Result<PathBuf> {
    let path = job.log_path();
    let body: String = job.fallbacks.iter().map(|f| f.log_line() + "\n").collect();
    std::fs::write(&path, body).at(&path)?;
    Ok(path)
}

/// Everything a run needs besides the config and backends.
#[derive(Clone)]
pub struct RunOptions {
    pub workdir: PathBuf,
    pub video_out: Option<PathBuf>,
    pub encoder: Encoder,
    pub vocabulary: CinematicVocabulary,
    pub post: PostProcessConfig,
    pub mix: MixPlan,
    pub speech: SpeechConfig,
    pub text: TextParams,
    pub interpolator: Arc<dyn FrameInterpolator>,
}

impl fmt::Debug for RunOptions {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("RunOptions")
            .field("workdir", &self.workdir)
            .field("video_out", &self.video_out)
            .field("encoder", &self.encoder)
            .finish_non_exhaustive()
    }
}

impl RunOptions {
    /// Defaults, with the encoder taken from the environment.
    pub fn new(workdir: impl Into<PathBuf>) -> Self {
        Self {
            workdir: workdir.into(),
            video_out: None,
            encoder: Encoder::from_env(),
            vocabulary: CinematicVocabulary::default(),
            post: PostProcessConfig::default(),
            mix: MixPlan::default(),
            speech: SpeechConfig::default(),
            text: TextParams::default(),
            interpolator: Arc::new(LinearBlend),
        }
    }

    pub fn with_encoder(mut self, encoder: Encoder) -> Self {
        self.encoder = encoder;
        self
    }

    fn video_path(&self) -> PathBuf {
        self.video_out.clone().unwrap_or_else(|| self.workdir.join(VIDEO_FILE))
    }
}

// Progress reached at the end of each stage.
const P_STORYBOARD: f64 = 0.05;
const P_KEYFRAMES: f64 = 0.25;
const P_FRAMES: f64 = 0.85;
const P_AUDIO: f64 = 0.92;

fn epoch_seconds() -> u64 {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

fn job_id() -> String {
    use std::sync::atomic::{AtomicU64, Ordering};
    static NEXT: AtomicU64 = AtomicU64::new(1);
    format!(
        "job-{}-{}-{}",
        Utc::now().format("%Y%m%dT%H%M%S"),
        std::process::id(),
        NEXT.fetch_add(1, Ordering::Relaxed)
    )
}

/// Runs a job to completion and returns its terminal state.
pub fn run_job(cfg: &RenderConfig, backends: &BackendSet, caps: &BackendCapabilities, opts: &RunOptions) -> Job {
    let handle = JobHandle::new(Job::new(job_id(), &opts.workdir));
    execute(&handle, cfg, backends, caps, opts);
    handle.snapshot()
}

/// Runs the job behind `handle`, updating it as stages progress. Always
/// leaves the job in a terminal state.
pub fn execute(handle: &JobHandle, cfg: &RenderConfig, backends: &BackendSet, caps: &BackendCapabilities, opts: &RunOptions) {
    match run_stages(handle, cfg, backends, caps, opts) {
        Ok(artifacts) => handle.update(|j| {
            j.artifacts = Some(artifacts);
            j.state = JobState::Done;
            j.progress = 1.0;
        }),
        Err(e) => {
            warn!(error = %e, "job failed");
            handle.update(|j| {
                j.state = JobState::Failed;
                j.error = Some(e.to_string());
            });
        }
    }
}

fn run_stages(
    handle: &JobHandle,
    cfg: &RenderConfig,
    backends: &BackendSet,
    caps: &BackendCapabilities,
    opts: &RunOptions,
) -> Result<RenderArtifacts> {
    let timeline = Timeline::new(cfg.fps)?;
    let workdir = &opts.workdir;
    std::fs::create_dir_all(workdir).at(workdir)?;
    let log_path = workdir.join(LOG_FILE);
    if log_path.exists() {
        std::fs::remove_file(&log_path).at(&log_path)?;
    }

    handle.enter(JobState::Storyboard, 0.0);
    let sb = storyboard_stage(handle, cfg, backends, opts)?;
    let sb_path = workdir.join(STORYBOARD_FILE);
    std::fs::write(&sb_path, serialize_storyboard(&sb)).at(&sb_path)?;
    handle.update(|j| j.storyboard = Some(sb.clone()));
    handle.advance(P_STORYBOARD);

    handle.enter(JobState::Keyframes, P_STORYBOARD);
    let keyframes = keyframe_stage(handle, cfg, &sb, backends, caps)?;
    let keyframes = post_process_frames(&keyframes, &opts.post)?;

    handle.enter(JobState::Interpolating, P_KEYFRAMES);
    let target = timeline.target_frames;
    log_plan(keyframes.len(), target, Some(cfg.fps));
    let frames_dir = workdir.join(FRAMES_DIR);
    let interp = opts.interpolator.as_ref();
    let seq = write_frames_with(
        target,
        &frames_dir,
        cfg.fps,
        |j| interp.frame_at(&keyframes, j, target),
        |done| handle.advance(P_KEYFRAMES + (P_FRAMES - P_KEYFRAMES) * done as f64 / target as f64),
    )?;
    drop(keyframes);

    handle.enter(JobState::Audio, P_FRAMES);
    let audio = audio_stage(handle, cfg, &sb, backends, opts);
    handle.advance(P_AUDIO);

    handle.enter(JobState::Compositing, P_AUDIO);
    let audio_path = workdir.join(AUDIO_FILE);
    let video_path = opts.video_path();
    match encode_video(&seq, &audio, &audio_path, &video_path, &opts.encoder, &log_path) {
        Ok(outcome) => {
            if let Some(reason) = outcome.degraded {
                handle.record("compositing", reason);
            }
            Ok(outcome.artifacts)
        }
        Err(e @ Error::Encode { .. }) => {
            handle.record("compositing", e.to_string());
            Ok(RenderArtifacts {
                video_path: None,
                frames: seq,
                audio_path,
                log_path,
            })
        }
        Err(e) => Err(e),
    }
}

fn storyboard_stage(handle: &JobHandle, cfg: &RenderConfig, backends: &BackendSet, opts: &RunOptions) -> Result<Storyboard> {
    let vocab = &opts.vocabulary;
    if let Some(text) = &cfg.custom_storyboard {
        let sb = parse_custom_storyboard(text, FormatHint::Auto, &cfg.prompt, vocab);
        if sb.is_fallback() {
            handle.record("storyboard", "custom storyboard malformed; rule-based storyboard used");
        }
        return Ok(sb);
    }
    let generated = build_generation_instruction(&cfg.prompt)
        .and_then(|instr| generate_story_text(backends.text.as_ref(), &instr, &opts.text));
    match generated {
        Ok(raw) => {
            let sb = parse_generated_storyboard(&raw, &cfg.prompt, vocab);
            if sb.is_fallback() {
                handle.record("storyboard", "generated text had too few scenes; rule-based storyboard used");
            }
            Ok(sb)
        }
        Err(e) => {
            handle.record("storyboard", format!("{e}; rule-based storyboard used"));
            fallback_storyboard(&cfg.prompt, vocab)
        }
    }
}

fn keyframe_stage(
    handle: &JobHandle,
    cfg: &RenderConfig,
    sb: &Storyboard,
    backends: &BackendSet,
    caps: &BackendCapabilities,
) -> Result<Vec<FrameBuffer>> {
    let base = cfg.seed_base.unwrap_or_else(epoch_seconds);
    let tier = select_image_tier(caps);
    handle.update(|j| {
        j.seed_base = Some(base);
        j.image_tier = Some(tier);
    });
    let (w, h) = cfg.resolution.dimensions();
    let profile = cfg.quality.profile();
    let requests: Vec<ImageRequest> = sb
        .scenes
        .iter()
        .enumerate()
        .map(|(i, scene)| ImageRequest {
            visual_prompt: scene.visual_prompt.clone(),
            negative_prompt: DEFAULT_NEGATIVE_PROMPT.into(),
            width: w,
            height: h,
            steps: profile.steps,
            guidance_scale: profile.guidance_scale,
            seed: scene_seed(base, i),
            scene: Some(scene.index),
        })
        .collect();
    info!(?tier, seed_base = base, steps = profile.steps, "generating keyframes");

    let image = backends.image.as_ref();
    let results: Vec<Result<FrameBuffer>> = std::thread::scope(|s| {
        let workers: Vec<_> = requests
            .iter()
            .map(|req| s.spawn(move || generate_scene_image(image, req)))
            .collect();
        workers
            .into_iter()
            .map(|w| {
                w.join()
                    .unwrap_or_else(|_| Err(Error::generation("keyframe", None, "image backend panicked")))
            })
            .collect()
    });

    let total = results.len();
    let mut frames = Vec::with_capacity(total);
    for (i, res) in results.into_iter().enumerate() {
        match res {
            Ok(f) => frames.push(f),
            Err(e) => {
                handle.record(format!("keyframe:{}", i + 1), format!("{e}; blank frame used"));
                frames.push(blank_frame(w, h));
            }
        }
        handle.advance(P_STORYBOARD + (P_KEYFRAMES - P_STORYBOARD) * (i + 1) as f64 / total as f64);
    }
    Ok(frames)
}

fn load_upload(path: &Path) -> Result<AudioBuffer> {
    let is_wav = path
        .extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| e.eq_ignore_ascii_case("wav"));
    if !is_wav {
        return Err(Error::invalid(format!(
            "{}: only WAV uploads are decoded",
            path.display()
        )));
    }
    read_wav(path)
}

fn silence_like(buf: &AudioBuffer) -> AudioBuffer {
    AudioBuffer::new(buf.sample_rate(), buf.channels(), vec![0.0; buf.samples().len()])
        .expect("shape copied from a valid buffer")
}

fn audio_stage(handle: &JobHandle, cfg: &RenderConfig, sb: &Storyboard, backends: &BackendSet, opts: &RunOptions) -> AudioBuffer {
    let voice: Outcome<AudioBuffer> = match &cfg.voiceover_upload {
        Some(path) => match load_upload(path).and_then(|b| prepare_voiceover(&b)) {
            Ok(b) => Outcome::clean(b),
            Err(e) => Outcome::degraded(crate::audiolab::silent_bed(), format!("voiceover upload: {e}")),
        },
        None => build_voiceover(sb, backends.speech.as_ref(), &opts.speech),
    };
    if let Some(reason) = &voice.fallback {
        handle.record("voiceover", format!("{reason}; silence used"));
    }

    let source = match &cfg.music_upload {
        Some(path) => load_upload(path).map_err(|e| format!("music upload: {e}")),
        None => backends.music.fetch(&cfg.mood).map_err(|e| e.to_string()),
    };
    let music = match source {
        Ok(src) => build_music(&src),
        Err(reason) => Outcome::degraded(crate::audiolab::silent_bed(), reason),
    };
    if let Some(reason) = &music.fallback {
        handle.record("music", format!("{reason}; silence used"));
    }

    match mix(&voice.value, &music.value, &opts.mix) {
        Ok(m) => m,
        Err(e) => {
            handle.record("mix", format!("{e}; music dropped"));
            let quiet = silence_like(&voice.value);
            mix(&voice.value, &quiet, &opts.mix).unwrap_or_else(|_| {
                silence(crate::audiolab::TARGET_DURATION_S, voice.value.sample_rate(), 1)
                    .expect("rate copied from a valid buffer")
            })
        }
    }
}
