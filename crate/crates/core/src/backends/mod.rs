//! Generator interfaces and capability-based model selection.
//!
//! The engine never runs neural inference itself. Text, image and speech
//! generation go through the traits below; [`mock`] provides deterministic
//! stand-ins and [`http`] talks to an external inference server.

pub mod catalog;
pub mod http;
pub mod mock;

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

pub use catalog::{fetch_music, MoodCatalog, TrackRef};

use crate::audiolab::AudioBuffer;
use crate::error::{Error, Result};
use crate::imageproc::{resize, FrameBuffer};

pub const GIB: u64 = 1 << 30;
/// Accelerator memory the XL image tier needs, exclusive.
pub const XL_MIN_ACCEL_BYTES: u64 = 12 * GIB;
/// Accelerator memory text generation needs to leave the host, exclusive.
pub const TEXT_MIN_ACCEL_BYTES: u64 = 2 * GIB;

pub const DEFAULT_NEGATIVE_PROMPT: &str = "blurry, distorted, low quality";

pub const ENV_BACKEND: &str = "CINEFORGE_BACKEND";
pub const ENV_BACKEND_URL: &str = "CINEFORGE_BACKEND_URL";
pub const ENV_MUSIC_CATALOG: &str = "CINEFORGE_MUSIC_CATALOG";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct BackendCapabilities {
    pub accelerator_present: bool,
    pub accelerator_memory_bytes: u64,
    pub host_memory_bytes: u64,
}

impl BackendCapabilities {
    pub fn accelerator(memory_bytes: u64) -> Self {
        Self {
            accelerator_present: true,
            accelerator_memory_bytes: memory_bytes,
            host_memory_bytes: 0,
        }
    }

    pub fn host_only() -> Self {
        Self::default()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Device {
    Accelerator,
    Host,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Tier {
    Xl,
    Base,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImageModelTier {
    pub tier: Tier,
    pub device: Device,
}

pub fn select_image_tier(caps: &BackendCapabilities) -> ImageModelTier {
    match (caps.accelerator_present, caps.accelerator_memory_bytes) {
        (true, mem) if mem > XL_MIN_ACCEL_BYTES => ImageModelTier {
            tier: Tier::Xl,
            device: Device::Accelerator,
        },
        (true, _) => ImageModelTier {
            tier: Tier::Base,
            device: Device::Accelerator,
        },
        (false, _) => ImageModelTier {
            tier: Tier::Base,
            device: Device::Host,
        },
    }
}

pub fn select_text_device(caps: &BackendCapabilities) -> Device {
    if caps.accelerator_present && caps.accelerator_memory_bytes > TEXT_MIN_ACCEL_BYTES {
        Device::Accelerator
    } else {
        Device::Host
    }
}

/// Per-scene seed: `base + 100·i`, wrapping.
pub fn scene_seed(base: u64, scene_index_zero_based: usize) -> u64 {
    base.wrapping_add((scene_index_zero_based as u64).wrapping_mul(100))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub enum Resolution {
    #[serde(rename = "720x480")]
    R720x480,
    #[default]
    #[serde(rename = "768x512")]
    R768x512,
    #[serde(rename = "1024x768")]
    R1024x768,
}

impl Resolution {
    pub const ALL: [Resolution; 3] = [Self::R720x480, Self::R768x512, Self::R1024x768];

    pub fn dimensions(self) -> (u32, u32) {
        match self {
            Self::R720x480 => (720, 480),
            Self::R768x512 => (768, 512),
            Self::R1024x768 => (1024, 768),
        }
    }

    pub fn from_dimensions(w: u32, h: u32) -> Option<Self> {
        Self::ALL.into_iter().find(|r| r.dimensions() == (w, h))
    }
}

impl fmt::Display for Resolution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let (w, h) = self.dimensions();
        write!(f, "{w}x{h}")
    }
}

impl FromStr for Resolution {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|r| r.to_string() == s.trim())
            .ok_or_else(|| Error::invalid(format!("unsupported resolution {s:?}")))
    }
}

pub const ALLOWED_STEPS: [u32; 3] = [20, 30, 50];
pub const GUIDANCE_RANGE: (f64, f64) = (7.0, 8.5);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageRequest {
    pub visual_prompt: String,
    pub negative_prompt: String,
    pub width: u32,
    pub height: u32,
    pub steps: u32,
    pub guidance_scale: f64,
    pub seed: u64,
    /// 1-based scene number, for error context and the mock's fiducial mark.
    /// Not part of the wire request.
    #[serde(skip)]
    pub scene: Option<u8>,
}

impl ImageRequest {
    pub fn validate(&self) -> Result<()> {
        if self.visual_prompt.trim().is_empty() {
            return Err(Error::invalid("visual prompt must not be empty"));
        }
        if Resolution::from_dimensions(self.width, self.height).is_none() {
            return Err(Error::invalid(format!(
                "{}x{} is not a supported resolution",
                self.width, self.height
            )));
        }
        if !ALLOWED_STEPS.contains(&self.steps) {
            return Err(Error::invalid(format!(
                "steps must be one of {ALLOWED_STEPS:?}, got {}",
                self.steps
            )));
        }
        let (lo, hi) = GUIDANCE_RANGE;
        if !(lo..=hi).contains(&self.guidance_scale) {
            return Err(Error::invalid(format!(
                "guidance scale {} outside [{lo}, {hi}]",
                self.guidance_scale
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TextParams {
    pub max_new_tokens: u32,
    pub temperature: f64,
    pub top_p: f64,
}

impl Default for TextParams {
    fn default() -> Self {
        Self {
            max_new_tokens: 800,
            temperature: 0.8,
            top_p: 0.9,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpeechConfig {
    pub language: String,
    pub slow: bool,
}

impl Default for SpeechConfig {
    fn default() -> Self {
        Self {
            language: "en".into(),
            slow: false,
        }
    }
}

pub trait TextBackend: Send + Sync {
    fn generate(&self, instruction: &str, params: &TextParams) -> Result<String>;
}

pub trait ImageBackend: Send + Sync {
    fn generate(&self, req: &ImageRequest) -> Result<FrameBuffer>;
}

pub trait SpeechBackend: Send + Sync {
    fn synthesize(&self, text: &str, cfg: &SpeechConfig) -> Result<AudioBuffer>;
}

pub trait MusicSource: Send + Sync {
    /// Raw track for `mood`, before trimming and attenuation.
    fn fetch(&self, mood: &str) -> Result<AudioBuffer>;
}

fn as_generation(stage: &'static str, scene: Option<usize>, e: Error) -> Error {
    match e {
        Error::Generation { .. } | Error::InvalidInput(_) | Error::UnknownMood(_) => e,
        other => Error::generation(stage, scene, other),
    }
}

/// Validates the request, runs the backend and guarantees the requested
/// dimensions.
pub fn generate_scene_image(backend: &dyn ImageBackend, req: &ImageRequest) -> Result<FrameBuffer> {
    req.validate()?;
    let scene = req.scene.map(usize::from);
    let frame = backend
        .generate(req)
        .map_err(|e| as_generation("keyframe", scene, e))?;
    if frame.dimensions() == (req.width, req.height) {
        Ok(frame)
    } else {
        resize(&frame, req.width, req.height)
    }
}

pub fn generate_story_text(
    backend: &dyn TextBackend,
    instruction: &str,
    params: &TextParams,
) -> Result<String> {
    if instruction.trim().is_empty() {
        return Err(Error::invalid("instruction must not be empty"));
    }
    backend
        .generate(instruction, params)
        .map_err(|e| as_generation("storyboard", None, e))
}

pub fn synthesize_speech(
    backend: &dyn SpeechBackend,
    text: &str,
    cfg: &SpeechConfig,
) -> Result<AudioBuffer> {
    if text.trim().is_empty() {
        return Err(Error::invalid("narration text must not be empty"));
    }
    if cfg.language.trim().is_empty() {
        return Err(Error::invalid("speech language tag must not be empty"));
    }
    backend
        .synthesize(text, cfg)
        .map_err(|e| as_generation("voiceover", None, e))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    Mock,
    Http,
}

impl FromStr for BackendKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "mock" => Ok(Self::Mock),
            "http" => Ok(Self::Http),
            other => Err(Error::invalid(format!("unknown backend {other:?}, expected mock or http"))),
        }
    }
}

/// The four generators a job needs.
#[derive(Clone)]
pub struct BackendSet {
    pub text: Arc<dyn TextBackend>,
    pub image: Arc<dyn ImageBackend>,
    pub speech: Arc<dyn SpeechBackend>,
    pub music: Arc<dyn MusicSource>,
}

impl BackendSet {
    pub fn mock() -> Self {
        Self {
            text: Arc::new(mock::MockText),
            image: Arc::new(mock::MockImage),
            speech: Arc::new(mock::MockSpeech),
            music: Arc::new(mock::MockMusic),
        }
    }

    /// Every generator fails; used for fault injection.
    pub fn unavailable() -> Self {
        let down = Arc::new(mock::Unavailable);
        Self {
            text: down.clone(),
            image: down.clone(),
            speech: down.clone(),
            music: down,
        }
    }

    pub fn http(base_url: &str, catalog: MoodCatalog) -> Self {
        let client = http::HttpClient::new(base_url);
        Self {
            text: Arc::new(http::HttpText(client.clone())),
            image: Arc::new(http::HttpImage(client.clone())),
            speech: Arc::new(http::HttpSpeech(client)),
            music: Arc::new(catalog),
        }
    }

    pub fn from_kind(kind: BackendKind) -> Result<Self> {
        match kind {
            BackendKind::Mock => Ok(Self::mock()),
            BackendKind::Http => {
                let url = std::env::var(ENV_BACKEND_URL).map_err(|_| {
                    Error::invalid(format!("{ENV_BACKEND_URL} must be set for the http backend"))
                })?;
                let catalog = match std::env::var(ENV_MUSIC_CATALOG) {
                    Ok(path) => MoodCatalog::load(path.as_ref())?,
                    Err(_) => MoodCatalog::default(),
                };
                Ok(Self::http(&url, catalog))
            }
        }
    }

    /// Backend chosen by `CINEFORGE_BACKEND`; mock when unset.
    pub fn from_env() -> Result<Self> {
        let kind = match std::env::var(ENV_BACKEND) {
            Ok(v) => v.parse()?,
            Err(_) => BackendKind::Mock,
        };
        Self::from_kind(kind)
    }
}

impl fmt::Debug for BackendSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("BackendSet { .. }")
    }
}
