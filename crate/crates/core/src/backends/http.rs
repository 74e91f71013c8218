//! Clients for an external inference server.
//!
//! * `POST /v1/images`: JSON request, `CFIM` raster response.
//! * `POST /v1/speech`: `{text, language, slow}`, WAV response.
//! * `POST /v1/text`: `{instruction, max_new_tokens, temperature, top_p}`,
//!   `{"text": ...}` response.
//!
//! The `CFIM` raster is a 16-byte little-endian header (magic, width, height,
//! reserved) followed by `width·height·3` RGB8 bytes, row-major.

use std::time::Duration;

use serde_json::json;

use super::{ImageBackend, ImageRequest, SpeechBackend, SpeechConfig, TextBackend, TextParams};
use crate::audiolab::{decode_wav, AudioBuffer};
use crate::error::{Error, Result};
use crate::imageproc::FrameBuffer;

pub const CFIM_MAGIC: &[u8; 4] = b"CFIM";
const CFIM_HEADER_LEN: usize = 16;
const MAX_RESPONSE_BYTES: u64 = 256 << 20;

pub fn encode_cfim(frame: &FrameBuffer) -> Vec<u8> {
    let mut out = Vec::with_capacity(CFIM_HEADER_LEN + frame.as_bytes().len());
    out.extend_from_slice(CFIM_MAGIC);
    out.extend_from_slice(&frame.width().to_le_bytes());
    out.extend_from_slice(&frame.height().to_le_bytes());
    out.extend_from_slice(&0u32.to_le_bytes());
    out.extend_from_slice(frame.as_bytes());
    out
}

pub fn decode_cfim(bytes: &[u8]) -> Result<FrameBuffer> {
    if bytes.len() < CFIM_HEADER_LEN || &bytes[..4] != CFIM_MAGIC {
        return Err(Error::invalid("response is not a CFIM raster"));
    }
    let word = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().unwrap());
    let (w, h) = (word(4), word(8));
    let body = &bytes[CFIM_HEADER_LEN..];
    let expected = w as u64 * h as u64 * 3;
    if body.len() as u64 != expected {
        return Err(Error::invalid(format!(
            "CFIM {w}x{h} needs {expected} pixel bytes, got {}",
            body.len()
        )));
    }
    FrameBuffer::new(w, h, body.to_vec())
}

#[derive(Clone)]
pub struct HttpClient {
    base_url: String,
    agent: ureq::Agent,
}

impl std::fmt::Debug for HttpClient {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("HttpClient").field("base_url", &self.base_url).finish()
    }
}

impl HttpClient {
    pub fn new(base_url: &str) -> Self {
        Self::with_timeout(base_url, Duration::from_secs(600))
    }

    pub fn with_timeout(base_url: &str, timeout: Duration) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .build()
            .into();
        Self {
            base_url: base_url.trim_end_matches('/').to_string(),
            agent,
        }
    }

    fn post(&self, stage: &'static str, scene: Option<usize>, path: &str, body: serde_json::Value) -> Result<Vec<u8>> {
        let url = format!("{}{path}", self.base_url);
        let fail = |e: ureq::Error| Error::generation(stage, scene, format!("POST {url}: {e}"));
        let mut resp = self
            .agent
            .post(&url)
            .header("content-type", "application/json")
            .send(body.to_string())
            .map_err(fail)?;
        resp.body_mut()
            .with_config()
            .limit(MAX_RESPONSE_BYTES)
            .read_to_vec()
            .map_err(fail)
    }
}

#[derive(Debug, Clone)]
pub struct HttpImage(pub HttpClient);

impl ImageBackend for HttpImage {
    fn generate(&self, req: &ImageRequest) -> Result<FrameBuffer> {
        let scene = req.scene.map(usize::from);
        let body = json!({
            "prompt": req.visual_prompt,
            "negative_prompt": req.negative_prompt,
            "width": req.width,
            "height": req.height,
            "steps": req.steps,
            "guidance_scale": req.guidance_scale,
            "seed": req.seed,
        });
        let bytes = self.0.post("keyframe", scene, "/v1/images", body)?;
        decode_cfim(&bytes).map_err(|e| Error::generation("keyframe", scene, e))
    }
}

#[derive(Debug, Clone)]
pub struct HttpSpeech(pub HttpClient);

impl SpeechBackend for HttpSpeech {
    fn synthesize(&self, text: &str, cfg: &SpeechConfig) -> Result<AudioBuffer> {
        let body = json!({ "text": text, "language": cfg.language, "slow": cfg.slow });
        let bytes = self.0.post("voiceover", None, "/v1/speech", body)?;
        decode_wav(&bytes).map_err(|e| Error::generation("voiceover", None, e))
    }
}

#[derive(Debug, Clone)]
pub struct HttpText(pub HttpClient);

impl TextBackend for HttpText {
    fn generate(&self, instruction: &str, params: &TextParams) -> Result<String> {
        let body = json!({
            "instruction": instruction,
            "max_new_tokens": params.max_new_tokens,
            "temperature": params.temperature,
            "top_p": params.top_p,
        });
        let bytes = self.0.post("storyboard", None, "/v1/text", body)?;
        let value: serde_json::Value = serde_json::from_slice(&bytes)
            .map_err(|e| Error::generation("storyboard", None, format!("bad text response: {e}")))?;
        value["text"]
            .as_str()
            .map(String::from)
            .ok_or_else(|| Error::generation("storyboard", None, "text response has no \"text\" field"))
    }
}
