//! HTTP job service over the cineforge pipeline.
//!
//! Jobs are created with `POST /api/jobs` and run in the background, at most
//! `max_concurrent` at a time. Everything else is read-only:
//!
//! | route | response |
//! |---|---|
//! | `POST /api/jobs` | `202 {"id", "state"}` |
//! | `GET /api/jobs/{id}` | job snapshot |
//! | `GET /api/jobs/{id}/video` | `video/mp4` |
//! | `GET /api/jobs/{id}/frames/{n}` | `image/png`, `n` counted from 0 |
//! | `GET /api/jobs/{id}/storyboard` | canonical storyboard JSON |
//! | `POST /api/storyboard/parse` | dry-run parse `{"storyboard", "fallback"}` |

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::{Arc, RwLock};

use axum::body::Bytes;
use axum::extract::{DefaultBodyLimit, FromRequest, Multipart, Path as UrlPath, Request, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use cineforge::backends::{BackendCapabilities, BackendSet};
use cineforge::compositor::{frame_file_name, Encoder, FRAMES_DIR};
use cineforge::pipeline::{
    config_map_from_json, execute, validate_config, Fallback, Job, JobHandle, JobState, RunOptions, ValidationError,
};
use cineforge::storyboard::{parse_custom_storyboard, serialize_storyboard, CinematicVocabulary, FormatHint};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;
use tokio::sync::Semaphore;
use tracing::{info, warn};

/// Largest accepted request body (uploads included).
pub const MAX_BODY_BYTES: usize = 256 * 1024 * 1024;

const UPLOAD_FIELDS: [(&str, &str); 2] = [("voiceover", "voiceover_upload"), ("music", "music_upload")];

#[derive(Debug, Error)]
pub enum ApiError {
    #[error(transparent)]
    Validation(#[from] ValidationError),
    #[error("{0}")]
    BadRequest(String),
    #[error("job {0} not found")]
    UnknownJob(String),
    #[error("{0}")]
    NotFound(String),
    #[error("{0}")]
    NotReady(String),
    #[error("{0}")]
    Internal(String),
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = match &self {
            ApiError::Validation(_) | ApiError::BadRequest(_) => StatusCode::BAD_REQUEST,
            ApiError::UnknownJob(_) | ApiError::NotFound(_) => StatusCode::NOT_FOUND,
            ApiError::NotReady(_) => StatusCode::CONFLICT,
            ApiError::Internal(_) => StatusCode::INTERNAL_SERVER_ERROR,
        };
        let body = match &self {
            ApiError::Validation(v) => json!({ "error": self.to_string(), "issues": v.issues }),
            _ => json!({ "error": self.to_string() }),
        };
        (status, Json(body)).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

#[derive(Debug, Clone)]
pub struct ServerConfig {
    /// One subdirectory per job is created here.
    pub root: PathBuf,
    pub max_concurrent: usize,
    pub encoder: Encoder,
    pub backends: BackendSet,
    pub caps: BackendCapabilities,
}

impl ServerConfig {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self {
            root: root.into(),
            max_concurrent: 1,
            encoder: Encoder::from_env(),
            backends: BackendSet::mock(),
            caps: BackendCapabilities::host_only(),
        }
    }
}

struct Entry {
    handle: JobHandle,
    frames: usize,
    fps: u32,
}

#[derive(Clone)]
pub struct AppState {
    config: Arc<ServerConfig>,
    jobs: Arc<RwLock<HashMap<String, Arc<Entry>>>>,
    slots: Arc<Semaphore>,
}

impl AppState {
    pub fn new(config: ServerConfig) -> Self {
        let slots = Arc::new(Semaphore::new(config.max_concurrent.max(1)));
        Self {
            config: Arc::new(config),
            jobs: Arc::default(),
            slots,
        }
    }

    fn entry(&self, id: &str) -> ApiResult<Arc<Entry>> {
        self.jobs
            .read()
            .unwrap_or_else(|e| e.into_inner())
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::UnknownJob(id.to_string()))
    }
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/api/jobs", post(create_job))
        .route("/api/jobs/{id}", get(job_snapshot))
        .route("/api/jobs/{id}/video", get(job_video))
        .route("/api/jobs/{id}/frames/{n}", get(job_frame))
        .route("/api/jobs/{id}/storyboard", get(job_storyboard))
        .route("/api/storyboard/parse", post(parse_storyboard))
        .layer(DefaultBodyLimit::max(MAX_BODY_BYTES))
        .with_state(state)
}

pub async fn serve(addr: std::net::SocketAddr, state: AppState) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    info!(addr = %listener.local_addr()?, "listening");
    axum::serve(listener, router(state)).await
}

struct Upload {
    key: &'static str,
    file_name: String,
    data: Bytes,
}

/// Keeps the extension (it decides how the file is read) and nothing that
/// could escape the job directory.
fn safe_file_name(field: &str, original: Option<&str>) -> String {
    let ext = original
        .and_then(|n| Path::new(n).extension())
        .and_then(|e| e.to_str())
        .filter(|e| e.chars().all(|c| c.is_ascii_alphanumeric()))
        .map(|e| format!(".{}", e.to_ascii_lowercase()))
        .unwrap_or_default();
    format!("{field}{ext}")
}

fn json_config(value: &Value) -> ApiResult<std::collections::BTreeMap<String, String>> {
    let map = config_map_from_json(value)?;
    for (_, key) in UPLOAD_FIELDS {
        if map.contains_key(key) {
            return Err(ValidationError::single(key, "must be sent as a multipart file").into());
        }
    }
    Ok(map)
}

async fn read_multipart(mut form: Multipart) -> ApiResult<(std::collections::BTreeMap<String, String>, Vec<Upload>)> {
    let bad = |e: axum::extract::multipart::MultipartError| ApiError::BadRequest(format!("multipart: {e}"));
    let mut config = None;
    let mut storyboard = None;
    let mut uploads = Vec::new();
    while let Some(field) = form.next_field().await.map_err(bad)? {
        let name = field.name().unwrap_or_default().to_string();
        let file_name = field.file_name().map(String::from);
        let data = field.bytes().await.map_err(bad)?;
        match name.as_str() {
            "config" => {
                let value: Value = serde_json::from_slice(&data)
                    .map_err(|e| ApiError::BadRequest(format!("config is not valid JSON: {e}")))?;
                config = Some(json_config(&value)?);
            }
            "storyboard" => {
                let text = String::from_utf8(data.to_vec())
                    .map_err(|_| ValidationError::single("custom_storyboard", "must be UTF-8 text"))?;
                storyboard = Some(text);
            }
            other => match UPLOAD_FIELDS.iter().find(|(f, _)| *f == other) {
                Some((field, key)) => uploads.push(Upload {
                    key,
                    file_name: safe_file_name(field, file_name.as_deref()),
                    data,
                }),
                None => return Err(ApiError::BadRequest(format!("unexpected multipart field {other:?}"))),
            },
        }
    }
    let mut config = config.ok_or_else(|| ApiError::BadRequest("multipart request has no config part".into()))?;
    if let Some(text) = storyboard {
        config.insert("custom_storyboard".into(), text);
    }
    Ok((config, uploads))
}

fn is_multipart(headers: &HeaderMap) -> bool {
    headers
        .get(header::CONTENT_TYPE)
        .and_then(|v| v.to_str().ok())
        .is_some_and(|v| v.starts_with("multipart/form-data"))
}

async fn create_job(State(state): State<AppState>, request: Request) -> ApiResult<(StatusCode, Json<Value>)> {
    let (mut raw, uploads) = if is_multipart(request.headers()) {
        let form = Multipart::from_request(request, &())
            .await
            .map_err(|e| ApiError::BadRequest(e.body_text()))?;
        read_multipart(form).await?
    } else {
        let Json(value) = Json::<Value>::from_request(request, &())
            .await
            .map_err(|e| ApiError::BadRequest(e.body_text()))?;
        (json_config(&value)?, Vec::new())
    };

    let id = uuid::Uuid::new_v4().to_string();
    let dir = state.config.root.join(&id);
    // placeholders so validation sees the uploads; rewritten once saved
    for up in &uploads {
        raw.insert(up.key.into(), dir.join("uploads").join(&up.file_name).display().to_string());
    }
    let cfg = validate_config(&raw)?;

    let io = |e: std::io::Error| ApiError::Internal(format!("job directory: {e}"));
    tokio::fs::create_dir_all(dir.join("uploads")).await.map_err(io)?;
    for up in &uploads {
        tokio::fs::write(dir.join("uploads").join(&up.file_name), &up.data).await.map_err(io)?;
    }

    let handle = JobHandle::new(Job::new(&id, &dir));
    let entry = Arc::new(Entry {
        handle: handle.clone(),
        frames: cfg.target_frames(),
        fps: cfg.fps,
    });
    state
        .jobs
        .write()
        .unwrap_or_else(|e| e.into_inner())
        .insert(id.clone(), entry);

    let opts = RunOptions::new(&dir).with_encoder(state.config.encoder.clone());
    let (slots, config) = (state.slots.clone(), state.config.clone());
    let job_id = id.clone();
    tokio::spawn(async move {
        let Ok(_permit) = slots.acquire_owned().await else { return };
        info!(job = %job_id, "job started");
        let run = tokio::task::spawn_blocking(move || execute(&handle, &cfg, &config.backends, &config.caps, &opts));
        if let Err(e) = run.await {
            warn!(job = %job_id, error = %e, "job runner panicked");
        }
    });

    Ok((StatusCode::ACCEPTED, Json(json!({ "id": id, "state": JobState::Queued }))))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct JobSnapshot {
    pub id: String,
    pub state: JobState,
    pub progress: f64,
    pub fallbacks: Vec<Fallback>,
    pub error: Option<String>,
    pub frames: usize,
    pub fps: u32,
    pub seed_base: Option<u64>,
    pub has_video: bool,
}

fn snapshot(id: &str, entry: &Entry) -> (Job, JobSnapshot) {
    let job = entry.handle.snapshot();
    let has_video = job.artifacts.as_ref().is_some_and(|a| a.video_path.is_some());
    let view = JobSnapshot {
        id: id.to_string(),
        state: job.state,
        progress: job.progress,
        fallbacks: job.fallbacks.clone(),
        error: job.error.clone(),
        frames: entry.frames,
        fps: entry.fps,
        seed_base: job.seed_base,
        has_video,
    };
    (job, view)
}

async fn job_snapshot(State(state): State<AppState>, UrlPath(id): UrlPath<String>) -> ApiResult<Json<JobSnapshot>> {
    let entry = state.entry(&id)?;
    Ok(Json(snapshot(&id, &entry).1))
}

async fn read_file(path: &Path) -> ApiResult<Vec<u8>> {
    tokio::fs::read(path)
        .await
        .map_err(|e| ApiError::Internal(format!("{}: {e}", path.display())))
}

async fn job_video(State(state): State<AppState>, UrlPath(id): UrlPath<String>) -> ApiResult<Response> {
    let job = state.entry(&id)?.handle.snapshot();
    if job.state != JobState::Done {
        return Err(ApiError::NotReady(format!("job {id} is {}", job.state)));
    }
    let path = job
        .artifacts
        .and_then(|a| a.video_path)
        .ok_or_else(|| ApiError::NotFound(format!("job {id} finished without a video")))?;
    let bytes = read_file(&path).await?;
    Ok(([(header::CONTENT_TYPE, "video/mp4")], bytes).into_response())
}

async fn job_frame(
    State(state): State<AppState>,
    UrlPath((id, n)): UrlPath<(String, String)>,
) -> ApiResult<Response> {
    let entry = state.entry(&id)?;
    let job = entry.handle.snapshot();
    // frames are complete once the audio stage starts
    if !matches!(job.state, JobState::Audio | JobState::Compositing | JobState::Done) {
        return Err(ApiError::NotReady(format!("frames of job {id} are not ready ({})", job.state)));
    }
    let n: usize = n
        .parse()
        .map_err(|_| ApiError::BadRequest(format!("frame index {n:?} is not a number")))?;
    if n >= entry.frames {
        return Err(ApiError::NotFound(format!("frame {n} out of range 0..{}", entry.frames)));
    }
    let bytes = read_file(&job.workdir.join(FRAMES_DIR).join(frame_file_name(n + 1))).await?;
    Ok(([(header::CONTENT_TYPE, "image/png")], bytes).into_response())
}

async fn job_storyboard(State(state): State<AppState>, UrlPath(id): UrlPath<String>) -> ApiResult<Response> {
    let job = state.entry(&id)?.handle.snapshot();
    let sb = job
        .storyboard
        .ok_or_else(|| ApiError::NotReady(format!("job {id} has no storyboard yet ({})", job.state)))?;
    Ok(([(header::CONTENT_TYPE, "application/json")], serialize_storyboard(&sb)).into_response())
}

#[derive(Debug, Deserialize)]
pub struct ParseRequest {
    pub text: String,
    #[serde(default)]
    pub format: FormatHint,
    #[serde(default)]
    pub prompt: String,
}

async fn parse_storyboard(body: Bytes) -> ApiResult<Json<Value>> {
    let req: ParseRequest =
        serde_json::from_slice(&body).map_err(|e| ApiError::BadRequest(format!("invalid parse request: {e}")))?;
    let sb = parse_custom_storyboard(&req.text, req.format, &req.prompt, &CinematicVocabulary::default());
    let fallback = sb.is_fallback();
    let storyboard: Value = serde_json::from_str(&serialize_storyboard(&sb))
        .map_err(|e| ApiError::Internal(e.to_string()))?;
    Ok(Json(json!({ "storyboard": storyboard, "fallback": fallback })))
}
