//! Prompt-to-video rendering engine.
//!
//! A run turns a prompt (or a user storyboard) into a five-scene board,
//! synthesizes one keyframe per scene through a pluggable image backend,
//! post-processes and cross-fades the keyframes out to a 60 s timeline,
//! builds a narration and music bed, and muxes everything into an MP4 with
//! an external encoder. Every generator failure degrades to a fixed
//! substitute and is recorded in the job's incident log.

pub mod audiolab;
pub mod backends;
pub mod compositor;
pub mod error;
pub mod imageproc;
pub mod interpolate;
pub mod metrics;
pub mod pipeline;
pub mod storyboard;

pub use error::{Error, Result};
pub use imageproc::FrameBuffer;
pub use pipeline::{run_job, validate_config, Job, JobState, RenderConfig, RunOptions};
pub use storyboard::Storyboard;
