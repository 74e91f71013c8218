use std::collections::BTreeMap;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use cineforge::backends::{BackendCapabilities, BackendKind, BackendSet};
use cineforge::metrics::evaluate;
use cineforge::pipeline::{execute, validate_config, Job, JobHandle, JobState, RunOptions};
use cineforge::storyboard::{parse_custom_storyboard, serialize_storyboard, CinematicVocabulary, FormatHint};
use cineforge::Error;
use cineforge_server::{AppState, ServerConfig};
use serde_json::json;

const EXIT_INVALID: u8 = 2;
const EXIT_IO: u8 = 3;

#[derive(Parser)]
#[command(name = "cineforge", version, about = "Turn a prompt into a one-minute video")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Backend {
    Mock,
    Http,
}

impl From<Backend> for BackendKind {
    fn from(b: Backend) -> Self {
        match b {
            Backend::Mock => BackendKind::Mock,
            Backend::Http => BackendKind::Http,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Auto,
    Plain,
    Json,
}

impl From<Format> for FormatHint {
    fn from(f: Format) -> Self {
        match f {
            Format::Auto => FormatHint::Auto,
            Format::Plain => FormatHint::Plain,
            Format::Json => FormatHint::Json,
        }
    }
}

#[derive(Subcommand)]
#[allow(clippy::large_enum_variant)]
enum Command {
    /// Render a video from a prompt.
    Render {
        prompt: String,
        #[arg(long)]
        mode: Option<String>,
        #[arg(long)]
        resolution: Option<String>,
        #[arg(long)]
        fps: Option<String>,
        #[arg(long)]
        quality: Option<String>,
        #[arg(long)]
        mood: Option<String>,
        #[arg(long)]
        seed: Option<String>,
        /// Custom storyboard file, plain text or JSON (advanced mode).
        #[arg(long, value_name = "FILE")]
        storyboard: Option<PathBuf>,
        /// Narration WAV used instead of synthesized speech (advanced mode).
        #[arg(long, value_name = "FILE")]
        voiceover: Option<PathBuf>,
        /// Background music WAV (advanced mode).
        #[arg(long, value_name = "FILE")]
        music: Option<PathBuf>,
        /// Defaults to $CINEFORGE_BACKEND, then mock.
        #[arg(long, value_enum)]
        backend: Option<Backend>,
        /// Video path; defaults to outputs/final_video.mp4 under the workdir.
        #[arg(long, value_name = "PATH")]
        out: Option<PathBuf>,
        #[arg(long, value_name = "DIR", default_value = ".")]
        workdir: PathBuf,
    },
    /// Parse a storyboard file and print its canonical JSON.
    ParseStoryboard {
        file: PathBuf,
        #[arg(long, default_value = "")]
        prompt: String,
        #[arg(long, value_enum, default_value = "auto")]
        format: Format,
    },
    /// Score generated frames and narration against references.
    Eval {
        #[arg(long = "ref", value_name = "DIR")]
        reference: PathBuf,
        #[arg(long = "gen", value_name = "DIR")]
        generated: PathBuf,
        /// Tagged storyboard corpus for parsing accuracy.
        #[arg(long, value_name = "DIR")]
        corpus: Option<PathBuf>,
    },
    /// Run the HTTP job service.
    Serve {
        #[arg(long, default_value = "127.0.0.1:8080")]
        addr: SocketAddr,
        #[arg(long, value_name = "DIR", default_value = "jobs")]
        jobs_dir: PathBuf,
        #[arg(long, default_value_t = 1)]
        max_jobs: usize,
        #[arg(long, value_enum)]
        backend: Option<Backend>,
    },
}

struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Validation(_) | Error::InvalidInput(_) | Error::UnknownMood(_) => EXIT_INVALID,
            _ => EXIT_IO,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

fn backends(choice: Option<Backend>) -> Result<BackendSet, Failure> {
    Ok(match choice {
        Some(b) => BackendSet::from_kind(b.into())?,
        None => BackendSet::from_env()?,
    })
}

fn read_text(path: &PathBuf) -> Result<String, Failure> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e).into())
}

fn print_json(value: &serde_json::Value) {
    println!("{}", serde_json::to_string_pretty(value).expect("json"));
}

fn report(job: &Job) -> serde_json::Value {
    let artifacts = job.artifacts.as_ref();
    json!({
        "id": job.id,
        "state": job.state,
        "fallbacks": job.fallbacks,
        "error": job.error,
        "seed_base": job.seed_base,
        "video": artifacts.and_then(|a| a.video_path.as_ref()),
        "frames": artifacts.map(|a| &a.frames.directory),
        "audio": artifacts.map(|a| &a.audio_path),
    })
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Render {
            prompt,
            mode,
            resolution,
            fps,
            quality,
            mood,
            seed,
            storyboard,
            voiceover,
            music,
            backend,
            out,
            workdir,
        } => {
            let mut raw = BTreeMap::from([("prompt".to_string(), prompt)]);
            let flags = [
                ("mode", mode),
                ("resolution", resolution),
                ("fps", fps),
                ("quality", quality),
                ("mood", mood),
                ("seed_base", seed),
                ("custom_storyboard", storyboard.as_ref().map(read_text).transpose()?),
                ("voiceover_upload", voiceover.map(|p| p.display().to_string())),
                ("music_upload", music.map(|p| p.display().to_string())),
            ];
            raw.extend(flags.into_iter().filter_map(|(k, v)| Some((k.to_string(), v?))));
            let cfg = validate_config(&raw).map_err(Error::from)?;
            let backends = backends(backend)?;

            let mut opts = RunOptions::new(&workdir);
            opts.video_out = out;
            let handle = JobHandle::new(Job::new(format!("cli-{}", std::process::id()), &workdir));
            execute(&handle, &cfg, &backends, &BackendCapabilities::host_only(), &opts);
            let job = handle.snapshot();
            print_json(&report(&job));
            if job.state == JobState::Failed {
                return Err(Failure {
                    code: EXIT_IO,
                    message: job.error.unwrap_or_default(),
                });
            }
        }
        Command::ParseStoryboard { file, prompt, format } => {
            let text = read_text(&file)?;
            let sb = parse_custom_storyboard(&text, format.into(), &prompt, &CinematicVocabulary::default());
            if sb.is_fallback() {
                eprintln!("warning: {} could not be parsed; fallback storyboard shown", file.display());
            }
            println!("{}", serialize_storyboard(&sb));
        }
        Command::Eval {
            reference,
            generated,
            corpus,
        } => {
            let report = evaluate(&reference, &generated, corpus.as_deref())?;
            print_json(&serde_json::to_value(report).expect("json"));
        }
        Command::Serve {
            addr,
            jobs_dir,
            max_jobs,
            backend,
        } => {
            let mut cfg = ServerConfig::new(jobs_dir);
            cfg.max_concurrent = max_jobs;
            cfg.backends = backends(backend)?;
            let runtime = tokio::runtime::Runtime::new().map_err(|e| Failure {
                code: EXIT_IO,
                message: e.to_string(),
            })?;
            runtime
                .block_on(cineforge_server::serve(addr, AppState::new(cfg)))
                .map_err(|e| Failure {
                    code: EXIT_IO,
                    message: format!("{addr}: {e}"),
                })?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_writer(std::io::stderr)
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "warn".into()),
        )
        .init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
