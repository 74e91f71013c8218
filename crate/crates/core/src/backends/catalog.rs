//! Mood → track mapping for background music.
//!
//! Catalog files are JSON maps of mood name to `{"path": ...}` or
//! `{"url": ...}`. Relative paths resolve against the catalog's directory.
//! Remote fetching is off unless explicitly enabled.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::MusicSource;
use crate::audiolab::{decode_wav, read_wav, AudioBuffer};
use crate::error::{Error, IoContext, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrackRef {
    Path(PathBuf),
    Url(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MoodCatalog {
    pub entries: BTreeMap<String, TrackRef>,
    pub base_dir: PathBuf,
    pub allow_remote: bool,
}

impl Default for MoodCatalog {
    /// `music/<mood>.wav` for the three stock moods, relative to the working
    /// directory.
    fn default() -> Self {
        let entries = ["cinematic", "epic", "suspense"]
            .into_iter()
            .map(|m| (m.to_string(), TrackRef::Path(format!("music/{m}.wav").into())))
            .collect();
        Self {
            entries,
            base_dir: PathBuf::from("."),
            allow_remote: false,
        }
    }
}

impl MoodCatalog {
    pub fn from_json(text: &str, base_dir: impl Into<PathBuf>) -> Result<Self> {
        let entries: BTreeMap<String, TrackRef> = serde_json::from_str(text)
            .map_err(|e| Error::invalid(format!("music catalog: {e}")))?;
        Ok(Self {
            entries: entries
                .into_iter()
                .map(|(k, v)| (k.to_lowercase(), v))
                .collect(),
            base_dir: base_dir.into(),
            allow_remote: false,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).at(path)?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::from_json(&text, base)
    }

    pub fn with_remote(mut self, allow: bool) -> Self {
        self.allow_remote = allow;
        self
    }

    pub fn resolve(&self, mood: &str) -> Result<&TrackRef> {
        self.entries
            .get(&mood.trim().to_lowercase())
            .ok_or_else(|| Error::UnknownMood(mood.to_string()))
    }
}

fn fetch_remote(url: &str) -> Result<AudioBuffer> {
    let agent: ureq::Agent = ureq::Agent::config_builder()
        .timeout_global(Some(Duration::from_secs(60)))
        .build()
        .into();
    let mut resp = agent
        .get(url)
        .call()
        .map_err(|e| Error::generation("music", None, format!("download {url}: {e}")))?;
    let bytes = resp
        .body_mut()
        .with_config()
        .limit(256 << 20)
        .read_to_vec()
        .map_err(|e| Error::generation("music", None, format!("download {url}: {e}")))?;
    decode_wav(&bytes)
}

/// Loads the track mapped to `mood`.
pub fn fetch_music(catalog: &MoodCatalog, mood: &str) -> Result<AudioBuffer> {
    match catalog.resolve(mood)? {
        TrackRef::Path(p) => {
            let path = if p.is_absolute() {
                p.clone()
            } else {
                catalog.base_dir.join(p)
            };
            read_wav(&path).map_err(|e| Error::generation("music", None, e))
        }
        TrackRef::Url(url) if catalog.allow_remote => fetch_remote(url),
        TrackRef::Url(url) => Err(Error::generation(
            "music",
            None,
            format!("remote track {url} skipped: remote fetching is disabled"),
        )),
    }
}

impl MusicSource for MoodCatalog {
    fn fetch(&self, mood: &str) -> Result<AudioBuffer> {
        fetch_music(self, mood)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::audiolab::write_wav;

    fn fixture_dir() -> tempfile::TempDir {
        let dir = tempfile::tempdir().unwrap();
        std::fs::create_dir_all(dir.path().join("music")).unwrap();
        let tone = AudioBuffer::new(8000, 1, (0..800).map(|i| (i % 50) as f32 / 100.0).collect()).unwrap();
        write_wav(&tone, &dir.path().join("music/cinematic.wav")).unwrap();
        std::fs::write(
            dir.path().join("catalog.json"),
            r#"{"cinematic": {"path": "music/cinematic.wav"},
                "epic": {"path": "music/missing.wav"},
                "Suspense": {"url": "http://127.0.0.1:9/suspense.wav"}}"#,
        )
        .unwrap();
        dir
    }

    #[test]
    fn local_track_loads() {
        let dir = fixture_dir();
        let catalog = MoodCatalog::load(&dir.path().join("catalog.json")).unwrap();
        let buf = fetch_music(&catalog, "cinematic").unwrap();
        assert_eq!((buf.sample_rate(), buf.frames()), (8000, 800));
        assert!((buf.samples()[10] - 0.1).abs() < 1e-4);
    }

    #[test]
    fn failures() {
        let dir = fixture_dir();
        let catalog = MoodCatalog::load(&dir.path().join("catalog.json")).unwrap();
        assert!(matches!(fetch_music(&catalog, "polka"), Err(Error::UnknownMood(_))));
        assert!(matches!(
            fetch_music(&catalog, "epic"),
            Err(Error::Generation { stage: "music", .. })
        ));
        // disabled by default, and unreachable when enabled
        assert!(fetch_music(&catalog, "suspense").unwrap_err().to_string().contains("disabled"));
        let remote = catalog.with_remote(true);
        assert!(matches!(
            fetch_music(&remote, "SUSPENSE"),
            Err(Error::Generation { stage: "music", .. })
        ));
    }

    #[test]
    fn catalog_schema() {
        assert!(MoodCatalog::from_json(r#"{"x": {"ftp": "y"}}"#, ".").is_err());
        let c = MoodCatalog::default();
        assert_eq!(c.resolve("Cinematic").unwrap(), &TrackRef::Path("music/cinematic.wav".into()));
    }
}
