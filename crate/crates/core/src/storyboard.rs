//! Five-scene storyboards: generation instructions, parsing of model output
//! and user-supplied boards, prompt enrichment and the rule-based fallback.
//!
//! Every constructor in this module returns a board of exactly five scenes.
//! Parsers never fail; malformed input degrades to [`fallback_storyboard`].

use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use tracing::warn;

use crate::error::{Error, Result};

pub const SCENE_COUNT: usize = 5;
pub const SCENE_DURATION_S: f64 = 12.0;

pub const HEADINGS: [&str; SCENE_COUNT] = [
    "OPENING SHOT",
    "RISING ACTION",
    "CLIMAX",
    "FALLING ACTION",
    "RESOLUTION",
];

/// Subject used when a fallback is needed but the caller's prompt is blank.
const PLACEHOLDER_SUBJECT: &str = "an untold story";

static SCENE_MARKER: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?i)\bscene\s*\d+\s*:").unwrap());
static LEADING_MARKER: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?i)^\s*scene\s*\d+\s*:\s*").unwrap());
static PROMPT_LINE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?i)^\s*(?:visual\s+)?prompt\s*:\s*(.*)$").unwrap());
static HEADING_LABEL: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"^([A-Z][A-Z ]{2,}[A-Z]):").unwrap());
static DASH_RULE: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?m)^[ \t]*---[ \t]*\r?$").unwrap());
static BLANK_RUN: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\r?\n(?:[ \t]*\r?\n)+").unwrap());

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    pub index: u8,
    pub heading: String,
    pub description: String,
    pub visual_prompt: String,
    pub duration_s: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Origin {
    Generated,
    Custom,
    Fallback,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Storyboard {
    pub source_prompt: String,
    pub origin: Origin,
    pub scenes: Vec<Scene>,
}

impl Storyboard {
    pub fn total_duration_s(&self) -> f64 {
        self.scenes.iter().map(|s| s.duration_s).sum()
    }

    pub fn is_fallback(&self) -> bool {
        self.origin == Origin::Fallback
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CinematicVocabulary {
    pub enrichment_keywords: Vec<String>,
    pub fallback_styles: [String; SCENE_COUNT],
}

impl Default for CinematicVocabulary {
    fn default() -> Self {
        Self {
            enrichment_keywords: [
                "cinematic shot",
                "dramatic lighting",
                "4K",
                "professional photography",
                "film grain",
            ]
            .map(String::from)
            .into(),
            fallback_styles: [
                "wide angle, golden hour lighting",
                "medium tracking shot, rising tension",
                "low angle close-up, high contrast shadows",
                "slow dolly out, soft dusk light",
                "aerial establishing shot, warm sunset glow",
            ]
            .map(String::from),
        }
    }
}

impl CinematicVocabulary {
    /// Text appended to prompts that carry no keyword: the first three
    /// keywords, comma-separated.
    fn enrichment_suffix(&self) -> String {
        self.enrichment_keywords
            .iter()
            .take(3)
            .map(String::as_str)
            .collect::<Vec<_>>()
            .join(", ")
    }
}

pub fn build_generation_instruction(prompt: &str) -> Result<String> {
    let prompt = prompt.trim();
    if prompt.is_empty() {
        return Err(Error::invalid("prompt must not be empty"));
    }
    Ok(format!(
        "Generate a 1-minute cinematic storyboard for '{prompt}', divided into 5 scenes (12s each)."
    ))
}

/// Appends cinematic keywords unless one is already present
/// (case-insensitive). Idempotent and never drops input characters.
pub fn enrich_visual_prompt(prompt: &str, vocab: &CinematicVocabulary) -> String {
    let lower = prompt.to_lowercase();
    let has_keyword = vocab
        .enrichment_keywords
        .iter()
        .any(|k| !k.is_empty() && lower.contains(&k.to_lowercase()));
    if has_keyword {
        return prompt.to_string();
    }
    let suffix = vocab.enrichment_suffix();
    if prompt.trim().is_empty() {
        format!("{prompt}{suffix}")
    } else {
        format!("{prompt}, {suffix}")
    }
}

fn scene(index: usize, heading: &str, description: String, visual: String) -> Scene {
    Scene {
        index: (index + 1) as u8,
        heading: heading.to_string(),
        description,
        visual_prompt: visual,
        duration_s: SCENE_DURATION_S,
    }
}

fn fallback_scene(index: usize, subject: &str, vocab: &CinematicVocabulary) -> Scene {
    let heading = HEADINGS[index];
    let visual = format!("{subject}, {}", vocab.fallback_styles[index]);
    scene(
        index,
        heading,
        format!("{heading}: {subject}"),
        enrich_visual_prompt(&visual, vocab),
    )
}

/// Rule-based board: one templated scene per narrative beat.
pub fn fallback_storyboard(prompt: &str, vocab: &CinematicVocabulary) -> Result<Storyboard> {
    let subject = prompt.trim();
    if subject.is_empty() {
        return Err(Error::invalid("prompt must not be empty"));
    }
    Ok(Storyboard {
        source_prompt: prompt.to_string(),
        origin: Origin::Fallback,
        scenes: (0..SCENE_COUNT)
            .map(|i| fallback_scene(i, subject, vocab))
            .collect(),
    })
}

/// Fallback that tolerates a blank prompt, for the total parsers.
fn fallback_total(prompt: &str, vocab: &CinematicVocabulary) -> Storyboard {
    let subject = if prompt.trim().is_empty() {
        PLACEHOLDER_SUBJECT
    } else {
        prompt
    };
    let mut sb = fallback_storyboard(subject, vocab).expect("subject is non-empty");
    sb.source_prompt = prompt.to_string();
    sb
}

/// Scene text before it is numbered and enriched.
#[derive(Debug)]
struct RawScene {
    heading: Option<String>,
    description: String,
    visual: Option<String>,
}

fn squash_whitespace(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Splits a model-written segment: an explicit `Prompt:` line wins; otherwise
/// the first sentence narrates and the remainder becomes the visual prompt.
fn split_generated_segment(segment: &str) -> Option<RawScene> {
    let (mut body, mut visual) = (Vec::new(), None);
    for line in segment.lines() {
        match PROMPT_LINE.captures(line) {
            Some(c) if visual.is_none() => visual = Some(squash_whitespace(&c[1])),
            _ => body.push(line),
        }
    }
    let body = squash_whitespace(&body.join(" "));
    if body.is_empty() {
        return None;
    }
    let (description, rest) = match body.find(". ") {
        Some(i) => (body[..=i].trim().to_string(), body[i + 1..].trim().to_string()),
        None => (body.clone(), String::new()),
    };
    let visual = visual
        .filter(|v| !v.is_empty())
        .or_else(|| (!rest.is_empty()).then(|| visual_base(&rest)));
    Some(RawScene {
        heading: heading_label(&description),
        description,
        visual,
    })
}

fn heading_label(description: &str) -> Option<String> {
    HEADING_LABEL
        .captures(description)
        .map(|c| c[1].trim().to_string())
}

fn visual_base(text: &str) -> String {
    text.trim().trim_end_matches('.').trim_end().to_string()
}

fn finish(
    raw: Vec<RawScene>,
    prompt: &str,
    origin: Origin,
    vocab: &CinematicVocabulary,
) -> Storyboard {
    let mut scenes: Vec<Scene> = raw
        .into_iter()
        .take(SCENE_COUNT)
        .enumerate()
        .map(|(i, r)| {
            let heading = r.heading.unwrap_or_else(|| HEADINGS[i].to_string());
            let base = r.visual.unwrap_or_else(|| visual_base(&r.description));
            let base = if base.is_empty() {
                visual_base(&r.description)
            } else {
                base
            };
            scene(i, &heading, r.description, enrich_visual_prompt(&base, vocab))
        })
        .collect();

    // Short boards: templated beats that keep the last scene's look.
    if let Some(last) = scenes.last().cloned() {
        let subject = if prompt.trim().is_empty() {
            last.description.clone()
        } else {
            prompt.trim().to_string()
        };
        for i in scenes.len()..SCENE_COUNT {
            let heading = HEADINGS[i];
            scenes.push(scene(
                i,
                heading,
                format!("{heading}: {subject}"),
                last.visual_prompt.clone(),
            ));
        }
    }

    Storyboard {
        source_prompt: prompt.to_string(),
        origin,
        scenes,
    }
}

/// Parses model output split on `Scene <n>:` markers. Falls back when fewer
/// than five scenes are recovered.
pub fn parse_generated_storyboard(
    raw: &str,
    prompt: &str,
    vocab: &CinematicVocabulary,
) -> Storyboard {
    let segments: Vec<RawScene> = SCENE_MARKER
        .split(raw)
        .skip(1)
        .filter_map(split_generated_segment)
        .collect();
    if segments.len() < SCENE_COUNT {
        warn!(
            stage = "storyboard",
            recovered = segments.len(),
            "generated storyboard incomplete, using fallback"
        );
        return fallback_total(prompt, vocab);
    }
    finish(segments, prompt, Origin::Generated, vocab)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FormatHint {
    Plain,
    Json,
    #[default]
    Auto,
}

fn looks_like_json(input: &str) -> bool {
    matches!(input.trim_start().chars().next(), Some('{' | '['))
}

fn json_scenes(input: &str) -> std::result::Result<Vec<RawScene>, String> {
    let value: Value = serde_json::from_str(input).map_err(|e| format!("invalid JSON: {e}"))?;
    let list = match &value {
        Value::Array(items) => items,
        Value::Object(map) => match map.get("scenes") {
            Some(Value::Array(items)) => items,
            Some(_) => return Err("\"scenes\" is not a list".into()),
            None => return Err("object has no \"scenes\" key".into()),
        },
        _ => return Err("top-level JSON must be a list or an object".into()),
    };
    let text = |obj: &serde_json::Map<String, Value>, key: &str| -> Option<String> {
        obj.get(key)
            .and_then(Value::as_str)
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(String::from)
    };
    list.iter()
        .enumerate()
        .map(|(i, item)| {
            let obj = item
                .as_object()
                .ok_or_else(|| format!("scene {} is not an object", i + 1))?;
            let description = text(obj, "description")
                .ok_or_else(|| format!("scene {} has no description", i + 1))?;
            Ok(RawScene {
                heading: text(obj, "heading"),
                visual: text(obj, "visual_prompt").or_else(|| text(obj, "prompt")),
                description,
            })
        })
        .collect()
}

fn plain_segment(segment: &str) -> Option<RawScene> {
    let segment = LEADING_MARKER.replace(segment, "");
    let (mut body, mut visual) = (Vec::new(), None);
    for line in segment.lines() {
        match PROMPT_LINE.captures(line) {
            Some(c) if visual.is_none() => visual = Some(squash_whitespace(&c[1])),
            _ => body.push(line),
        }
    }
    let description = squash_whitespace(&body.join(" "));
    if description.is_empty() {
        return None;
    }
    Some(RawScene {
        heading: heading_label(&description),
        description,
        visual: visual.filter(|v| !v.is_empty()),
    })
}

/// Splits on one delimiter style. Outer empty pieces are dropped; an interior
/// empty piece makes the whole split malformed.
fn split_with(pieces: Vec<&str>) -> std::result::Result<Vec<&str>, String> {
    let start = pieces.iter().position(|p| !p.trim().is_empty());
    let end = pieces.iter().rposition(|p| !p.trim().is_empty());
    match (start, end) {
        (Some(s), Some(e)) => {
            let inner = &pieces[s..=e];
            if inner.iter().any(|p| p.trim().is_empty()) {
                Err("empty scene segment".into())
            } else {
                Ok(inner.to_vec())
            }
        }
        _ => Ok(Vec::new()),
    }
}

fn plain_scenes(input: &str) -> std::result::Result<Vec<RawScene>, String> {
    let styles: [Box<dyn Fn(&str) -> Vec<&str>>; 3] = [
        Box::new(|s| DASH_RULE.split(s).collect()),
        Box::new(|s| BLANK_RUN.split(s).collect()),
        Box::new(|s| {
            // keep markers attached to their segment
            let starts: Vec<usize> = SCENE_MARKER.find_iter(s).map(|m| m.start()).collect();
            let mut out = Vec::with_capacity(starts.len() + 1);
            let mut prev = 0;
            for &st in &starts {
                out.push(&s[prev..st]);
                prev = st;
            }
            out.push(&s[prev..]);
            out
        }),
    ];
    for style in &styles {
        let segments = split_with(style(input))?;
        if segments.len() >= 2 {
            let parsed: Option<Vec<_>> = segments.into_iter().map(plain_segment).collect();
            return parsed.ok_or_else(|| "empty scene segment".into());
        }
    }
    Err("no delimiter yields two or more scenes".into())
}

/// Parses a user-supplied board in plain text or JSON. Two to four scenes
/// are padded to five; extra scenes are dropped; anything malformed yields
/// the fallback board.
pub fn parse_custom_storyboard(
    input: &str,
    format_hint: FormatHint,
    prompt: &str,
    vocab: &CinematicVocabulary,
) -> Storyboard {
    let as_json = match format_hint {
        FormatHint::Json => true,
        FormatHint::Plain => false,
        FormatHint::Auto => looks_like_json(input),
    };
    let parsed = if as_json {
        json_scenes(input)
    } else {
        plain_scenes(input)
    };
    match parsed {
        Ok(raw) if !raw.is_empty() => finish(raw, prompt, Origin::Custom, vocab),
        Ok(_) => {
            warn!(stage = "storyboard", "custom storyboard has no scenes, using fallback");
            fallback_total(prompt, vocab)
        }
        Err(reason) => {
            warn!(stage = "storyboard", %reason, "custom storyboard malformed, using fallback");
            fallback_total(prompt, vocab)
        }
    }
}

/// Canonical pretty JSON (2-space indent, fixed key order).
pub fn serialize_storyboard(sb: &Storyboard) -> String {
    serde_json::to_string_pretty(sb).expect("storyboard serializes")
}
