//! Evaluation metrics: SSIM on luma, corpus-free sentence BLEU, and the
//! storyboard parsing-accuracy harness.

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::compositor::read_png;
use crate::error::{Error, IoContext, Result};
use crate::imageproc::{resize, FrameBuffer};
use crate::storyboard::{parse_custom_storyboard, CinematicVocabulary, FormatHint};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SsimParams {
    pub window: u32,
    pub k1: f64,
    pub k2: f64,
    pub dynamic_range: f64,
}

impl Default for SsimParams {
    fn default() -> Self {
        Self {
            window: 8,
            k1: 0.01,
            k2: 0.03,
            dynamic_range: 255.0,
        }
    }
}

/// Luma scaled by 1000 so it stays integral: 299R + 587G + 114B.
fn luma_milli(f: &FrameBuffer) -> Vec<u64> {
    f.as_bytes()
        .chunks_exact(3)
        .map(|p| 299 * p[0] as u64 + 587 * p[1] as u64 + 114 * p[2] as u64)
        .collect()
}

/// Summed-area table with a zero guard row and column.
struct Integral {
    stride: usize,
    cells: Vec<u64>,
}

impl Integral {
    fn build(w: usize, h: usize, value: impl Fn(usize) -> u64) -> Self {
        let stride = w + 1;
        let mut cells = vec![0u64; stride * (h + 1)];
        for y in 0..h {
            let mut row = 0u64;
            for x in 0..w {
                row += value(y * w + x);
                cells[(y + 1) * stride + x + 1] = cells[y * stride + x + 1] + row;
            }
        }
        Self { stride, cells }
    }

    fn window(&self, x: usize, y: usize, n: usize) -> u64 {
        let at = |xx: usize, yy: usize| self.cells[yy * self.stride + xx];
        at(x + n, y + n) + at(x, y) - at(x + n, y) - at(x, y + n)
    }
}

/// Mean SSIM over all `window × window` positions (stride 1), uniform
/// weights, population statistics.
pub fn ssim(a: &FrameBuffer, b: &FrameBuffer, p: &SsimParams) -> Result<f64> {
    if a.dimensions() != b.dimensions() {
        return Err(Error::invalid(format!(
            "ssim needs equal dimensions: {}x{} vs {}x{}",
            a.width(),
            a.height(),
            b.width(),
            b.height()
        )));
    }
    let (w, h) = (a.width() as usize, a.height() as usize);
    let n = p.window as usize;
    if n == 0 || n > w.min(h) {
        return Err(Error::invalid(format!("ssim window {n} does not fit a {w}x{h} image")));
    }
    if !(p.k1 > 0.0 && p.k2 > 0.0 && p.dynamic_range > 0.0) {
        return Err(Error::invalid("ssim constants must be positive"));
    }

    let (la, lb) = (luma_milli(a), luma_milli(b));
    let sa = Integral::build(w, h, |i| la[i]);
    let sb = Integral::build(w, h, |i| lb[i]);
    let saa = Integral::build(w, h, |i| la[i] * la[i]);
    let sbb = Integral::build(w, h, |i| lb[i] * lb[i]);
    let sab = Integral::build(w, h, |i| la[i] * lb[i]);

    let c1 = (p.k1 * p.dynamic_range).powi(2);
    let c2 = (p.k2 * p.dynamic_range).powi(2);
    let count = n * n;
    let nn = count as i128;
    // Luma values are 1000x; moments pick up that factor squared.
    let mean_scale = 1000.0 * count as f64;
    let var_scale = 1e6 * (count * count) as f64;

    let mut total = 0.0;
    let positions = (w - n + 1) * (h - n + 1);
    for y in 0..=h - n {
        for x in 0..=w - n {
            let (s_a, s_b) = (sa.window(x, y, n) as i128, sb.window(x, y, n) as i128);
            let (s_aa, s_bb, s_ab) = (
                saa.window(x, y, n) as i128,
                sbb.window(x, y, n) as i128,
                sab.window(x, y, n) as i128,
            );
            let mu_a = s_a as f64 / mean_scale;
            let mu_b = s_b as f64 / mean_scale;
            let var_a = (nn * s_aa - s_a * s_a) as f64 / var_scale;
            let var_b = (nn * s_bb - s_b * s_b) as f64 / var_scale;
            let cov = (nn * s_ab - s_a * s_b) as f64 / var_scale;
            let num = (2.0 * mu_a * mu_b + c1) * (2.0 * cov + c2);
            let den = (mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2);
            total += num / den;
        }
    }
    Ok(total / positions as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Smoothing {
    #[default]
    None,
    /// Add one to numerator and denominator for orders above 1.
    AddOne,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BleuParams {
    pub max_n: usize,
    pub smoothing: Smoothing,
}

impl Default for BleuParams {
    fn default() -> Self {
        Self {
            max_n: 4,
            smoothing: Smoothing::None,
        }
    }
}

fn tokens(text: &str) -> Vec<String> {
    text.split_whitespace().map(str::to_lowercase).collect()
}

fn ngrams(toks: &[String], n: usize) -> HashMap<&[String], usize> {
    let mut counts = HashMap::new();
    for g in toks.windows(n) {
        *counts.entry(g).or_insert(0) += 1;
    }
    counts
}

/// Clipped n-gram matches and candidate n-gram total for order `n`.
pub fn modified_precision(candidate: &[String], references: &[Vec<String>], n: usize) -> (usize, usize) {
    let cand = ngrams(candidate, n);
    let mut max_ref: HashMap<&[String], usize> = HashMap::new();
    for r in references {
        for (g, c) in ngrams(r, n) {
            let e = max_ref.entry(g).or_insert(0);
            *e = (*e).max(c);
        }
    }
    let matched = cand
        .iter()
        .map(|(g, &c)| c.min(max_ref.get(g).copied().unwrap_or(0)))
        .sum();
    (matched, candidate.len().saturating_sub(n - 1))
}

/// Sentence BLEU. Orders longer than the candidate are left out of the
/// geometric mean, so short candidates are scored on the orders they have.
pub fn bleu(candidate: &str, references: &[&str], p: &BleuParams) -> Result<f64> {
    if references.is_empty() {
        return Err(Error::invalid("bleu needs at least one reference"));
    }
    if p.max_n == 0 {
        return Err(Error::invalid("bleu max_n must be at least 1"));
    }
    let cand = tokens(candidate);
    if cand.is_empty() {
        return Ok(0.0);
    }
    let refs: Vec<Vec<String>> = references.iter().map(|r| tokens(r)).collect();

    let orders = p.max_n.min(cand.len());
    let mut log_sum = 0.0;
    for n in 1..=orders {
        let (mut m, mut t) = modified_precision(&cand, &refs, n);
        if n > 1 && p.smoothing == Smoothing::AddOne {
            m += 1;
            t += 1;
        }
        if m == 0 {
            return Ok(0.0);
        }
        log_sum += (m as f64 / t as f64).ln();
    }

    let c = cand.len();
    let r = refs
        .iter()
        .map(Vec::len)
        .min_by_key(|&len| (len.abs_diff(c), len))
        .expect("references not empty");
    let bp = if c < r { (1.0 - r as f64 / c as f64).exp() } else { 1.0 };
    Ok(bp * (log_sum / orders as f64).exp())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParsingReport {
    pub total: usize,
    pub parsed: usize,
    pub fallback: usize,
    /// Non-fallback parses among well-formed fixtures.
    pub accuracy: f64,
    pub well_formed: usize,
    pub malformed: usize,
    pub malformed_fallbacks: usize,
    /// Fixtures whose outcome contradicts their tag.
    pub mismatches: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Tag {
    WellFormed,
    Malformed,
}

fn fixture_tag(name: &str) -> Option<Tag> {
    if name.contains(".wellformed.") {
        Some(Tag::WellFormed)
    } else if name.contains(".malformed.") {
        Some(Tag::Malformed)
    } else {
        None
    }
}

/// Runs the custom-storyboard parser over every tagged fixture in
/// `corpus_dir` (`*.wellformed.*` / `*.malformed.*`; others are ignored).
pub fn parsing_accuracy(corpus_dir: &Path) -> Result<ParsingReport> {
    let mut files: Vec<(String, Tag, PathBuf)> = Vec::new();
    for entry in std::fs::read_dir(corpus_dir).at(corpus_dir)? {
        let path = entry.at(corpus_dir)?.path();
        let Some(name) = path.file_name().and_then(|n| n.to_str()).map(String::from) else {
            continue;
        };
        if let Some(tag) = fixture_tag(&name) {
            files.push((name, tag, path));
        }
    }
    files.sort();
    if files.is_empty() {
        return Err(Error::invalid(format!("no tagged fixtures in {}", corpus_dir.display())));
    }

    let vocab = CinematicVocabulary::default();
    let mut report = ParsingReport {
        total: files.len(),
        parsed: 0,
        fallback: 0,
        accuracy: 0.0,
        well_formed: 0,
        malformed: 0,
        malformed_fallbacks: 0,
        mismatches: Vec::new(),
    };
    let mut well_parsed = 0;
    for (name, tag, path) in &files {
        let bytes = std::fs::read(path).at(path)?;
        let text = String::from_utf8_lossy(&bytes);
        let fell_back = parse_custom_storyboard(&text, FormatHint::Auto, "corpus evaluation", &vocab).is_fallback();
        if fell_back {
            report.fallback += 1;
        } else {
            report.parsed += 1;
        }
        match (tag, fell_back) {
            (Tag::WellFormed, false) => well_parsed += 1,
            (Tag::Malformed, true) => report.malformed_fallbacks += 1,
            _ => report.mismatches.push(name.clone()),
        }
        match tag {
            Tag::WellFormed => report.well_formed += 1,
            Tag::Malformed => report.malformed += 1,
        }
    }
    if report.well_formed == 0 {
        return Err(Error::invalid("corpus has no well-formed fixtures; accuracy is undefined"));
    }
    report.accuracy = well_parsed as f64 / report.well_formed as f64;
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub ssim_mean: Option<f64>,
    pub ssim_pairs: usize,
    pub bleu: Option<f64>,
    pub bleu_pairs: usize,
    pub parsing: Option<ParsingReport>,
}

fn sorted_with_ext(dir: &Path, ext: &str) -> Result<Vec<String>> {
    let mut names = Vec::new();
    for entry in std::fs::read_dir(dir).at(dir)? {
        let path = entry.at(dir)?.path();
        let matches = path
            .extension()
            .and_then(|e| e.to_str())
            .is_some_and(|e| e.eq_ignore_ascii_case(ext));
        if matches && path.is_file() {
            if let Some(n) = path.file_name().and_then(|n| n.to_str()) {
                names.push(n.to_string());
            }
        }
    }
    names.sort();
    Ok(names)
}

/// Compares same-named files in `reference` and `generated`: PNGs by SSIM
/// (generated frames resized to the reference size) and `.txt` files by
/// BLEU. Scores are means over pairs; `None` when no pair exists.
pub fn evaluate(reference: &Path, generated: &Path, corpus: Option<&Path>) -> Result<EvalReport> {
    let params = SsimParams::default();
    let mut ssim_scores = Vec::new();
    for name in sorted_with_ext(reference, "png")? {
        let gen_path = generated.join(&name);
        if !gen_path.is_file() {
            continue;
        }
        let r = read_png(&reference.join(&name))?;
        let g = read_png(&gen_path)?;
        let g = resize(&g, r.width(), r.height())?;
        ssim_scores.push(ssim(&r, &g, &params)?);
    }

    let bp = BleuParams::default();
    let mut bleu_scores = Vec::new();
    for name in sorted_with_ext(reference, "txt")? {
        let gen_path = generated.join(&name);
        if !gen_path.is_file() {
            continue;
        }
        let ref_path = reference.join(&name);
        let r = std::fs::read_to_string(&ref_path).at(&ref_path)?;
        let g = std::fs::read_to_string(&gen_path).at(&gen_path)?;
        bleu_scores.push(bleu(&g, &[&r], &bp)?);
    }

    let mean = |v: &[f64]| (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64);
    Ok(EvalReport {
        ssim_mean: mean(&ssim_scores),
        ssim_pairs: ssim_scores.len(),
        bleu: mean(&bleu_scores),
        bleu_pairs: bleu_scores.len(),
        parsing: corpus.map(parsing_accuracy).transpose()?,
    })
}
