//! Reference-based visual judging.
//!
//! The reference map and the predicted map are placed side by side on one
//! canvas, a judge backend scores the pair `repeats` times with the same
//! prompt, and the scores are reduced to a mean and population standard
//! deviation.

use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::LazyLock;
use std::time::Duration;

use base64::Engine as _;
use image::imageops::{self, FilterType};
use image::{Rgba, RgbaImage};
use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::tools::render::encode_png;

/// Default number of judge queries per task.
pub const DEFAULT_REPEATS: usize = 3;
/// Height of the label strip above the two maps.
pub const LABEL_BAND: u32 = 16;

#[derive(Debug, Error)]
pub enum JudgeError {
    #[error("cannot decode image: {0}")]
    UndecodableImage(String),
    #[error("judge backend unavailable: {0}")]
    BackendUnavailable(String),
    #[error("judge reply has no usable score: {0:?}")]
    UnparseableScore(String),
    #[error("repeats must be at least 1")]
    NoRepeats,
}

pub fn decode_image(bytes: &[u8]) -> Result<RgbaImage, JudgeError> {
    image::load_from_memory(bytes)
        .map(|img| img.to_rgba8())
        .map_err(|e| JudgeError::UndecodableImage(e.to_string()))
}

pub fn load_image(path: &Path) -> Result<RgbaImage, JudgeError> {
    let bytes = std::fs::read(path).map_err(|e| JudgeError::UndecodableImage(format!("{}: {e}", path.display())))?;
    decode_image(&bytes)
}

// 5x7 glyphs, one byte per row, low five bits used.
fn glyph(c: char) -> [u8; 7] {
    match c {
        'C' => [0x0e, 0x11, 0x10, 0x10, 0x10, 0x11, 0x0e],
        'D' => [0x1e, 0x11, 0x11, 0x11, 0x11, 0x11, 0x1e],
        'E' => [0x1f, 0x10, 0x10, 0x1e, 0x10, 0x10, 0x1f],
        'F' => [0x1f, 0x10, 0x10, 0x1e, 0x10, 0x10, 0x10],
        'I' => [0x0e, 0x04, 0x04, 0x04, 0x04, 0x04, 0x0e],
        'N' => [0x11, 0x19, 0x15, 0x13, 0x11, 0x11, 0x11],
        'O' => [0x0e, 0x11, 0x11, 0x11, 0x11, 0x11, 0x0e],
        'P' => [0x1e, 0x11, 0x11, 0x1e, 0x10, 0x10, 0x10],
        'R' => [0x1e, 0x11, 0x11, 0x1e, 0x14, 0x12, 0x11],
        'T' => [0x1f, 0x04, 0x04, 0x04, 0x04, 0x04, 0x04],
        _ => [0; 7],
    }
}

fn draw_label(img: &mut RgbaImage, text: &str, x0: u32) {
    let y0 = (LABEL_BAND - 7) / 2;
    for (i, c) in text.chars().enumerate() {
        let gx = x0 + i as u32 * 6;
        for (row, bits) in glyph(c).iter().enumerate() {
            for col in 0..5 {
                let (x, y) = (gx + col, y0 + row as u32);
                if bits & (0x10 >> col) != 0 && x < img.width() && y < img.height() {
                    img.put_pixel(x, y, Rgba([0, 0, 0, 255]));
                }
            }
        }
    }
}

fn scale_to_height(img: &RgbaImage, height: u32) -> RgbaImage {
    if img.height() == height {
        return img.clone();
    }
    let width = ((img.width() as u64 * height as u64 + img.height() as u64 / 2) / img.height() as u64).max(1) as u32;
    imageops::resize(img, width, height, FilterType::Triangle)
}

/// Reference on the left, prediction on the right, labels in a band on top.
/// The shorter image is scaled up to the taller height, keeping its aspect.
pub fn compose_contrastive(pred: &RgbaImage, reference: &RgbaImage) -> Result<RgbaImage, JudgeError> {
    for img in [pred, reference] {
        if img.width() == 0 || img.height() == 0 {
            return Err(JudgeError::UndecodableImage("empty image".into()));
        }
    }
    let height = pred.height().max(reference.height());
    let left = scale_to_height(reference, height);
    let right = scale_to_height(pred, height);
    let mut canvas = RgbaImage::from_pixel(left.width() + right.width(), height + LABEL_BAND, Rgba([255, 255, 255, 255]));
    imageops::replace(&mut canvas, &left, 0, LABEL_BAND as i64);
    imageops::replace(&mut canvas, &right, left.width() as i64, LABEL_BAND as i64);
    draw_label(&mut canvas, "REFERENCE", 2);
    draw_label(&mut canvas, "PREDICTION", left.width() + 2);
    Ok(canvas)
}

/// Judge prompt. Identical inputs give byte-identical prompts.
pub fn build_prompt(task_description: &str) -> String {
    format!(
        "You are grading a map produced by a GIS agent.\n\
         The image shows two maps side by side. The left map, labeled REFERENCE, is the expected result. \
         The right map, labeled PREDICTION, was produced by the agent.\n\n\
         Task given to the agent:\n{}\n\n\
         Compare PREDICTION against REFERENCE on two dimensions:\n\
         1. Data and Spatial Accuracy: the right features are shown at the right locations, \
         with correct extent, geometry, and layer stacking order.\n\
         2. Cartographic Style Adherence: symbology, colors, and layout follow the task's drawing instructions.\n\n\
         Reply with one line per dimension, then a final line of the form `Score: N` where N is an integer from 0 to 100.",
        task_description.trim()
    )
}

static SCORE_LABEL: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?i)\bscore\s*:\s*(\d+)\b").expect("valid pattern"));
static SCORE_FRACTION: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\b(\d+)\s*/\s*100\b").expect("valid pattern"));

/// Accepts `Score: 85`, `85/100`, or a bare integer, each within 0..=100.
pub fn parse_score(reply: &str) -> Option<u8> {
    let trimmed = reply.trim();
    let raw = if let Some(c) = SCORE_LABEL.captures_iter(reply).last() {
        c[1].to_owned()
    } else if let Some(c) = SCORE_FRACTION.captures_iter(reply).last() {
        c[1].to_owned()
    } else if !trimmed.is_empty() && trimmed.chars().all(|c| c.is_ascii_digit()) {
        trimmed.to_owned()
    } else {
        return None;
    };
    raw.parse::<u32>().ok().filter(|&v| v <= 100).map(|v| v as u8)
}

/// Mean and population standard deviation.
pub fn aggregate(scores: &[f64]) -> (f64, f64) {
    if scores.is_empty() {
        return (0.0, 0.0);
    }
    let n = scores.len() as f64;
    let mean = scores.iter().sum::<f64>() / n;
    let var = scores.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct JudgeDims {
    pub data_spatial_accuracy: Option<String>,
    pub cartographic_style: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JudgeVerdict {
    pub scores: Vec<u8>,
    pub mean: f64,
    pub std: f64,
    pub dims: Option<JudgeDims>,
}

impl JudgeVerdict {
    pub fn from_scores(scores: Vec<u8>, dims: Option<JudgeDims>) -> Self {
        let as_f64: Vec<f64> = scores.iter().map(|&s| s as f64).collect();
        let (mean, std) = aggregate(&as_f64);
        JudgeVerdict { scores, mean, std, dims }
    }

    /// Verdict for a missing or unreadable prediction map.
    pub fn zero(repeats: usize) -> Self {
        Self::from_scores(vec![0; repeats.max(1)], None)
    }
}

fn dims_from(reply: &str) -> Option<JudgeDims> {
    let find = |key: &str| {
        reply.lines().find_map(|l| {
            let l = l.trim().trim_start_matches(|c: char| c.is_ascii_digit() || c == '.' || c == ' ');
            l.strip_prefix(key).map(|rest| rest.trim_start_matches(':').trim().to_owned())
        })
    };
    let dims = JudgeDims {
        data_spatial_accuracy: find("Data and Spatial Accuracy"),
        cartographic_style: find("Cartographic Style Adherence"),
    };
    (dims.data_spatial_accuracy.is_some() || dims.cartographic_style.is_some()).then_some(dims)
}

/// Request/response judge client.
pub trait JudgeBackend: Send + Sync {
    fn ask(&self, prompt: &str, image_png: &[u8]) -> Result<String, JudgeError>;
}

/// Queries the backend `repeats` times. An unparseable reply is re-asked
/// once with the same prompt before giving up.
pub fn judge_pair(
    task_description: &str,
    contrastive: &RgbaImage,
    backend: &dyn JudgeBackend,
    repeats: usize,
) -> Result<JudgeVerdict, JudgeError> {
    if repeats == 0 {
        return Err(JudgeError::NoRepeats);
    }
    let prompt = build_prompt(task_description);
    let png = encode_png(contrastive);
    let mut scores = Vec::with_capacity(repeats);
    let mut dims = None;
    for _ in 0..repeats {
        let mut reply = backend.ask(&prompt, &png)?;
        let mut score = parse_score(&reply);
        if score.is_none() {
            reply = backend.ask(&prompt, &png)?;
            score = parse_score(&reply);
        }
        let score = score.ok_or_else(|| JudgeError::UnparseableScore(reply.clone()))?;
        if dims.is_none() {
            dims = dims_from(&reply);
        }
        scores.push(score);
    }
    Ok(JudgeVerdict::from_scores(scores, dims))
}

/// Deterministic judge replaying canned replies in order, cycling.
#[derive(Debug)]
pub struct MockJudge {
    replies: Vec<String>,
    calls: AtomicUsize,
}

impl MockJudge {
    pub fn new<I: IntoIterator<Item = S>, S: Into<String>>(replies: I) -> Self {
        let replies: Vec<String> = replies.into_iter().map(Into::into).collect();
        assert!(!replies.is_empty(), "mock judge needs at least one reply");
        MockJudge { replies, calls: AtomicUsize::new(0) }
    }

    pub fn constant(score: u8) -> Self {
        Self::new([format!("Score: {score}")])
    }

    pub fn scores(scores: &[u8]) -> Self {
        Self::new(scores.iter().map(|s| format!("Score: {s}")))
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

impl JudgeBackend for MockJudge {
    fn ask(&self, _prompt: &str, _image_png: &[u8]) -> Result<String, JudgeError> {
        let n = self.calls.fetch_add(1, Ordering::SeqCst);
        Ok(self.replies[n % self.replies.len()].clone())
    }
}

/// OpenAI-compatible chat-completions judge with image input.
#[derive(Debug, Clone)]
pub struct HttpJudge {
    pub endpoint: String,
    pub model: String,
    pub api_key: Option<String>,
    pub timeout: Duration,
}

impl HttpJudge {
    /// Reads `JUDGE_BASE_URL`, `JUDGE_MODEL`, and `JUDGE_API_KEY`.
    pub fn from_env(default_model: &str) -> Result<Self, JudgeError> {
        let base = std::env::var("JUDGE_BASE_URL")
            .map_err(|_| JudgeError::BackendUnavailable("JUDGE_BASE_URL is not set".into()))?;
        Ok(HttpJudge {
            endpoint: format!("{}/chat/completions", base.trim_end_matches('/')),
            model: std::env::var("JUDGE_MODEL").unwrap_or_else(|_| default_model.to_owned()),
            api_key: std::env::var("JUDGE_API_KEY").ok(),
            timeout: Duration::from_secs(120),
        })
    }
}

impl JudgeBackend for HttpJudge {
    fn ask(&self, prompt: &str, image_png: &[u8]) -> Result<String, JudgeError> {
        let data_url = format!("data:image/png;base64,{}", base64::engine::general_purpose::STANDARD.encode(image_png));
        let body = serde_json::json!({
            "model": self.model,
            "messages": [{
                "role": "user",
                "content": [
                    {"type": "text", "text": prompt},
                    {"type": "image_url", "image_url": {"url": data_url}}
                ]
            }]
        });
        let agent: ureq::Agent = ureq::Agent::config_builder().timeout_global(Some(self.timeout)).build().into();
        let mut req = agent.post(&self.endpoint);
        if let Some(key) = &self.api_key {
            req = req.header("Authorization", &format!("Bearer {key}"));
        }
        let reply: serde_json::Value = req
            .send_json(&body)
            .and_then(|mut r| r.body_mut().read_json())
            .map_err(|e| JudgeError::BackendUnavailable(e.to_string()))?;
        reply["choices"][0]["message"]["content"]
            .as_str()
            .map(str::to_owned)
            .ok_or_else(|| JudgeError::BackendUnavailable(format!("unexpected response shape: {reply}")))
    }
}
