//! Domain types shared across the pipeline, benchmark builder and evaluation harness.
//!
//! Every type here is a plain value object. Persistence is line-delimited JSON
//! with snake_case field names matching the struct fields. Frame ranges are
//! 0-based and inclusive on both ends.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::TemporalMetrics;
use crate::rle::{self, Mask};

pub const DEFAULT_FPS: f64 = 10.0;
pub const OPTIONS_PER_QUESTION: usize = 5;

/// Pixel dimensions of a frame, serialized as `[width, height]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(from = "(u32, u32)", into = "(u32, u32)")]
pub struct FrameSize {
    pub width: u32,
    pub height: u32,
}

impl FrameSize {
    pub const fn new(width: u32, height: u32) -> Self {
        Self { width, height }
    }

    pub fn cells(&self) -> usize {
        self.width as usize * self.height as usize
    }
}

impl From<(u32, u32)> for FrameSize {
    fn from((width, height): (u32, u32)) -> Self {
        Self { width, height }
    }
}

impl From<FrameSize> for (u32, u32) {
    fn from(s: FrameSize) -> Self {
        (s.width, s.height)
    }
}

/// Resolves a frame index to encoded image bytes.
///
/// Pipeline logic never requires one; it only backs the review frame endpoint
/// and real model backends that need pixels.
pub trait FrameProvider: Send + Sync {
    fn frame(&self, index: u64) -> Option<Vec<u8>>;

    fn content_type(&self) -> &str {
        "image/png"
    }
}

#[derive(Clone, Serialize, Deserialize)]
pub struct VideoRef {
    pub sequence_id: String,
    #[serde(default = "default_fps")]
    pub fps: f64,
    pub frame_count: u64,
    pub frame_size: FrameSize,
    #[serde(skip)]
    pub frame_provider: Option<Arc<dyn FrameProvider>>,
}

fn default_fps() -> f64 {
    DEFAULT_FPS
}

impl VideoRef {
    pub fn new(sequence_id: impl Into<String>, frame_count: u64, frame_size: FrameSize) -> Self {
        Self {
            sequence_id: sequence_id.into(),
            fps: DEFAULT_FPS,
            frame_count,
            frame_size,
            frame_provider: None,
        }
    }

    pub fn with_provider(mut self, provider: Arc<dyn FrameProvider>) -> Self {
        self.frame_provider = Some(provider);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.frame_count == 0 {
            return Err(Error::Config(format!("{}: frame_count must be >= 1", self.sequence_id)));
        }
        if self.fps.is_nan() || self.fps <= 0.0 {
            return Err(Error::Config(format!("{}: fps must be positive", self.sequence_id)));
        }
        if self.frame_size.width == 0 || self.frame_size.height == 0 {
            return Err(Error::Config(format!("{}: empty frame size", self.sequence_id)));
        }
        Ok(())
    }
}

impl fmt::Debug for VideoRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("VideoRef")
            .field("sequence_id", &self.sequence_id)
            .field("fps", &self.fps)
            .field("frame_count", &self.frame_count)
            .field("frame_size", &self.frame_size)
            .field("frame_provider", &self.frame_provider.is_some())
            .finish()
    }
}

impl PartialEq for VideoRef {
    fn eq(&self, other: &Self) -> bool {
        self.sequence_id == other.sequence_id
            && self.fps == other.fps
            && self.frame_count == other.frame_count
            && self.frame_size == other.frame_size
    }
}

/// Position of a window in the funnel.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Proposed,
    Merged,
    Verified,
    Tracked,
    Confirmed,
    HumanAccepted,
    /// Archived with the name of the stage that rejected it.
    Rejected(String),
}

impl Stage {
    fn rank(&self) -> Option<u8> {
        Some(match self {
            Stage::Proposed => 0,
            Stage::Merged => 1,
            Stage::Verified => 2,
            Stage::Tracked => 3,
            Stage::Confirmed => 4,
            Stage::HumanAccepted => 5,
            Stage::Rejected(_) => return None,
        })
    }

    pub fn is_rejected(&self) -> bool {
        matches!(self, Stage::Rejected(_))
    }

    /// Forward moves along the funnel and rejection are legal; nothing leaves `Rejected`.
    pub fn can_move_to(&self, next: &Stage) -> bool {
        match (self.rank(), next.rank()) {
            (None, _) => false,
            (Some(_), None) => true,
            (Some(a), Some(b)) => b > a,
        }
    }
}

/// A temporal segment of one sequence; the unit of work of the funnel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VideoWindow {
    pub window_id: String,
    pub sequence_id: String,
    pub start_frame: u64,
    pub end_frame: u64,
    pub stage: Stage,
    #[serde(default)]
    pub initial_desc: Option<String>,
    #[serde(default)]
    pub verified_desc: Option<String>,
    #[serde(default)]
    pub confirmation_note: Option<String>,
    #[serde(default)]
    pub categories: BTreeSet<String>,
}

impl VideoWindow {
    pub fn new(
        window_id: impl Into<String>,
        sequence_id: impl Into<String>,
        start_frame: u64,
        end_frame: u64,
    ) -> Self {
        Self {
            window_id: window_id.into(),
            sequence_id: sequence_id.into(),
            start_frame,
            end_frame,
            stage: Stage::Proposed,
            initial_desc: None,
            verified_desc: None,
            confirmation_note: None,
            categories: BTreeSet::new(),
        }
    }

    pub fn with_desc(mut self, desc: impl Into<String>) -> Self {
        self.initial_desc = Some(desc.into());
        self
    }

    /// Number of frames in the inclusive range; zero for an inverted range.
    pub fn len(&self) -> u64 {
        if self.end_frame < self.start_frame {
            0
        } else {
            self.end_frame - self.start_frame + 1
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn contains(&self, frame: u64) -> bool {
        (self.start_frame..=self.end_frame).contains(&frame)
    }

    pub fn midpoint(&self) -> u64 {
        self.start_frame + (self.end_frame.saturating_sub(self.start_frame)) / 2
    }

    pub fn texts(&self) -> impl Iterator<Item = &str> {
        [&self.initial_desc, &self.verified_desc, &self.confirmation_note]
            .into_iter()
            .filter_map(|t| t.as_deref())
    }

    pub fn word_count(&self) -> u64 {
        self.texts().map(|t| t.split_whitespace().count() as u64).sum()
    }

    pub fn advance(&mut self, next: Stage) -> Result<()> {
        if !self.stage.can_move_to(&next) {
            return Err(Error::Config(format!(
                "window `{}` cannot move from {:?} to {:?}",
                self.window_id, self.stage, next
            )));
        }
        self.stage = next;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum WindowViolation {
    EmptyWindowId,
    SequenceMismatch { window: String, video: String },
    StartAfterEnd,
    EndOutOfRange { end_frame: u64, frame_count: u64 },
}

/// Lists every invariant breach of `w` against its sequence.
pub fn validate_window(w: &VideoWindow, v: &VideoRef) -> Vec<WindowViolation> {
    let mut out = Vec::new();
    if w.window_id.is_empty() {
        out.push(WindowViolation::EmptyWindowId);
    }
    if w.sequence_id != v.sequence_id {
        out.push(WindowViolation::SequenceMismatch {
            window: w.sequence_id.clone(),
            video: v.sequence_id.clone(),
        });
    }
    if w.start_frame > w.end_frame {
        out.push(WindowViolation::StartAfterEnd);
    }
    if w.end_frame >= v.frame_count {
        out.push(WindowViolation::EndOutOfRange {
            end_frame: w.end_frame,
            frame_count: v.frame_count,
        });
    }
    out
}

/// Axis-aligned box in pixel space: top-left corner plus extent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxAnnotation {
    pub frame_index: u64,
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
    pub label: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub confidence: Option<f64>,
}

impl BoxAnnotation {
    pub fn new(frame_index: u64, x: f64, y: f64, w: f64, h: f64, label: impl Into<String>) -> Self {
        Self {
            frame_index,
            x,
            y,
            w,
            h,
            label: label.into(),
            confidence: None,
        }
    }

    pub fn with_confidence(mut self, c: f64) -> Self {
        self.confidence = Some(c);
        self
    }

    pub fn area(&self) -> f64 {
        self.w * self.h
    }

    pub fn right(&self) -> f64 {
        self.x + self.w
    }

    pub fn bottom(&self) -> f64 {
        self.y + self.h
    }

    pub fn is_valid_in(&self, size: FrameSize) -> bool {
        self.x >= 0.0
            && self.y >= 0.0
            && self.w > 0.0
            && self.h > 0.0
            && self.right() <= size.width as f64
            && self.bottom() <= size.height as f64
            && self.confidence.is_none_or(|c| (0.0..=1.0).contains(&c))
    }

    /// Clips to the frame; `None` when nothing of the box remains inside.
    pub fn clamped(&self, size: FrameSize) -> Option<BoxAnnotation> {
        let x0 = self.x.clamp(0.0, size.width as f64);
        let y0 = self.y.clamp(0.0, size.height as f64);
        let x1 = self.right().clamp(0.0, size.width as f64);
        let y1 = self.bottom().clamp(0.0, size.height as f64);
        (x1 > x0 && y1 > y0).then(|| BoxAnnotation {
            x: x0,
            y: y0,
            w: x1 - x0,
            h: y1 - y0,
            ..self.clone()
        })
    }
}

/// Per-frame RLE masks of one tracked object over a window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaskTracklet {
    pub window_id: String,
    #[serde(deserialize_with = "crate::io::frame_keys::deserialize")]
    pub masks: BTreeMap<u64, String>,
    pub frame_size: FrameSize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum TrackletViolation {
    CorruptRle { frame: u64, detail: String },
    SizeMismatch { frame: u64, expected: FrameSize, found: FrameSize },
    FrameOutsideWindow { frame: u64 },
}

impl MaskTracklet {
    pub fn new(window_id: impl Into<String>, frame_size: FrameSize) -> Self {
        Self {
            window_id: window_id.into(),
            masks: BTreeMap::new(),
            frame_size,
        }
    }

    pub fn insert(&mut self, frame: u64, mask: &Mask) -> Result<()> {
        if mask.size() != self.frame_size {
            return Err(Error::Shape(format!(
                "mask {}x{} in a {}x{} tracklet",
                mask.width(),
                mask.height(),
                self.frame_size.width,
                self.frame_size.height
            )));
        }
        self.masks.insert(frame, rle::encode(mask)?);
        Ok(())
    }

    pub fn mask(&self, frame: u64) -> Option<Result<Mask>> {
        self.masks.get(&frame).map(|s| rle::decode(s))
    }

    /// Checks codec, size and (optionally) frame-range invariants.
    pub fn validate(&self, range: Option<(u64, u64)>) -> Vec<TrackletViolation> {
        let mut out = Vec::new();
        for (&frame, encoded) in &self.masks {
            if let Some((start, end)) = range {
                if frame < start || frame > end {
                    out.push(TrackletViolation::FrameOutsideWindow { frame });
                }
            }
            match rle::decode(encoded) {
                Ok(m) if m.size() != self.frame_size => out.push(TrackletViolation::SizeMismatch {
                    frame,
                    expected: self.frame_size,
                    found: m.size(),
                }),
                Ok(_) => {}
                Err(e) => out.push(TrackletViolation::CorruptRle {
                    frame,
                    detail: e.to_string(),
                }),
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Prompted,
    Unprompted,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Original,
    Debiased,
    RevertedAfterBlindTest,
}

/// Five-option multiple-choice question. Deserialization enforces the invariants.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawMcqItem")]
pub struct McqItem {
    pub question_id: String,
    pub clip_id: String,
    pub stem: String,
    pub options: Vec<String>,
    pub answer_index: usize,
    pub split: Split,
    pub provenance: Provenance,
    pub shuffle_seed: u64,
}

#[derive(Deserialize)]
struct RawMcqItem {
    question_id: String,
    clip_id: String,
    stem: String,
    options: Vec<String>,
    answer_index: usize,
    split: Split,
    provenance: Provenance,
    shuffle_seed: u64,
}

impl TryFrom<RawMcqItem> for McqItem {
    type Error = String;

    fn try_from(r: RawMcqItem) -> std::result::Result<Self, Self::Error> {
        let item = McqItem {
            question_id: r.question_id,
            clip_id: r.clip_id,
            stem: r.stem,
            options: r.options,
            answer_index: r.answer_index,
            split: r.split,
            provenance: r.provenance,
            shuffle_seed: r.shuffle_seed,
        };
        item.check().map_err(|v| format!("{}: {v}", item.question_id))?;
        Ok(item)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum McqViolation {
    #[error("expected 5 options, found {0}")]
    OptionCount(usize),
    #[error("answer index {0} out of range")]
    AnswerOutOfRange(usize),
    #[error("duplicate option `{0}`")]
    DuplicateOption(String),
    #[error("empty stem")]
    EmptyStem,
}

impl McqItem {
    pub fn answer_text(&self) -> &str {
        &self.options[self.answer_index]
    }

    pub fn check(&self) -> std::result::Result<(), McqViolation> {
        check_options(&self.stem, &self.options, self.answer_index)
    }
}

pub(crate) fn check_options(
    stem: &str,
    options: &[String],
    answer_index: usize,
) -> std::result::Result<(), McqViolation> {
    if stem.trim().is_empty() {
        return Err(McqViolation::EmptyStem);
    }
    if options.len() != OPTIONS_PER_QUESTION {
        return Err(McqViolation::OptionCount(options.len()));
    }
    if answer_index >= OPTIONS_PER_QUESTION {
        return Err(McqViolation::AnswerOutOfRange(answer_index));
    }
    let mut seen = BTreeSet::new();
    for o in options {
        if !seen.insert(o.trim()) {
            return Err(McqViolation::DuplicateOption(o.clone()));
        }
    }
    Ok(())
}

/// One row of the funnel table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageStats {
    pub stage_name: String,
    pub windows: u64,
    pub frames: u64,
    pub hours: f64,
    pub bboxes: u64,
    pub masks: u64,
    pub words: u64,
    /// Frame-level rates in percent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub temporal: Option<TemporalMetrics>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    VqaPrompted,
    VqaUnprompted,
    Classification,
    Detection,
    Segmentation,
}

impl Task {
    pub fn is_vqa(self) -> bool {
        matches!(self, Task::VqaPrompted | Task::VqaUnprompted)
    }

    pub fn split(self) -> Option<Split> {
        match self {
            Task::VqaPrompted => Some(Split::Prompted),
            Task::VqaUnprompted => Some(Split::Unprompted),
            _ => None,
        }
    }

    pub fn cli_name(self) -> &'static str {
        match self {
            Task::VqaPrompted => "vqa-prompted",
            Task::VqaUnprompted => "vqa-unprompted",
            Task::Classification => "cls",
            Task::Detection => "det",
            Task::Segmentation => "seg",
        }
    }
}

impl std::str::FromStr for Task {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "vqa-prompted" | "vqa_prompted" => Task::VqaPrompted,
            "vqa-unprompted" | "vqa_unprompted" => Task::VqaUnprompted,
            "cls" | "classification" => Task::Classification,
            "det" | "detection" => Task::Detection,
            "seg" | "segmentation" => Task::Segmentation,
            other => return Err(Error::Config(format!("unknown task `{other}`"))),
        })
    }
}

/// One model x task x item result.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub model_id: String,
    pub task: Task,
    pub item_id: String,
    pub prediction: serde_json::Value,
    #[serde(default)]
    pub correct: Option<bool>,
    #[serde(default)]
    pub metrics: BTreeMap<String, f64>,
}

impl EvalRecord {
    pub fn is_well_formed(&self) -> bool {
        match self.task {
            Task::VqaPrompted | Task::VqaUnprompted | Task::Classification => self.correct.is_some(),
            Task::Detection | Task::Segmentation => !self.metrics.is_empty(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn video(n: u64) -> VideoRef {
        VideoRef::new("seq", n, FrameSize::new(64, 48))
    }

    #[test]
    fn window_validation() {
        let v = video(100);
        assert!(validate_window(&VideoWindow::new("w", "seq", 0, 10), &v).is_empty());
        assert_eq!(
            validate_window(&VideoWindow::new("w", "seq", 50, 40), &v),
            vec![WindowViolation::StartAfterEnd]
        );
        assert_eq!(
            validate_window(&VideoWindow::new("w", "seq", 90, 120), &v),
            vec![WindowViolation::EndOutOfRange {
                end_frame: 120,
                frame_count: 100
            }]
        );
        // last valid frame is frame_count - 1
        assert!(validate_window(&VideoWindow::new("w", "seq", 0, 99), &v).is_empty());
        assert_eq!(validate_window(&VideoWindow::new("w", "seq", 0, 100), &v).len(), 1);
    }

    #[test]
    fn stage_transitions() {
        let mut w = VideoWindow::new("w", "s", 0, 1);
        w.advance(Stage::Merged).unwrap();
        w.advance(Stage::Tracked).unwrap();
        assert!(w.advance(Stage::Verified).is_err());
        w.advance(Stage::Rejected("confirm".into())).unwrap();
        assert!(w.advance(Stage::HumanAccepted).is_err());
    }

    #[test]
    fn mcq_deserialization_enforces_invariants() {
        let ok = r#"{"question_id":"q","clip_id":"c","stem":"s?","options":["a","b","c","d","e"],
            "answer_index":2,"split":"prompted","provenance":"original","shuffle_seed":1}"#;
        let item: McqItem = serde_json::from_str(ok).unwrap();
        assert_eq!(item.answer_text(), "c");

        let four = ok.replace(r#""a","b","c","d","e""#, r#""a","b","c","d""#);
        assert!(serde_json::from_str::<McqItem>(&four).is_err());
        let dup = ok.replace(r#""a","b","c","d","e""#, r#""a","b","c","d","a""#);
        assert!(serde_json::from_str::<McqItem>(&dup).is_err());
        let oob = ok.replace(r#""answer_index":2"#, r#""answer_index":5"#);
        assert!(serde_json::from_str::<McqItem>(&oob).is_err());
    }

    #[test]
    fn box_validity() {
        let size = FrameSize::new(10, 10);
        assert!(BoxAnnotation::new(0, 0.0, 0.0, 10.0, 10.0, "l").is_valid_in(size));
        assert!(!BoxAnnotation::new(0, 1.0, 0.0, 10.0, 10.0, "l").is_valid_in(size));
        assert!(!BoxAnnotation::new(0, 0.0, 0.0, 0.0, 10.0, "l").is_valid_in(size));
        let c = BoxAnnotation::new(0, -2.0, 5.0, 6.0, 10.0, "l").clamped(size).unwrap();
        assert_eq!((c.x, c.y, c.w, c.h), (0.0, 5.0, 4.0, 5.0));
    }

    #[test]
    fn frame_size_serializes_as_pair() {
        let v = video(3);
        let s = serde_json::to_string(&v).unwrap();
        assert!(s.contains(r#""frame_size":[64,48]"#), "{s}");
        let back: VideoRef = serde_json::from_str(&s).unwrap();
        assert_eq!(back, v);
    }

    #[test]
    fn window_stage_serialization() {
        let mut w = VideoWindow::new("w", "s", 0, 1);
        w.stage = Stage::Rejected("verify".into());
        let s = serde_json::to_string(&w).unwrap();
        assert!(s.contains(r#""stage":{"rejected":"verify"}"#), "{s}");
    }
}
