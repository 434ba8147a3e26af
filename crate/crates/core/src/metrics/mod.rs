//! Scoring mathematics: frame-level temporal rates, box matching and AP,
//! mask overlap, classification PRF and VQA accuracy.
//!
//! Everything here is a pure function over borrowed inputs.

mod boxes;
mod masks;
mod report;
mod scores;
mod temporal;

use serde::{Deserialize, Serialize};

pub use boxes::{
    average_precision, average_precision_frames, box_iou, detection_prf, detection_prf_frames,
    map_range, map_range_frames, map_thresholds, match_boxes, DetectionScores, FrameDetections,
    MatchResult, MatchedPair,
};
pub use masks::{mask_overlap, MaskOverlap};
pub use report::{
    score_lines, ClassificationReport, DetectionReport, ScoreLine, ScoreReport, ScoreTask, SegmentationReport, VqaReport,
};
pub use scores::{classification_metrics, vqa_score, ClassPrediction, ClassificationMetrics};
pub use temporal::{frame_counts, temporal_frame_metrics, FrameCounts, GtFrames, PositiveMode};

/// Frame-level detection rates in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct TemporalMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub specificity: f64,
}

impl TemporalMetrics {
    pub fn percent(self) -> Self {
        Self {
            precision: self.precision * 100.0,
            recall: self.recall * 100.0,
            f1: self.f1 * 100.0,
            specificity: self.specificity * 100.0,
        }
    }
}

/// Harmonic mean, 0 when both inputs are 0.
pub fn f1_score(precision: f64, recall: f64) -> f64 {
    if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    }
}

pub(crate) fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}
