use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::stages::AnnotatedWindow;
use crate::metrics::{temporal_frame_metrics, GtFrames, PositiveMode};
use crate::model::{StageStats, VideoRef, VideoWindow, DEFAULT_FPS};

/// Windows retained after one stage, plus those the stage rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageSnapshot {
    pub stage_name: String,
    pub windows: Vec<AnnotatedWindow>,
    #[serde(default)]
    pub rejected: Vec<AnnotatedWindow>,
    /// Score only frames that carry boxes as positive.
    #[serde(default)]
    pub boxes_only: bool,
}

impl StageSnapshot {
    pub fn new(stage_name: impl Into<String>, windows: Vec<AnnotatedWindow>) -> Self {
        Self {
            stage_name: stage_name.into(),
            windows,
            rejected: Vec::new(),
            boxes_only: false,
        }
    }
}

/// Positive frames per sequence and the frame count of every processed sequence.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SurrogateLabels {
    pub positives: GtFrames,
    pub total_frames: BTreeMap<String, u64>,
}

/// One line of a ground-truth labels file: an inclusive positive frame span.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelInterval {
    pub sequence_id: String,
    pub start_frame: u64,
    pub end_frame: u64,
}

impl SurrogateLabels {
    /// Labels over `sequences`; spans on other sequences are ignored.
    pub fn from_intervals(intervals: &[LabelInterval], sequences: &[VideoRef]) -> Self {
        let total_frames: BTreeMap<String, u64> = sequences.iter().map(|s| (s.sequence_id.clone(), s.frame_count)).collect();
        let positives = GtFrames::from_intervals(
            intervals
                .iter()
                .filter(|l| total_frames.contains_key(&l.sequence_id))
                .map(|l| (l.sequence_id.clone(), l.start_frame, l.end_frame)),
        );
        Self { positives, total_frames }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FunnelReport {
    pub stages: Vec<StageStats>,
    pub retention_pct: f64,
    /// Mean per-window box coverage of the last stage, in percent.
    pub final_bbox_coverage_pct: f64,
}

/// Mean of per-window box coverage percentages.
pub fn mean_bbox_coverage(windows: &[AnnotatedWindow]) -> f64 {
    if windows.is_empty() {
        return 0.0;
    }
    windows.iter().map(AnnotatedWindow::bbox_coverage).sum::<f64>() / windows.len() as f64
}

pub fn stage_stats(snapshot: &StageSnapshot, fps: f64, gt: Option<&SurrogateLabels>) -> StageStats {
    let frames: u64 = snapshot.windows.iter().map(|w| w.window.len()).sum();
    let temporal = gt.map(|gt| {
        let plain: Vec<VideoWindow> = snapshot.windows.iter().map(|w| w.window.clone()).collect();
        let box_frames: BTreeMap<String, BTreeSet<u64>> = snapshot
            .windows
            .iter()
            .map(|w| (w.id().to_string(), w.box_frames()))
            .collect();
        let mode = if snapshot.boxes_only {
            PositiveMode::BoxFramesOnly(&box_frames)
        } else {
            PositiveMode::Windows
        };
        temporal_frame_metrics(&plain, &gt.positives, &gt.total_frames, mode).percent()
    });
    StageStats {
        stage_name: snapshot.stage_name.clone(),
        windows: snapshot.windows.len() as u64,
        frames,
        hours: frames as f64 / fps / 3600.0,
        bboxes: snapshot.windows.iter().map(|w| w.boxes.len() as u64).sum(),
        masks: snapshot.windows.iter().map(AnnotatedWindow::mask_count).sum(),
        words: snapshot.windows.iter().map(|w| w.window.word_count()).sum(),
        temporal,
    }
}

/// Per-stage statistics over a run's history. `fps` defaults to 10.
pub fn funnel_report(history: &[StageSnapshot], fps: Option<f64>, gt: Option<&SurrogateLabels>) -> FunnelReport {
    let fps = fps.unwrap_or(DEFAULT_FPS);
    let stages: Vec<StageStats> = history.iter().map(|s| stage_stats(s, fps, gt)).collect();
    let retention_pct = match (stages.first(), stages.last()) {
        (Some(f), Some(l)) if f.windows > 0 => 100.0 * l.windows as f64 / f.windows as f64,
        _ => 0.0,
    };
    FunnelReport {
        stages,
        retention_pct,
        final_bbox_coverage_pct: history.last().map_or(0.0, |s| mean_bbox_coverage(&s.windows)),
    }
}

impl FunnelReport {
    /// Whether window counts never grow from one stage to the next.
    pub fn is_monotone(&self) -> bool {
        self.stages.windows(2).all(|p| p[1].windows <= p[0].windows)
    }

    /// Aligned plain-text table.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let with_gt = self.stages.iter().any(|s| s.temporal.is_some());
        let _ = write!(
            out,
            "{:<12} {:>8} {:>10} {:>8} {:>9} {:>8} {:>9}",
            "stage", "windows", "frames", "hours", "bboxes", "masks", "words"
        );
        if with_gt {
            let _ = write!(out, " {:>7} {:>7} {:>7} {:>7}", "prec", "recall", "f1", "spec");
        }
        out.push('\n');
        for s in &self.stages {
            let _ = write!(
                out,
                "{:<12} {:>8} {:>10} {:>8.2} {:>9} {:>8} {:>9}",
                s.stage_name, s.windows, s.frames, s.hours, s.bboxes, s.masks, s.words
            );
            if let Some(t) = &s.temporal {
                let _ = write!(
                    out,
                    " {:>7.1} {:>7.1} {:>7.1} {:>7.1}",
                    t.precision, t.recall, t.f1, t.specificity
                );
            }
            out.push('\n');
        }
        let _ = writeln!(out, "retention: {:.1}%", self.retention_pct);
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::BoxAnnotation;

    /// `n` windows whose lengths sum to exactly `frames`.
    fn windows(stage: &str, n: u64, frames: u64) -> StageSnapshot {
        let base = frames / n;
        let extra = frames % n;
        let mut start = 0;
        let ws = (0..n)
            .map(|i| {
                let len = base + u64::from(i < extra);
                let w = VideoWindow::new(format!("{stage}-{i}"), "seq", start, start + len - 1);
                start += len;
                AnnotatedWindow::new(w)
            })
            .collect();
        StageSnapshot::new(stage, ws)
    }

    #[test]
    fn single_stage_retains_everything() {
        let r = funnel_report(&[windows("only", 3, 30)], None, None);
        assert_eq!(r.stages.len(), 1);
        assert_eq!(r.retention_pct, 100.0);
        assert!(r.stages[0].temporal.is_none());
    }

    #[test]
    fn reference_funnel_hours_and_retention() {
        let counts = [(1325, 826_763), (903, 648_440), (597, 492_606), (528, 464_035)];
        let history: Vec<StageSnapshot> = counts
            .iter()
            .enumerate()
            .map(|(i, &(n, f))| windows(&format!("s{i}"), n, f))
            .collect();
        let r = funnel_report(&history, Some(10.0), None);
        let hours: Vec<f64> = r.stages.iter().map(|s| s.hours).collect();
        for (h, expect) in hours.iter().zip([22.97, 18.01, 13.68, 12.89]) {
            assert!((h - expect).abs() <= 0.01, "{h} vs {expect}");
        }
        for (s, &(_, f)) in r.stages.iter().zip(&counts) {
            assert!((s.hours - f as f64 / 36_000.0).abs() < 1e-9);
        }
        assert!((r.retention_pct - 39.8).abs() <= 0.1, "{}", r.retention_pct);
        assert!(r.is_monotone());
        assert!(r.to_text().contains("retention: 39.8%"));
    }

    #[test]
    fn curated_set_box_coverage() {
        // 528 windows over 464,035 frames carrying 300,132 single-box frames
        let mut snap = windows("final", 528, 464_035);
        let total_boxes = 300_132u64;
        let mut assigned = 0u64;
        let mut frames_seen = 0u64;
        for w in &mut snap.windows {
            frames_seen += w.window.len();
            let target = (total_boxes as u128 * frames_seen as u128 / 464_035) as u64;
            let k = target - assigned;
            assigned = target;
            w.boxes = (w.window.start_frame..w.window.start_frame + k)
                .map(|f| BoxAnnotation::new(f, 0.0, 0.0, 1.0, 1.0, "x"))
                .collect();
        }
        let r = funnel_report(&[snap], None, None);
        assert_eq!(r.stages[0].bboxes, 300_132);
        assert!((r.final_bbox_coverage_pct - 64.7).abs() <= 0.05, "{}", r.final_bbox_coverage_pct);
    }

    #[test]
    fn temporal_metrics_respect_boxes_only() {
        let gt = SurrogateLabels {
            positives: GtFrames::from_intervals([("seq", 10, 19)]),
            total_frames: [("seq".to_string(), 100)].into(),
        };
        let mut a = AnnotatedWindow::new(VideoWindow::new("w", "seq", 0, 29));
        a.boxes = (10..20).map(|f| BoxAnnotation::new(f, 0.0, 0.0, 1.0, 1.0, "x")).collect();
        let mut snap = StageSnapshot::new("verified", vec![a]);
        let plain = stage_stats(&snap, 10.0, Some(&gt)).temporal.unwrap();
        snap.boxes_only = true;
        let boxed = stage_stats(&snap, 10.0, Some(&gt)).temporal.unwrap();
        assert!((plain.precision - 100.0 / 3.0).abs() < 1e-9);
        assert_eq!(boxed.precision, 100.0);
    }
}
