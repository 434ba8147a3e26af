use serde::{Deserialize, Serialize};

use super::{f1_score, ratio};
use crate::model::BoxAnnotation;

/// Intersection over union of two axis-aligned boxes.
pub fn box_iou(a: &BoxAnnotation, b: &BoxAnnotation) -> f64 {
    let iw = (a.right().min(b.right()) - a.x.max(b.x)).max(0.0);
    let ih = (a.bottom().min(b.bottom()) - a.y.max(b.y)).max(0.0);
    let inter = iw * ih;
    if inter <= 0.0 {
        return 0.0;
    }
    let union = a.area() + b.area() - inter;
    (inter / union).clamp(0.0, 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatchedPair {
    pub pred: usize,
    pub gt: usize,
    pub iou: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct MatchResult {
    pub pairs: Vec<MatchedPair>,
    pub unmatched_preds: Vec<usize>,
    pub unmatched_gts: Vec<usize>,
}

/// Greedy one-to-one matching in descending IoU order.
///
/// Ties go to the lower `(pred, gt)` index pair. No pair below `iou_threshold`
/// is ever formed.
pub fn match_boxes(preds: &[BoxAnnotation], gts: &[BoxAnnotation], iou_threshold: f64) -> MatchResult {
    let mut candidates: Vec<MatchedPair> = preds
        .iter()
        .enumerate()
        .flat_map(|(p, pb)| {
            gts.iter().enumerate().filter_map(move |(g, gb)| {
                let iou = box_iou(pb, gb);
                (iou >= iou_threshold && iou > 0.0).then_some(MatchedPair { pred: p, gt: g, iou })
            })
        })
        .collect();
    candidates.sort_by(|a, b| {
        b.iou
            .total_cmp(&a.iou)
            .then(a.pred.cmp(&b.pred))
            .then(a.gt.cmp(&b.gt))
    });

    let mut pred_used = vec![false; preds.len()];
    let mut gt_used = vec![false; gts.len()];
    let mut pairs = Vec::new();
    for c in candidates {
        if !pred_used[c.pred] && !gt_used[c.gt] {
            pred_used[c.pred] = true;
            gt_used[c.gt] = true;
            pairs.push(c);
        }
    }
    let unused = |used: &[bool]| used.iter().enumerate().filter(|(_, u)| !**u).map(|(i, _)| i).collect();
    MatchResult {
        unmatched_preds: unused(&pred_used),
        unmatched_gts: unused(&gt_used),
        pairs,
    }
}

/// Predictions and ground truth for one frame.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct FrameDetections {
    pub preds: Vec<BoxAnnotation>,
    pub gts: Vec<BoxAnnotation>,
}

impl FrameDetections {
    pub fn new(preds: Vec<BoxAnnotation>, gts: Vec<BoxAnnotation>) -> Self {
        Self { preds, gts }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct DetectionScores {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// Mean IoU of matched pairs; 0 when there are none (see `miou_defined`).
    pub mean_matched_iou: f64,
    pub miou_defined: bool,
    pub matched: usize,
    pub predictions: usize,
    pub ground_truths: usize,
}

pub fn detection_prf(preds: &[BoxAnnotation], gts: &[BoxAnnotation], iou_threshold: f64) -> DetectionScores {
    pooled_prf(std::iter::once((preds, gts)), iou_threshold)
}

/// Pools match counts over frames before taking ratios.
pub fn detection_prf_frames(frames: &[FrameDetections], iou_threshold: f64) -> DetectionScores {
    pooled_prf(frames.iter().map(|f| (f.preds.as_slice(), f.gts.as_slice())), iou_threshold)
}

fn pooled_prf<'a>(
    frames: impl Iterator<Item = (&'a [BoxAnnotation], &'a [BoxAnnotation])>,
    iou_threshold: f64,
) -> DetectionScores {
    let (mut matched, mut n_pred, mut n_gt, mut iou_sum) = (0usize, 0usize, 0usize, 0.0f64);
    for (preds, gts) in frames {
        let m = match_boxes(preds, gts, iou_threshold);
        matched += m.pairs.len();
        iou_sum += m.pairs.iter().map(|p| p.iou).sum::<f64>();
        n_pred += preds.len();
        n_gt += gts.len();
    }
    let precision = ratio(matched as u64, n_pred as u64);
    let recall = ratio(matched as u64, n_gt as u64);
    DetectionScores {
        precision,
        recall,
        f1: f1_score(precision, recall),
        mean_matched_iou: if matched > 0 { iou_sum / matched as f64 } else { 0.0 },
        miou_defined: matched > 0,
        matched,
        predictions: n_pred,
        ground_truths: n_gt,
    }
}

/// All-point interpolated average precision for a single frame.
///
/// Missing confidences default to 1.0; ties keep input order.
pub fn average_precision(preds: &[BoxAnnotation], gts: &[BoxAnnotation], iou_threshold: f64) -> f64 {
    ap_impl(std::iter::once((preds, gts)), iou_threshold)
}

/// AP with one global confidence ranking across frames; matching stays per frame.
pub fn average_precision_frames(frames: &[FrameDetections], iou_threshold: f64) -> f64 {
    ap_impl(frames.iter().map(|f| (f.preds.as_slice(), f.gts.as_slice())), iou_threshold)
}

fn ap_impl<'a>(
    frames: impl Iterator<Item = (&'a [BoxAnnotation], &'a [BoxAnnotation])>,
    iou_threshold: f64,
) -> f64 {
    let frames: Vec<_> = frames.collect();
    let total_gts: usize = frames.iter().map(|(_, g)| g.len()).sum();
    if total_gts == 0 {
        return 0.0;
    }

    // (frame, pred index, confidence) in emission order, then stable-sorted.
    let mut ranked: Vec<(usize, usize, f64)> = frames
        .iter()
        .enumerate()
        .flat_map(|(f, (preds, _))| {
            preds
                .iter()
                .enumerate()
                .map(move |(i, p)| (f, i, p.confidence.unwrap_or(1.0)))
        })
        .collect();
    ranked.sort_by(|a, b| b.2.total_cmp(&a.2));

    let mut gt_used: Vec<Vec<bool>> = frames.iter().map(|(_, g)| vec![false; g.len()]).collect();
    let mut is_tp = Vec::with_capacity(ranked.len());
    for &(f, i, _) in &ranked {
        let (preds, gts) = frames[f];
        let mut best: Option<(usize, f64)> = None;
        for (g, gt) in gts.iter().enumerate() {
            if gt_used[f][g] {
                continue;
            }
            let iou = box_iou(&preds[i], gt);
            if iou >= iou_threshold && iou > 0.0 && best.is_none_or(|(_, b)| iou > b) {
                best = Some((g, iou));
            }
        }
        if let Some((g, _)) = best {
            gt_used[f][g] = true;
        }
        is_tp.push(best.is_some());
    }

    let mut precisions = Vec::with_capacity(is_tp.len());
    let mut tp = 0usize;
    for (k, &hit) in is_tp.iter().enumerate() {
        tp += hit as usize;
        precisions.push(tp as f64 / (k + 1) as f64);
    }
    // Precision envelope: max precision at any equal-or-higher recall.
    for k in (0..precisions.len().saturating_sub(1)).rev() {
        precisions[k] = precisions[k].max(precisions[k + 1]);
    }
    let step = 1.0 / total_gts as f64;
    is_tp
        .iter()
        .zip(&precisions)
        .filter(|(hit, _)| **hit)
        .map(|(_, p)| p * step)
        .sum()
}

/// The ten IoU thresholds 0.50, 0.55, ..., 0.95.
pub fn map_thresholds() -> [f64; 10] {
    std::array::from_fn(|i| (50 + 5 * i) as f64 / 100.0)
}

pub fn map_range(preds: &[BoxAnnotation], gts: &[BoxAnnotation]) -> f64 {
    let t = map_thresholds();
    t.iter().map(|&thr| average_precision(preds, gts, thr)).sum::<f64>() / t.len() as f64
}

pub fn map_range_frames(frames: &[FrameDetections]) -> f64 {
    let t = map_thresholds();
    t.iter()
        .map(|&thr| average_precision_frames(frames, thr))
        .sum::<f64>()
        / t.len() as f64
}
