use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{
    average_precision_frames, classification_metrics, detection_prf_frames, map_range_frames, mask_overlap, ratio,
    vqa_score, ClassPrediction, FrameDetections,
};
use crate::error::{Error, Result};
use crate::model::BoxAnnotation;
use crate::rle;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoreTask {
    Cls,
    Vqa,
    Det,
    Seg,
}

/// One line of a predictions or ground-truth file for `score`.
///
/// Classification predictions carry `label` (positive, negative or
/// unevaluated) and ground truth carries `positive`. VQA lines carry `answer`
/// (null when unanswered), detection lines `boxes` and segmentation lines an
/// RLE `mask`. Detection and segmentation items are single frames.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreLine {
    pub task: ScoreTask,
    pub item_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<ClassPrediction>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub positive: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub answer: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub boxes: Option<Vec<BoxAnnotation>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mask: Option<String>,
}

/// Rates in percent, named like the result tables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassificationReport {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub specificity: f64,
    pub total: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VqaReport {
    pub accuracy: f64,
    pub total: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionReport {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub ap50: f64,
    pub map50_95: f64,
    /// Predicted frames scored.
    pub frames: usize,
    /// Share of ground-truth frames that have a prediction line.
    pub coverage: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentationReport {
    pub miou: f64,
    pub mdice: f64,
    /// Frames with a non-empty ground-truth mask.
    pub frames: usize,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ScoreReport {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub classification: Option<ClassificationReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub vqa: Option<VqaReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub detection: Option<DetectionReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub segmentation: Option<SegmentationReport>,
}

fn by_task(lines: &[ScoreLine], task: ScoreTask) -> Result<BTreeMap<&str, &ScoreLine>> {
    let mut out = BTreeMap::new();
    for l in lines.iter().filter(|l| l.task == task) {
        if out.insert(l.item_id.as_str(), l).is_some() {
            return Err(Error::Parse(format!("duplicate {task:?} item `{}`", l.item_id)));
        }
    }
    Ok(out)
}

fn field<'a, T>(v: &'a Option<T>, line: &ScoreLine, name: &str) -> Result<&'a T> {
    v.as_ref()
        .ok_or_else(|| Error::Parse(format!("{:?} line `{}` lacks `{name}`", line.task, line.item_id)))
}

/// Scores every task that has ground truth. Predictions for items absent from
/// the ground truth are an error.
pub fn score_lines(preds: &[ScoreLine], gts: &[ScoreLine]) -> Result<ScoreReport> {
    let mut report = ScoreReport::default();
    for task in [ScoreTask::Cls, ScoreTask::Vqa, ScoreTask::Det, ScoreTask::Seg] {
        let gt = by_task(gts, task)?;
        let pr = by_task(preds, task)?;
        if let Some(id) = pr.keys().find(|k| !gt.contains_key(*k)) {
            return Err(Error::UnknownItem((*id).to_string()));
        }
        if gt.is_empty() {
            continue;
        }
        match task {
            ScoreTask::Cls => {
                let mut labels = BTreeMap::new();
                let mut predictions = BTreeMap::new();
                for (id, l) in &gt {
                    labels.insert(id.to_string(), *field(&l.positive, l, "positive")?);
                }
                for (id, l) in &pr {
                    predictions.insert(id.to_string(), *field(&l.label, l, "label")?);
                }
                let m = classification_metrics(&predictions, &labels)?;
                let negatives: Vec<&str> = labels.iter().filter(|(_, &p)| !p).map(|(k, _)| k.as_str()).collect();
                let tn = negatives
                    .iter()
                    .filter(|k| predictions.get(**k) == Some(&ClassPrediction::Negative))
                    .count();
                report.classification = Some(ClassificationReport {
                    accuracy: 100.0 * m.accuracy,
                    precision: 100.0 * m.precision,
                    recall: 100.0 * m.recall,
                    f1: 100.0 * m.f1,
                    specificity: 100.0 * ratio(tn as u64, negatives.len() as u64),
                    total: m.total,
                });
            }
            ScoreTask::Vqa => {
                let mut key = BTreeMap::new();
                for (id, l) in &gt {
                    key.insert(id.to_string(), *field(&l.answer, l, "answer")?);
                }
                let answers = pr.iter().map(|(id, l)| (id.to_string(), l.answer)).collect();
                report.vqa = Some(VqaReport {
                    accuracy: 100.0 * vqa_score(&answers, &key),
                    total: key.len(),
                });
            }
            ScoreTask::Det => {
                let mut frames = Vec::new();
                for (id, p) in &pr {
                    let g = gt[id];
                    frames.push(FrameDetections::new(
                        field(&p.boxes, p, "boxes")?.clone(),
                        field(&g.boxes, g, "boxes")?.clone(),
                    ));
                }
                let with_gt = gt.values().filter(|l| l.boxes.as_ref().is_some_and(|b| !b.is_empty()));
                let (covered, total) = with_gt.fold((0u64, 0u64), |(c, t), l| (c + u64::from(pr.contains_key(l.item_id.as_str())), t + 1));
                let s = detection_prf_frames(&frames, 0.5);
                report.detection = Some(DetectionReport {
                    precision: 100.0 * s.precision,
                    recall: 100.0 * s.recall,
                    f1: 100.0 * s.f1,
                    ap50: 100.0 * average_precision_frames(&frames, 0.5),
                    map50_95: 100.0 * map_range_frames(&frames),
                    frames: frames.len(),
                    coverage: 100.0 * ratio(covered, total),
                });
            }
            ScoreTask::Seg => {
                let (mut iou, mut dice, mut n) = (0.0, 0.0, 0usize);
                for (id, g) in &gt {
                    let gm = rle::decode(field(&g.mask, g, "mask")?)?;
                    if gm.is_empty() {
                        continue;
                    }
                    // a frame without a predicted mask scores zero
                    if let Some(p) = pr.get(id) {
                        let o = mask_overlap(&rle::decode(field(&p.mask, p, "mask")?)?, &gm)?;
                        iou += o.iou;
                        dice += o.dice;
                    }
                    n += 1;
                }
                let mean = |s: f64| if n == 0 { 0.0 } else { 100.0 * s / n as f64 };
                report.segmentation = Some(SegmentationReport {
                    miou: mean(iou),
                    mdice: mean(dice),
                    frames: n,
                });
            }
        }
    }
    Ok(report)
}
