use std::collections::BTreeMap;

use futures::future::join_all;
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{OverlayMode, RunSpec, TemporalMode};
use crate::bench::{BenchClip, BenchManifest};
use crate::error::{Error, Result};
use crate::gateway::{AgentRequest, AgentResponse, AgentRole, Gateway, MediaRef};
use crate::metrics::{
    average_precision_frames, classification_metrics, detection_prf_frames, map_range_frames, mask_overlap, vqa_score,
    ClassPrediction, ClassificationMetrics, DetectionScores, FrameDetections,
};
use crate::model::{BoxAnnotation, EvalRecord, McqItem, Task};
use crate::prompts::{format_options, PromptSet};
use crate::rle::Mask;
use crate::tracker::{equally_spaced_frames, propagate, PromptFrame, TrackPrompt, TrackerBackend, MAX_PROMPTS};

fn expect_task(manifest: &BenchManifest, ok: bool, what: &str) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(Error::Config(format!("{what} needs a matching manifest, got {:?}", manifest.task)))
    }
}

fn clip_media(clip: &BenchClip, spec: &RunSpec, overlay: bool) -> MediaRef {
    match spec.options.temporal_mode {
        TemporalMode::Video => MediaRef::clip(&clip.sequence_id, clip.start_frame, clip.end_frame, overlay),
        TemporalMode::SingleFrame => MediaRef::frame(&clip.sequence_id, clip.midpoint()),
    }
}

fn record(spec: &RunSpec, item_id: impl Into<String>, prediction: serde_json::Value) -> EvalRecord {
    EvalRecord {
        model_id: spec.model_id.clone(),
        task: spec.task,
        item_id: item_id.into(),
        prediction,
        correct: None,
        metrics: BTreeMap::new(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CategoryScore {
    pub correct: usize,
    pub total: usize,
    pub accuracy_pct: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VqaResult {
    pub accuracy_pct: f64,
    pub answered: usize,
    pub total: usize,
    pub per_category: BTreeMap<String, CategoryScore>,
    pub records: Vec<EvalRecord>,
}

/// One AnswerVqa call per question; failures and unparseable replies count
/// as unanswered, hence wrong.
pub async fn run_vqa(spec: &RunSpec, manifest: &BenchManifest, items: &[McqItem], gateway: &Gateway, prompts: &PromptSet) -> Result<VqaResult> {
    spec.validate()?;
    expect_task(manifest, manifest.task.is_vqa(), "run_vqa")?;
    let clips: BTreeMap<&str, &BenchClip> = manifest.clips.iter().map(|c| (c.clip_id.as_str(), c)).collect();
    let mut reqs = Vec::with_capacity(items.len());
    for item in items {
        let clip = clips.get(item.clip_id.as_str()).ok_or_else(|| Error::UnknownItem(item.clip_id.clone()))?;
        let prompt = prompts.render(
            AgentRole::AnswerVqa,
            &[("stem", &item.stem), ("options", &format_options(&item.options))],
        );
        reqs.push(
            AgentRequest::new(AgentRole::AnswerVqa, prompt)
                .with_media([clip_media(clip, spec, spec.options.overlay == OverlayMode::WithBox)])
                .with_context(spec.options.skill_context.clone())
                .with_seed(spec.seed)
                .with_item(&item.question_id),
        );
    }
    let replies = join_all(reqs.iter().map(|r| gateway.invoke(r))).await;

    let mut answers = BTreeMap::new();
    let mut key = BTreeMap::new();
    let mut records = Vec::with_capacity(items.len());
    let mut per_category: BTreeMap<String, (usize, usize)> = BTreeMap::new();
    for (item, reply) in items.iter().zip(replies) {
        let answer = match reply {
            Ok(AgentResponse::OptionIndex { index }) => index,
            _ => None,
        };
        let correct = answer == Some(item.answer_index);
        for cat in &clips[item.clip_id.as_str()].categories {
            let e = per_category.entry(cat.clone()).or_default();
            e.0 += usize::from(correct);
            e.1 += 1;
        }
        answers.insert(item.question_id.clone(), answer);
        key.insert(item.question_id.clone(), item.answer_index);
        let mut r = record(spec, &item.question_id, json!({ "answer": answer }));
        r.correct = Some(correct);
        records.push(r);
    }
    Ok(VqaResult {
        accuracy_pct: 100.0 * vqa_score(&answers, &key),
        answered: answers.values().filter(|a| a.is_some()).count(),
        total: items.len(),
        per_category: per_category
            .into_iter()
            .map(|(c, (k, n))| {
                let s = CategoryScore {
                    correct: k,
                    total: n,
                    accuracy_pct: 100.0 * k as f64 / n as f64,
                };
                (c, s)
            })
            .collect(),
        records,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassificationResult {
    /// Fractions in `[0, 1]`.
    pub metrics: ClassificationMetrics,
    pub records: Vec<EvalRecord>,
}

/// One Classify call per clip; failures are unevaluated and count as wrong.
pub async fn run_classification(spec: &RunSpec, manifest: &BenchManifest, gateway: &Gateway, prompts: &PromptSet) -> Result<ClassificationResult> {
    spec.validate()?;
    expect_task(manifest, manifest.task == Task::Classification, "run_classification")?;
    let prompt = prompts.render(AgentRole::Classify, &[]);
    let reqs: Vec<AgentRequest> = manifest
        .clips
        .iter()
        .map(|c| {
            AgentRequest::new(AgentRole::Classify, prompt.clone())
                .with_media([clip_media(c, spec, false)])
                .with_seed(spec.seed)
                .with_item(&c.clip_id)
        })
        .collect();
    let replies = join_all(reqs.iter().map(|r| gateway.invoke(r))).await;
    let mut preds = BTreeMap::new();
    let mut records = Vec::new();
    for (clip, reply) in manifest.clips.iter().zip(replies) {
        let pred = match reply {
            Ok(AgentResponse::Classification { lesion_present: true }) => ClassPrediction::Positive,
            Ok(AgentResponse::Classification { lesion_present: false }) => ClassPrediction::Negative,
            _ => ClassPrediction::Unevaluated,
        };
        let label = manifest.labels.get(&clip.clip_id).copied().unwrap_or(clip.lesion);
        let name = match pred {
            ClassPrediction::Positive => "positive",
            ClassPrediction::Negative => "negative",
            ClassPrediction::Unevaluated => "unevaluated",
        };
        let mut r = record(spec, &clip.clip_id, json!({ "label": name, "truth": label }));
        r.correct = Some(matches!((pred, label), (ClassPrediction::Positive, true) | (ClassPrediction::Negative, false)));
        records.push(r);
        preds.insert(clip.clip_id.clone(), pred);
    }
    let labels: BTreeMap<String, bool> = manifest
        .clips
        .iter()
        .map(|c| (c.clip_id.clone(), manifest.labels.get(&c.clip_id).copied().unwrap_or(c.lesion)))
        .collect();
    Ok(ClassificationResult {
        metrics: classification_metrics(&preds, &labels)?,
        records,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionResult {
    /// Pooled scores at IoU 0.50, as fractions.
    pub scores: DetectionScores,
    pub ap50: f64,
    pub map50_95: f64,
    /// Predicted boxes per clip and queried frame.
    pub predictions: BTreeMap<String, BTreeMap<u64, Vec<BoxAnnotation>>>,
    pub failed_frames: usize,
    pub records: Vec<EvalRecord>,
}

/// Detect calls on `k` equally spaced frames per clip, scored against the
/// ground-truth boxes of those frames.
pub async fn run_detection(spec: &RunSpec, manifest: &BenchManifest, gateway: &Gateway, prompts: &PromptSet) -> Result<DetectionResult> {
    spec.validate()?;
    expect_task(
        manifest,
        matches!(manifest.task, Task::Detection | Task::Segmentation),
        "run_detection",
    )?;
    let mut jobs = Vec::new();
    for clip in &manifest.clips {
        let k = spec.options.frames_per_window.min(clip.len() as usize);
        let target = clip.description.as_deref().unwrap_or("lesion");
        let prompt = prompts.render(AgentRole::Detect, &[("target", target)]);
        for f in equally_spaced_frames(clip.start_frame, clip.end_frame, k)? {
            let req = AgentRequest::new(AgentRole::Detect, prompt.clone())
                .with_media([MediaRef::frame(&clip.sequence_id, f)])
                .with_seed(spec.seed)
                .with_item(format!("{}@{f}", clip.clip_id));
            jobs.push((clip, f, req));
        }
    }
    let replies = join_all(jobs.iter().map(|(_, _, r)| gateway.invoke(r))).await;

    let mut predictions: BTreeMap<String, BTreeMap<u64, Vec<BoxAnnotation>>> = BTreeMap::new();
    let mut frames = Vec::with_capacity(jobs.len());
    let mut records = Vec::with_capacity(jobs.len());
    let mut failed_frames = 0;
    for ((clip, f, _), reply) in jobs.iter().zip(replies) {
        let (preds, failed) = match reply {
            Ok(AgentResponse::Boxes { boxes }) => (
                boxes
                    .into_iter()
                    .filter_map(|b| BoxAnnotation { frame_index: *f, ..b }.clamped(clip.frame_size))
                    .collect::<Vec<_>>(),
                false,
            ),
            _ => (Vec::new(), true),
        };
        failed_frames += usize::from(failed);
        let gts: Vec<BoxAnnotation> = manifest
            .gt_boxes
            .get(&clip.clip_id)
            .map(|bs| bs.iter().filter(|b| b.frame_index == *f).cloned().collect())
            .unwrap_or_default();
        let s = detection_prf_frames(&[FrameDetections::new(preds.clone(), gts.clone())], 0.5);
        let mut r = record(spec, format!("{}@{f}", clip.clip_id), json!({ "preds": preds, "gts": gts }));
        r.metrics.insert("tp".into(), s.matched as f64);
        r.metrics.insert("fp".into(), (s.predictions - s.matched) as f64);
        r.metrics.insert("fn".into(), (s.ground_truths - s.matched) as f64);
        r.metrics.insert("failed".into(), f64::from(u8::from(failed)));
        records.push(r);
        predictions.entry(clip.clip_id.clone()).or_default().insert(*f, preds.clone());
        frames.push(FrameDetections::new(preds, gts));
    }
    Ok(DetectionResult {
        scores: detection_prf_frames(&frames, 0.5),
        ap50: average_precision_frames(&frames, 0.5),
        map50_95: map_range_frames(&frames),
        predictions,
        failed_frames,
        records,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClipSegmentation {
    pub frames: usize,
    pub iou_sum: f64,
    pub dice_sum: f64,
    /// No detection was available to prompt the tracker.
    pub missing_prompt: bool,
    pub gap_frames: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentationResult {
    /// Means over every evaluated frame, as fractions.
    pub miou: f64,
    pub mdice: f64,
    pub frames: usize,
    pub per_clip: BTreeMap<String, ClipSegmentation>,
    pub records: Vec<EvalRecord>,
}

fn best_box(boxes: &[BoxAnnotation]) -> Option<&BoxAnnotation> {
    boxes
        .iter()
        .enumerate()
        .max_by(|(i, a), (j, b)| {
            let (ca, cb) = (a.confidence.unwrap_or(1.0), b.confidence.unwrap_or(1.0));
            ca.total_cmp(&cb).then(j.cmp(i))
        })
        .map(|(_, b)| b)
}

/// Prompts the tracker with the most confident box on each detection frame
/// and scores the propagated masks on every ground-truth mask frame.
pub async fn run_segmentation(
    spec: &RunSpec,
    manifest: &BenchManifest,
    detections: &DetectionResult,
    tracker: &dyn TrackerBackend,
) -> Result<SegmentationResult> {
    expect_task(manifest, manifest.task == Task::Segmentation, "run_segmentation")?;
    let mut per_clip = BTreeMap::new();
    let mut records = Vec::new();
    let (mut iou_total, mut dice_total, mut n_total) = (0.0, 0.0, 0usize);
    for clip in &manifest.clips {
        let Some(gt) = manifest.gt_masks.get(&clip.clip_id) else {
            continue;
        };
        let prompts: Vec<PromptFrame> = detections
            .predictions
            .get(&clip.clip_id)
            .into_iter()
            .flatten()
            .filter_map(|(&f, bs)| {
                best_box(bs).map(|b| PromptFrame {
                    frame_index: f,
                    boxes: vec![b.clone()],
                })
            })
            .take(MAX_PROMPTS)
            .collect();
        let mut cs = ClipSegmentation {
            frames: gt.masks.len(),
            iou_sum: 0.0,
            dice_sum: 0.0,
            missing_prompt: prompts.is_empty(),
            gap_frames: 0,
        };
        if !prompts.is_empty() {
            let target_label = prompts[0].boxes[0].label.clone();
            let prompt = TrackPrompt {
                window_id: clip.clip_id.clone(),
                sequence_id: clip.sequence_id.clone(),
                start_frame: clip.start_frame,
                end_frame: clip.end_frame,
                frame_size: clip.frame_size,
                prompts,
                target_label,
            };
            let prop = propagate(&prompt, tracker).await?;
            cs.gap_frames = prop.gaps.len();
            for &f in gt.masks.keys() {
                let truth = gt.mask(f).expect("frame present")?;
                let pred = match prop.tracklet.mask(f) {
                    Some(m) => m?,
                    None => Mask::empty(clip.frame_size),
                };
                let o = mask_overlap(&pred, &truth)?;
                cs.iou_sum += o.iou;
                cs.dice_sum += o.dice;
            }
        }
        iou_total += cs.iou_sum;
        dice_total += cs.dice_sum;
        n_total += cs.frames;
        let mut r = record(spec, &clip.clip_id, json!({ "missing_prompt": cs.missing_prompt }));
        r.task = Task::Segmentation;
        r.metrics.insert("iou_sum".into(), cs.iou_sum);
        r.metrics.insert("dice_sum".into(), cs.dice_sum);
        r.metrics.insert("frames".into(), cs.frames as f64);
        records.push(r);
        per_clip.insert(clip.clip_id.clone(), cs);
    }
    let mean = |s: f64| if n_total == 0 { 0.0 } else { s / n_total as f64 };
    Ok(SegmentationResult {
        miou: mean(iou_total),
        mdice: mean(dice_total),
        frames: n_total,
        per_clip,
        records,
    })
}

#[cfg(test)]
mod tests {
    use std::collections::BTreeSet;
    use std::sync::Arc;

    use super::*;
    use crate::gateway::mock::{MockBackend, MockFailure, MockKnobs};
    use crate::gateway::{AgentClient, BackendConfig, RetryPolicy};
    use crate::model::FrameSize;

    fn manifest(task: Task, n: usize) -> BenchManifest {
        let clips: Vec<BenchClip> = (0..n)
            .map(|i| BenchClip {
                clip_id: format!("c{i}"),
                sequence_id: "s".into(),
                start_frame: i as u64 * 20,
                end_frame: i as u64 * 20 + 9,
                frame_size: FrameSize::new(32, 24),
                lesion: i % 2 == 0,
                categories: BTreeSet::new(),
                description: None,
            })
            .collect();
        let gt_boxes = clips
            .iter()
            .map(|c| {
                let boxes = (c.start_frame..=c.end_frame)
                    .map(|f| BoxAnnotation::new(f, 2.0, 2.0, 6.0, 6.0, "lesion"))
                    .collect();
                (c.clip_id.clone(), boxes)
            })
            .collect();
        BenchManifest {
            task,
            build_seed: 0,
            clips,
            labels: BTreeMap::new(),
            gt_boxes,
            gt_masks: BTreeMap::new(),
            question_ids: Vec::new(),
            excluded: Vec::new(),
            counts: BTreeMap::new(),
        }
    }

    fn down(role: AgentRole) -> Gateway {
        let backend = MockBackend::new()
            .behave(role, 0, MockKnobs::Failing(MockFailure::Timeout))
            .unwrap();
        let cfg = BackendConfig {
            retry: RetryPolicy {
                max_attempts: 1,
                base_backoff_ms: 0,
            },
            ..BackendConfig::mock("down")
        };
        Gateway::new().route_all(Arc::new(AgentClient::from_config(cfg, Some(backend)).unwrap()))
    }

    #[tokio::test]
    async fn unevaluated_clips_count_as_wrong() {
        let m = manifest(Task::Classification, 6);
        let spec = RunSpec::new("m", Task::Classification);
        let r = run_classification(&spec, &m, &down(AgentRole::Classify), &PromptSet::default())
            .await
            .unwrap();
        assert_eq!((r.metrics.evaluated, r.metrics.total), (0, 6));
        assert_eq!(r.metrics.accuracy, 0.0);
        assert!(r.records.iter().all(|rec| rec.correct == Some(false)));
    }

    #[tokio::test]
    async fn failed_detect_frames_are_empty_predictions() {
        let m = manifest(Task::Detection, 2);
        let spec = RunSpec::new("m", Task::Detection).with_frames(3);
        let r = run_detection(&spec, &m, &down(AgentRole::Detect), &PromptSet::default())
            .await
            .unwrap();
        assert_eq!(r.failed_frames, 6);
        assert_eq!((r.scores.recall, r.ap50), (0.0, 0.0));
        assert_eq!(r.predictions["c0"].keys().copied().collect::<Vec<_>>(), vec![0, 5, 9]);
    }

    #[tokio::test]
    async fn task_mismatch_is_rejected() {
        let m = manifest(Task::Detection, 1);
        let spec = RunSpec::new("m", Task::Classification);
        assert!(run_classification(&spec, &m, &down(AgentRole::Classify), &PromptSet::default())
            .await
            .is_err());
    }

    #[test]
    fn best_box_prefers_confidence_then_order() {
        let b = |x: f64, c: Option<f64>| BoxAnnotation {
            confidence: c,
            ..BoxAnnotation::new(0, x, 0.0, 1.0, 1.0, "l")
        };
        assert_eq!(best_box(&[b(0.0, Some(0.2)), b(1.0, Some(0.9))]).unwrap().x, 1.0);
        // a missing confidence counts as 1.0; ties keep the first box
        assert_eq!(best_box(&[b(0.0, None), b(1.0, Some(1.0))]).unwrap().x, 0.0);
        assert!(best_box(&[]).is_none());
    }
}
