use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{
    average_precision_frames, classification_metrics, detection_prf_frames, map_range_frames, ClassPrediction,
    FrameDetections,
};
use crate::model::{BoxAnnotation, EvalRecord, Task};

/// One model's row of the combined results table, all in percent.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct LeaderboardRow {
    pub model_id: String,
    pub vqa_prompted: Option<f64>,
    pub vqa_unprompted: Option<f64>,
    pub cls_accuracy: Option<f64>,
    pub cls_precision: Option<f64>,
    pub cls_recall: Option<f64>,
    pub cls_f1: Option<f64>,
    pub det_precision: Option<f64>,
    pub det_recall: Option<f64>,
    pub det_f1: Option<f64>,
    pub det_map50: Option<f64>,
    pub det_map50_95: Option<f64>,
    pub seg_miou: Option<f64>,
    pub seg_mdice: Option<f64>,
}

impl LeaderboardRow {
    fn cells(&self) -> [Option<f64>; 13] {
        [
            self.vqa_prompted,
            self.vqa_unprompted,
            self.cls_accuracy,
            self.cls_precision,
            self.cls_recall,
            self.cls_f1,
            self.det_precision,
            self.det_recall,
            self.det_f1,
            self.det_map50,
            self.det_map50_95,
            self.seg_miou,
            self.seg_mdice,
        ]
    }
}

const COLUMNS: [&str; 14] = [
    "model", "vqa_p", "vqa_u", "cls_acc", "cls_p", "cls_r", "cls_f1", "det_p", "det_r", "det_f1", "map50", "map50_95",
    "miou", "mdice",
];

fn parse_boxes(v: &serde_json::Value) -> Result<Vec<BoxAnnotation>> {
    Ok(serde_json::from_value(v.clone())?)
}

/// Rebuilds every score from raw records, one row per model.
pub fn leaderboard(records: &[EvalRecord]) -> Result<Vec<LeaderboardRow>> {
    let mut by_model: BTreeMap<&str, Vec<&EvalRecord>> = BTreeMap::new();
    for r in records {
        by_model.entry(r.model_id.as_str()).or_default().push(r);
    }
    let mut rows = Vec::new();
    for (model, recs) in by_model {
        let mut row = LeaderboardRow {
            model_id: model.to_string(),
            ..LeaderboardRow::default()
        };
        let of = |t: Task| recs.iter().filter(move |r| r.task == t).copied();
        let acc = |t: Task| {
            let v: Vec<&EvalRecord> = of(t).collect();
            (!v.is_empty()).then(|| 100.0 * v.iter().filter(|r| r.correct == Some(true)).count() as f64 / v.len() as f64)
        };
        row.vqa_prompted = acc(Task::VqaPrompted);
        row.vqa_unprompted = acc(Task::VqaUnprompted);

        let cls: Vec<&EvalRecord> = of(Task::Classification).collect();
        if !cls.is_empty() {
            let mut preds = BTreeMap::new();
            let mut labels = BTreeMap::new();
            for r in &cls {
                let truth = r.prediction["truth"]
                    .as_bool()
                    .ok_or_else(|| Error::Parse(format!("classification record {} lacks truth", r.item_id)))?;
                let pred = match r.prediction["label"].as_str() {
                    Some("positive") => ClassPrediction::Positive,
                    Some("negative") => ClassPrediction::Negative,
                    _ => ClassPrediction::Unevaluated,
                };
                labels.insert(r.item_id.clone(), truth);
                preds.insert(r.item_id.clone(), pred);
            }
            let [a, p, rc, f] = classification_metrics(&preds, &labels)?.percent();
            (row.cls_accuracy, row.cls_precision, row.cls_recall, row.cls_f1) = (Some(a), Some(p), Some(rc), Some(f));
        }

        let det: Vec<&EvalRecord> = of(Task::Detection).collect();
        if !det.is_empty() {
            let frames = det
                .iter()
                .map(|r| Ok(FrameDetections::new(parse_boxes(&r.prediction["preds"])?, parse_boxes(&r.prediction["gts"])?)))
                .collect::<Result<Vec<_>>>()?;
            let s = detection_prf_frames(&frames, 0.5);
            row.det_precision = Some(100.0 * s.precision);
            row.det_recall = Some(100.0 * s.recall);
            row.det_f1 = Some(100.0 * s.f1);
            row.det_map50 = Some(100.0 * average_precision_frames(&frames, 0.5));
            row.det_map50_95 = Some(100.0 * map_range_frames(&frames));
        }

        let seg: Vec<&EvalRecord> = of(Task::Segmentation).collect();
        if !seg.is_empty() {
            let sum = |k: &str| seg.iter().map(|r| r.metrics.get(k).copied().unwrap_or(0.0)).sum::<f64>();
            let n = sum("frames");
            let mean = |k: &str| if n == 0.0 { 0.0 } else { 100.0 * sum(k) / n };
            row.seg_miou = Some(mean("iou_sum"));
            row.seg_mdice = Some(mean("dice_sum"));
        }
        rows.push(row);
    }
    Ok(rows)
}

fn cell(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |x| format!("{x:.1}"))
}

pub fn leaderboard_table(rows: &[LeaderboardRow]) -> String {
    let mut out = format!("{:<24}", COLUMNS[0]);
    for c in &COLUMNS[1..] {
        let _ = write!(out, " {c:>8}");
    }
    out.push('\n');
    for r in rows {
        let _ = write!(out, "{:<24}", r.model_id);
        for v in r.cells() {
            let _ = write!(out, " {:>8}", cell(v));
        }
        out.push('\n');
    }
    out
}

pub fn leaderboard_csv(rows: &[LeaderboardRow]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let csv_err = |e: csv::Error| Error::Parse(e.to_string());
    w.write_record(COLUMNS).map_err(csv_err)?;
    for r in rows {
        let mut rec = vec![r.model_id.clone()];
        rec.extend(r.cells().into_iter().map(|v| v.map_or_else(String::new, |x| format!("{x:.1}"))));
        w.write_record(rec).map_err(csv_err)?;
    }
    String::from_utf8(w.into_inner().map_err(|e| Error::Parse(e.to_string()))?).map_err(|e| Error::Parse(e.to_string()))
}

pub fn write_records(path: &Path, records: &[EvalRecord]) -> Result<()> {
    crate::io::write_jsonl(path, records)
}

pub fn read_records(path: &Path) -> Result<Vec<EvalRecord>> {
    crate::io::read_jsonl(path)
}

#[cfg(test)]
mod tests {
    use serde_json::json;

    use super::*;

    fn rec(task: Task, item: &str, prediction: serde_json::Value, correct: Option<bool>) -> EvalRecord {
        EvalRecord {
            model_id: "m".into(),
            task,
            item_id: item.into(),
            prediction,
            correct,
            metrics: BTreeMap::new(),
        }
    }

    #[test]
    fn all_positive_classifier_row() {
        let recs: Vec<EvalRecord> = (0..790)
            .map(|i| {
                let truth = i < 272;
                rec(Task::Classification, &format!("c{i}"), json!({"label": "positive", "truth": truth}), Some(truth))
            })
            .collect();
        let rows = leaderboard(&recs).unwrap();
        let r = &rows[0];
        assert!((r.cls_accuracy.unwrap() - 34.43).abs() < 0.01);
        assert!((r.cls_f1.unwrap() - 51.22).abs() < 0.01);
        assert!(r.vqa_prompted.is_none());
        let csv = leaderboard_csv(&rows).unwrap();
        assert!(csv.lines().nth(1).unwrap().starts_with("m,,,34.4,34.4,100.0,51.2"));
        assert!(leaderboard_table(&rows).contains("51.2"));
    }

    #[test]
    fn detection_rows_from_payloads() {
        let b = BoxAnnotation::new(3, 0.0, 0.0, 4.0, 4.0, "x");
        let recs = vec![rec(Task::Detection, "c@3", json!({"preds": [b.clone()], "gts": [b]}), None)];
        let r = &leaderboard(&recs).unwrap()[0];
        assert_eq!(r.det_f1, Some(100.0));
        assert_eq!(r.det_map50_95, Some(100.0));
    }
}
