//! Box, mask, detection and classification scores on hand-made inputs.

use std::collections::BTreeMap;

use lesion_funnel::metrics::{
    average_precision, box_iou, classification_metrics, map_range, mask_overlap, ClassPrediction,
};
use lesion_funnel::model::{BoxAnnotation, FrameSize};
use lesion_funnel::rle::{self, Mask};

fn main() -> lesion_funnel::Result<()> {
    let gt = BoxAnnotation::new(0, 10.0, 10.0, 20.0, 20.0, "polyp");
    let pred = BoxAnnotation::new(0, 15.0, 12.0, 20.0, 20.0, "polyp").with_confidence(0.8);
    println!("box IoU: {:.4}", box_iou(&pred, &gt));

    let size = FrameSize::new(64, 48);
    let (a, b) = (Mask::from_boxes(size, [&gt]), Mask::from_boxes(size, [&pred]));
    let o = mask_overlap(&a, &b)?;
    println!("mask IoU {:.4}, Dice {:.4}, rle `{}`", o.iou, o.dice, rle::encode(&a)?);

    let gts = vec![gt.clone(), BoxAnnotation::new(0, 40.0, 5.0, 10.0, 10.0, "polyp")];
    let preds = vec![pred, BoxAnnotation::new(0, 0.0, 30.0, 8.0, 8.0, "polyp").with_confidence(0.5)];
    println!("AP50 {:.4}, mAP50:95 {:.4}", average_precision(&preds, &gts, 0.5), map_range(&preds, &gts));

    // an all-positive classifier on an imbalanced set
    let labels: BTreeMap<String, bool> = (0..100).map(|i| (format!("clip{i}"), i < 30)).collect();
    let all_pos = labels.keys().map(|k| (k.clone(), ClassPrediction::Positive)).collect();
    let [acc, p, r, f1] = classification_metrics(&all_pos, &labels)?.percent();
    println!("all-positive: acc {acc:.1} precision {p:.1} recall {r:.1} f1 {f1:.1}");
    Ok(())
}
