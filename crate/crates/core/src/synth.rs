//! Synthetic procedure videos with planted lesions.
//!
//! A [`PlantedTruth`] is the ground truth behind every desk-scale run: the
//! mock agents consult it to decide verdicts and emit boxes, and the metrics
//! score against it. No pixels are involved.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::metrics::GtFrames;
use crate::model::{BoxAnnotation, FrameSize, MaskTracklet, Stage, VideoRef, VideoWindow};
use crate::pipeline::{AnnotatedWindow, LabelInterval, SurrogateLabels};
use crate::rle::Mask;

/// Box geometry as `(x, y, w, h)`.
pub type Rect = (f64, f64, f64, f64);

/// One lesion visible over `[start_frame, end_frame]`, moving from
/// `start_box` to `end_box`. Progress along the path is `u^easing` for
/// normalized time `u`, so `easing = 1` is linear motion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LesionTrack {
    pub lesion_id: String,
    pub sequence_id: String,
    pub start_frame: u64,
    pub end_frame: u64,
    pub category: String,
    pub description: String,
    pub start_box: Rect,
    pub end_box: Rect,
    #[serde(default = "one")]
    pub easing: f64,
}

fn one() -> f64 {
    1.0
}

impl LesionTrack {
    pub fn is_active(&self, frame: u64) -> bool {
        (self.start_frame..=self.end_frame).contains(&frame)
    }

    pub fn box_at(&self, frame: u64) -> Option<BoxAnnotation> {
        if !self.is_active(frame) {
            return None;
        }
        let span = (self.end_frame - self.start_frame) as f64;
        let u = if span == 0.0 { 0.0 } else { (frame - self.start_frame) as f64 / span };
        let t = u.powf(self.easing);
        let lerp = |a: f64, b: f64| a + (b - a) * t;
        let (a, b) = (self.start_box, self.end_box);
        Some(BoxAnnotation::new(
            frame,
            lerp(a.0, b.0),
            lerp(a.1, b.1),
            lerp(a.2, b.2),
            lerp(a.3, b.3),
            self.category.clone(),
        ))
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct PlantedTruth {
    pub sequences: Vec<VideoRef>,
    pub lesions: Vec<LesionTrack>,
}

impl PlantedTruth {
    pub fn sequence(&self, sequence_id: &str) -> Option<&VideoRef> {
        self.sequences.iter().find(|s| s.sequence_id == sequence_id)
    }

    pub fn frame_size(&self, sequence_id: &str) -> Option<FrameSize> {
        self.sequence(sequence_id).map(|s| s.frame_size)
    }

    pub fn lesions_in<'a>(&'a self, sequence_id: &'a str) -> impl Iterator<Item = &'a LesionTrack> + 'a {
        self.lesions.iter().filter(move |l| l.sequence_id == sequence_id)
    }

    pub fn overlaps(&self, sequence_id: &str, start: u64, end: u64) -> bool {
        self.lesions_in(sequence_id)
            .any(|l| l.start_frame <= end && start <= l.end_frame)
    }

    /// Lesions overlapping `[start, end]`.
    pub fn lesions_overlapping<'a>(
        &'a self,
        sequence_id: &'a str,
        start: u64,
        end: u64,
    ) -> impl Iterator<Item = &'a LesionTrack> + 'a {
        self.lesions_in(sequence_id)
            .filter(move |l| l.start_frame <= end && start <= l.end_frame)
    }

    pub fn boxes_at(&self, sequence_id: &str, frame: u64) -> Vec<BoxAnnotation> {
        self.lesions_in(sequence_id).filter_map(|l| l.box_at(frame)).collect()
    }

    pub fn mask_at(&self, sequence_id: &str, frame: u64) -> Option<Mask> {
        let size = self.frame_size(sequence_id)?;
        Some(Mask::from_boxes(size, &self.boxes_at(sequence_id, frame)))
    }

    pub fn gt_frames(&self) -> GtFrames {
        GtFrames::from_intervals(
            self.lesions
                .iter()
                .map(|l| (l.sequence_id.clone(), l.start_frame, l.end_frame)),
        )
    }

    pub fn label_intervals(&self) -> Vec<LabelInterval> {
        self.lesions
            .iter()
            .map(|l| LabelInterval {
                sequence_id: l.sequence_id.clone(),
                start_frame: l.start_frame,
                end_frame: l.end_frame,
            })
            .collect()
    }

    /// Frame-level labels in the shape the funnel report scores against.
    pub fn surrogate_labels(&self) -> SurrogateLabels {
        SurrogateLabels {
            positives: self.gt_frames(),
            total_frames: self.total_frames(),
        }
    }

    /// One accepted window per lesion, carrying its exact box on every frame
    /// and the matching rasterized masks.
    pub fn curated_windows(&self) -> Vec<AnnotatedWindow> {
        self.lesions
            .iter()
            .map(|l| {
                let mut w = VideoWindow::new(&l.lesion_id, &l.sequence_id, l.start_frame, l.end_frame);
                w.stage = Stage::HumanAccepted;
                w.initial_desc = Some(l.description.clone());
                w.verified_desc = Some(l.description.clone());
                w.confirmation_note = Some(format!("Overlay tracks the {}.", l.category));
                let size = self.frame_size(&l.sequence_id).expect("lesion sequence exists");
                let boxes: Vec<BoxAnnotation> = (l.start_frame..=l.end_frame).filter_map(|f| l.box_at(f)).collect();
                let mut t = MaskTracklet::new(&l.lesion_id, size);
                for b in &boxes {
                    t.insert(b.frame_index, &Mask::from_boxes(size, [b])).expect("mask matches frame size");
                }
                AnnotatedWindow {
                    window: w,
                    boxes,
                    tracklet: Some(t),
                }
            })
            .collect()
    }

    pub fn total_frames(&self) -> BTreeMap<String, u64> {
        self.sequences
            .iter()
            .map(|s| (s.sequence_id.clone(), s.frame_count))
            .collect()
    }
}

/// Shape of a generated dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub sequences: usize,
    pub frames_per_sequence: u64,
    pub frame_size: FrameSize,
    pub lesions_per_sequence: usize,
    pub lesion_len: (u64, u64),
    /// Minimum number of lesion-free frames between consecutive lesions.
    pub min_gap: u64,
    pub easing: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            sequences: 4,
            frames_per_sequence: 6_000,
            frame_size: FrameSize::new(64, 48),
            lesions_per_sequence: 6,
            lesion_len: (40, 160),
            min_gap: 200,
            easing: 1.0,
            seed: 0,
        }
    }
}

/// Anatomical phrases appended to planted lesion descriptions.
pub const LOCATIONS: &[&str] = &[
    "on a haustral fold",
    "near the ileocecal valve",
    "in the sigmoid colon",
    "along the ascending colon",
    "at the hepatic flexure",
    "in the rectum",
];

/// Categories used for planted lesions; a subset of the shipped keyword map.
pub const SYNTH_CATEGORIES: &[&str] = &[
    "sessile polyp",
    "bleeding",
    "ulcer",
    "erythematous region",
    "pedunculated polyp",
    "lipoma",
    "erosion",
    "angioectasia",
    "diverticulum",
];

pub fn generate(cfg: &SynthConfig) -> PlantedTruth {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut truth = PlantedTruth::default();
    let (fw, fh) = (cfg.frame_size.width as f64, cfg.frame_size.height as f64);
    for s in 0..cfg.sequences {
        let sequence_id = format!("seq{s:03}");
        truth
            .sequences
            .push(VideoRef::new(&sequence_id, cfg.frames_per_sequence, cfg.frame_size));

        // lay lesions out left to right with random gaps
        let mut cursor = rng.random_range(0..=cfg.min_gap);
        for l in 0..cfg.lesions_per_sequence {
            let len = rng.random_range(cfg.lesion_len.0..=cfg.lesion_len.1);
            let start = cursor;
            let end = start + len - 1;
            if end >= cfg.frames_per_sequence {
                break;
            }
            cursor = end + 1 + cfg.min_gap + rng.random_range(0..=cfg.min_gap);

            let rect = |rng: &mut ChaCha8Rng| {
                let w = rng.random_range(0.15..0.35) * fw;
                let h = rng.random_range(0.15..0.35) * fh;
                let x = rng.random_range(0.0..fw - w);
                let y = rng.random_range(0.0..fh - h);
                (x, y, w, h)
            };
            let start_box = rect(&mut rng);
            let end_box = rect(&mut rng);
            let category = SYNTH_CATEGORIES[rng.random_range(0..SYNTH_CATEGORIES.len())];
            let location = LOCATIONS[rng.random_range(0..LOCATIONS.len())];
            truth.lesions.push(LesionTrack {
                lesion_id: format!("{sequence_id}-l{l:02}"),
                sequence_id: sequence_id.clone(),
                start_frame: start,
                end_frame: end,
                category: category.to_string(),
                description: format!("{category} {location}"),
                start_box,
                end_box,
                easing: cfg.easing,
            });
        }
    }
    truth
}
