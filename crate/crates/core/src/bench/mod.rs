//! Benchmark assembly from curated windows: lesion categories, the
//! classification split with sampled negatives, detection and segmentation
//! splits, and the two VQA splits with question generation and debiasing.

mod mcq;

use std::collections::{BTreeMap, BTreeSet};

use rand::Rng;
use regex::Regex;
use serde::{Deserialize, Serialize};

pub use mcq::{
    audit_blind,
    build_vqa_split, debias_questions, generate_mcqs, shuffle_options, BlindAudit, BlindEntry, DebiasOutcome,
    VqaBuild, QUESTIONS_PER_CLIP,
};

use crate::error::{Error, Result};
use crate::gateway::mock::stream;
use crate::model::{BoxAnnotation, FrameSize, MaskTracklet, Task, VideoRef};
use crate::pipeline::AnnotatedWindow;
use crate::rle::{encode, Mask};

/// Negatives per positive in the classification split (518 : 272).
pub const NEGATIVE_RATIO: f64 = 518.0 / 272.0;

const BUILTIN_KEYWORDS: &str = include_str!("../../fixtures/keyword_map.json");

/// Case-insensitive whole-word matcher from category to keyword list.
#[derive(Debug, Clone)]
pub struct KeywordMatcher {
    patterns: Vec<(String, Regex)>,
}

impl KeywordMatcher {
    pub fn new(map: &BTreeMap<String, Vec<String>>) -> Result<Self> {
        if map.is_empty() {
            return Err(Error::Config("keyword map is empty".into()));
        }
        let mut patterns = Vec::with_capacity(map.len());
        for (category, words) in map {
            let words: Vec<String> = words.iter().filter(|w| !w.trim().is_empty()).map(|w| regex::escape(w.trim())).collect();
            if words.is_empty() {
                return Err(Error::Config(format!("category `{category}` has no keywords")));
            }
            let re = Regex::new(&format!(r"(?i)\b(?:{})\b", words.join("|")))
                .map_err(|e| Error::Config(format!("category `{category}`: {e}")))?;
            patterns.push((category.clone(), re));
        }
        Ok(Self { patterns })
    }

    /// The shipped 14-category map.
    pub fn builtin() -> Self {
        let map: BTreeMap<String, Vec<String>> = serde_json::from_str(BUILTIN_KEYWORDS).expect("builtin keyword map parses");
        Self::new(&map).expect("builtin keyword map is valid")
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        Self::new(&crate::io::read_json(path)?)
    }

    pub fn categories(&self) -> impl Iterator<Item = &str> {
        self.patterns.iter().map(|(c, _)| c.as_str())
    }

    pub fn categorize<S: AsRef<str>>(&self, texts: &[S]) -> BTreeSet<String> {
        let joined = texts.iter().map(AsRef::as_ref).collect::<Vec<_>>().join("\n");
        self.patterns
            .iter()
            .filter(|(_, re)| re.is_match(&joined))
            .map(|(c, _)| c.clone())
            .collect()
    }
}

/// Multi-label categories of a window's text fields.
pub fn categorize_lesions<S: AsRef<str>>(texts: &[S], keyword_map: &BTreeMap<String, Vec<String>>) -> Result<BTreeSet<String>> {
    Ok(KeywordMatcher::new(keyword_map)?.categorize(texts))
}

/// One benchmark clip: a frame span of one sequence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchClip {
    pub clip_id: String,
    pub sequence_id: String,
    pub start_frame: u64,
    pub end_frame: u64,
    pub frame_size: FrameSize,
    pub lesion: bool,
    #[serde(default)]
    pub categories: BTreeSet<String>,
    #[serde(default)]
    pub description: Option<String>,
}

impl BenchClip {
    pub fn len(&self) -> u64 {
        self.end_frame - self.start_frame + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn midpoint(&self) -> u64 {
        self.start_frame + (self.end_frame - self.start_frame) / 2
    }

    /// A positive clip from a curated window, categorized from its texts.
    pub fn from_window(w: &AnnotatedWindow, frame_size: FrameSize, matcher: &KeywordMatcher) -> Self {
        let texts: Vec<&str> = w.window.texts().collect();
        let description = w
            .window
            .verified_desc
            .clone()
            .or_else(|| w.window.initial_desc.clone())
            .filter(|d| !d.trim().is_empty());
        Self {
            clip_id: w.id().to_string(),
            sequence_id: w.window.sequence_id.clone(),
            start_frame: w.window.start_frame,
            end_frame: w.window.end_frame,
            frame_size,
            lesion: true,
            categories: matcher.categorize(&texts),
            description,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExcludedClip {
    pub clip_id: String,
    pub reason: String,
}

/// Everything one task needs, keyed by clip id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchManifest {
    pub task: Task,
    pub build_seed: u64,
    pub clips: Vec<BenchClip>,
    /// Classification labels.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub labels: BTreeMap<String, bool>,
    /// Ground-truth boxes for detection and segmentation.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub gt_boxes: BTreeMap<String, Vec<BoxAnnotation>>,
    /// Ground-truth masks for segmentation.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub gt_masks: BTreeMap<String, MaskTracklet>,
    /// VQA question ids, in item order.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub question_ids: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub excluded: Vec<ExcludedClip>,
    pub counts: BTreeMap<String, u64>,
}

impl BenchManifest {
    fn new(task: Task, build_seed: u64, clips: Vec<BenchClip>) -> Self {
        Self {
            task,
            build_seed,
            clips,
            labels: BTreeMap::new(),
            gt_boxes: BTreeMap::new(),
            gt_masks: BTreeMap::new(),
            question_ids: Vec::new(),
            excluded: Vec::new(),
            counts: BTreeMap::new(),
        }
    }

    fn recount(&mut self) {
        let mut c = BTreeMap::new();
        c.insert("clips".to_string(), self.clips.len() as u64);
        c.insert("frames".to_string(), self.clips.iter().map(BenchClip::len).sum());
        match self.task {
            Task::Classification => {
                let pos = self.labels.values().filter(|l| **l).count() as u64;
                c.insert("positives".into(), pos);
                c.insert("negatives".into(), self.labels.len() as u64 - pos);
            }
            Task::Detection | Task::Segmentation => {
                c.insert("boxes".into(), self.gt_boxes.values().map(|b| b.len() as u64).sum());
                c.insert("masks".into(), self.gt_masks.values().map(|t| t.masks.len() as u64).sum());
            }
            Task::VqaPrompted | Task::VqaUnprompted => {
                c.insert("questions".into(), self.question_ids.len() as u64);
                c.insert("excluded_clips".into(), self.excluded.len() as u64);
            }
        }
        self.counts = c;
    }

    pub fn clip(&self, clip_id: &str) -> Option<&BenchClip> {
        self.clips.iter().find(|c| c.clip_id == clip_id)
    }

    pub fn clip_ids(&self) -> Vec<&str> {
        self.clips.iter().map(|c| c.clip_id.as_str()).collect()
    }

    /// Unique clip ids and payloads consistent with the counts summary.
    pub fn validate(&self) -> Result<()> {
        let mut seen = BTreeSet::new();
        for c in &self.clips {
            if !seen.insert(c.clip_id.as_str()) {
                return Err(Error::Build(format!("duplicate clip id {}", c.clip_id)));
            }
        }
        let mut copy = self.clone();
        copy.recount();
        if copy.counts != self.counts {
            return Err(Error::Build(format!("counts {:?} do not match payload {:?}", self.counts, copy.counts)));
        }
        if let Some(k) = self.labels.keys().chain(self.gt_boxes.keys()).find(|k| !seen.contains(k.as_str())) {
            return Err(Error::Build(format!("payload for unknown clip {k}")));
        }
        Ok(())
    }

    /// Pretty JSON with a trailing newline; stable for a given build.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serializes") + "\n"
    }
}

fn frame_sizes(sequences: &[VideoRef]) -> BTreeMap<&str, FrameSize> {
    sequences.iter().map(|s| (s.sequence_id.as_str(), s.frame_size)).collect()
}

/// Positive clips for every curated window whose sequence is known.
pub fn clips_from_windows(windows: &[AnnotatedWindow], sequences: &[VideoRef], matcher: &KeywordMatcher) -> Result<Vec<BenchClip>> {
    let sizes = frame_sizes(sequences);
    windows
        .iter()
        .map(|w| {
            let size = sizes
                .get(w.window.sequence_id.as_str())
                .ok_or_else(|| Error::UnknownItem(w.window.sequence_id.clone()))?;
            Ok(BenchClip::from_window(w, *size, matcher))
        })
        .collect()
}

/// Draws lesion-free spans from the footage left over after excluding every
/// candidate window.
#[derive(Debug, Clone)]
pub struct NegativeSampler {
    free: Vec<(String, u64, u64)>,
    sizes: BTreeMap<String, FrameSize>,
}

impl NegativeSampler {
    pub fn new<'a>(sequences: &[VideoRef], exclude: impl IntoIterator<Item = (&'a str, u64, u64)>) -> Self {
        let mut by_seq: BTreeMap<&str, Vec<(u64, u64)>> = BTreeMap::new();
        for (s, a, b) in exclude {
            by_seq.entry(s).or_default().push((a, b));
        }
        let mut free = Vec::new();
        for v in sequences {
            let mut spans = by_seq.remove(v.sequence_id.as_str()).unwrap_or_default();
            spans.sort_unstable();
            let mut cursor = 0u64;
            for (a, b) in spans {
                if a > cursor {
                    free.push((v.sequence_id.clone(), cursor, a - 1));
                }
                cursor = cursor.max(b + 1);
            }
            if cursor < v.frame_count {
                free.push((v.sequence_id.clone(), cursor, v.frame_count - 1));
            }
        }
        Self {
            free,
            sizes: sequences.iter().map(|s| (s.sequence_id.clone(), s.frame_size)).collect(),
        }
    }

    /// Excludes every window in `windows` from the footage of `sequences`.
    pub fn excluding(sequences: &[VideoRef], windows: &[AnnotatedWindow]) -> Self {
        Self::new(
            sequences,
            windows.iter().map(|w| (w.window.sequence_id.as_str(), w.window.start_frame, w.window.end_frame)),
        )
    }

    pub fn free_frames(&self) -> u64 {
        self.free.iter().map(|(_, a, b)| b - a + 1).sum()
    }

    /// `n` pairwise-disjoint spans whose lengths are drawn from `lengths`.
    pub fn sample(&self, lengths: &[u64], n: usize, rng: &mut impl Rng) -> Result<Vec<(String, u64, u64)>> {
        if lengths.is_empty() {
            return Err(Error::Build("no positive lengths to match".into()));
        }
        let mut free = self.free.clone();
        let mut out = Vec::with_capacity(n);
        for placed in 0..n {
            let len = lengths[rng.random_range(0..lengths.len())];
            // number of start positions each free span offers
            let slots: Vec<u64> = free
                .iter()
                .map(|(_, a, b)| (b - a + 1).saturating_sub(len - 1))
                .collect();
            let total: u64 = slots.iter().sum();
            if total == 0 {
                return Err(Error::Build(format!(
                    "negative sampling placed {placed} of {n} clips; no free span of {len} frames remains ({} free frames)",
                    free.iter().map(|(_, a, b)| b - a + 1).sum::<u64>()
                )));
            }
            let mut u = rng.random_range(0..total);
            let gi = slots
                .iter()
                .position(|&s| {
                    if u < s {
                        true
                    } else {
                        u -= s;
                        false
                    }
                })
                .expect("draw falls in a slot");
            let (seq, a, b) = free.remove(gi);
            let start = a + u;
            let end = start + len - 1;
            if end < b {
                free.insert(gi, (seq.clone(), end + 1, b));
            }
            if start > a {
                free.insert(gi, (seq.clone(), a, start - 1));
            }
            out.push((seq, start, end));
        }
        Ok(out)
    }
}

/// Positive clips plus length-matched negatives in the 518:272 ratio.
pub fn build_classification_split(positives: &[BenchClip], sampler: &NegativeSampler, seed: u64) -> Result<BenchManifest> {
    if positives.is_empty() {
        return Err(Error::Build("classification split needs at least one positive clip".into()));
    }
    let n_neg = (positives.len() as f64 * NEGATIVE_RATIO).round() as usize;
    let lengths: Vec<u64> = positives.iter().map(BenchClip::len).collect();
    let mut rng = stream(&[b"negatives", &seed.to_le_bytes()]);
    let spans = sampler.sample(&lengths, n_neg, &mut rng)?;
    let mut clips: Vec<BenchClip> = positives.iter().map(|c| BenchClip { lesion: true, ..c.clone() }).collect();
    for (i, (seq, s, e)) in spans.into_iter().enumerate() {
        let frame_size = sampler.sizes[&seq];
        clips.push(BenchClip {
            clip_id: format!("neg{i:05}"),
            sequence_id: seq,
            start_frame: s,
            end_frame: e,
            frame_size,
            lesion: false,
            categories: BTreeSet::new(),
            description: None,
        });
    }
    let mut m = BenchManifest::new(Task::Classification, seed, clips);
    m.labels = m.clips.iter().map(|c| (c.clip_id.clone(), c.lesion)).collect();
    m.recount();
    m.validate()?;
    Ok(m)
}

/// Curated windows with boxes; their boxes are the ground truth.
pub fn build_detection_split(windows: &[AnnotatedWindow], sequences: &[VideoRef], matcher: &KeywordMatcher, seed: u64) -> Result<BenchManifest> {
    let boxed: Vec<AnnotatedWindow> = windows.iter().filter(|w| !w.boxes.is_empty()).cloned().collect();
    let clips = clips_from_windows(&boxed, sequences, matcher)?;
    let mut m = BenchManifest::new(Task::Detection, seed, clips);
    m.gt_boxes = boxed.iter().map(|w| (w.id().to_string(), w.boxes.clone())).collect();
    m.recount();
    m.validate()?;
    Ok(m)
}

/// Detection clips plus per-frame masks: the window's tracklet when present,
/// else its boxes rasterized.
pub fn build_segmentation_split(windows: &[AnnotatedWindow], sequences: &[VideoRef], matcher: &KeywordMatcher, seed: u64) -> Result<BenchManifest> {
    let mut m = build_detection_split(windows, sequences, matcher, seed)?;
    m.task = Task::Segmentation;
    for w in windows.iter().filter(|w| !w.boxes.is_empty()) {
        let tracklet = match &w.tracklet {
            Some(t) if !t.masks.is_empty() => t.clone(),
            _ => {
                let size = m.clip(w.id()).expect("clip exists").frame_size;
                let mut by_frame: BTreeMap<u64, Vec<&BoxAnnotation>> = BTreeMap::new();
                for b in &w.boxes {
                    by_frame.entry(b.frame_index).or_default().push(b);
                }
                let mut t = MaskTracklet::new(w.id(), size);
                for (f, bs) in by_frame {
                    t.masks.insert(f, encode(&Mask::from_boxes(size, bs))?);
                }
                t
            }
        };
        m.gt_masks.insert(w.id().to_string(), tracklet);
    }
    m.recount();
    m.validate()?;
    Ok(m)
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;
    use crate::model::VideoWindow;

    #[test]
    fn keyword_examples() {
        let m = KeywordMatcher::builtin();
        assert_eq!(m.categories().count(), 14);
        assert_eq!(m.categorize(&["sessile polyp on a haustral fold"]), BTreeSet::from(["sessile polyp".to_string()]));
        assert!(m.categorize(&[""]).is_empty());
        assert_eq!(
            m.categorize(&["Bleeding near an ULCER"]),
            BTreeSet::from(["bleeding".to_string(), "ulcer".to_string()])
        );
        // whole words only
        assert!(m.categorize(&["massive lumen"]).is_empty());
        assert!(categorize_lesions(&["x"], &BTreeMap::new()).is_err());
    }

    fn seqs() -> Vec<VideoRef> {
        vec![VideoRef::new("s0", 1_000, FrameSize::new(32, 32)), VideoRef::new("s1", 500, FrameSize::new(32, 32))]
    }

    fn positives(n: usize) -> Vec<BenchClip> {
        (0..n)
            .map(|i| BenchClip {
                clip_id: format!("p{i}"),
                sequence_id: "s0".into(),
                start_frame: i as u64 * 100,
                end_frame: i as u64 * 100 + 19,
                frame_size: FrameSize::new(32, 32),
                lesion: true,
                categories: BTreeSet::new(),
                description: Some("ulcer".into()),
            })
            .collect()
    }

    #[test]
    fn two_positives_give_four_negatives() {
        let sampler = NegativeSampler::new(&seqs(), [("s0", 0, 19), ("s0", 100, 119)]);
        let m = build_classification_split(&positives(2), &sampler, 5).unwrap();
        assert_eq!(m.counts["positives"], 2);
        assert_eq!(m.counts["negatives"], 4);
        for c in m.clips.iter().filter(|c| !c.lesion) {
            assert_eq!(c.len(), 20);
        }
        assert_eq!(m.to_json(), build_classification_split(&positives(2), &sampler, 5).unwrap().to_json());
        assert!(build_classification_split(&[], &sampler, 5).is_err());
    }

    #[test]
    fn shortfall_is_reported() {
        let small = vec![VideoRef::new("s0", 60, FrameSize::new(8, 8))];
        let sampler = NegativeSampler::new(&small, [("s0", 0, 19)]);
        let err = build_classification_split(&positives(2), &sampler, 1).unwrap_err();
        assert!(err.to_string().contains("of 4 clips"), "{err}");
    }

    #[test]
    fn segmentation_split_rasterizes_boxes() {
        let mut w = AnnotatedWindow::new(VideoWindow::new("w", "s0", 10, 12));
        w.boxes = vec![BoxAnnotation::new(10, 0.0, 0.0, 4.0, 4.0, "ulcer"), BoxAnnotation::new(11, 1.0, 1.0, 4.0, 4.0, "ulcer")];
        let m = build_segmentation_split(&[w], &seqs(), &KeywordMatcher::builtin(), 0).unwrap();
        assert_eq!(m.counts["masks"], 2);
        assert_eq!(crate::rle::decode(&m.gt_masks["w"].masks[&10]).unwrap().area(), 16);
    }

    proptest! {
        #[test]
        fn negatives_disjoint_and_length_matched(
            seed in any::<u64>(),
            excl in prop::collection::vec((0u64..900, 1u64..80), 0..6),
            n in 1usize..6,
        ) {
            let sq = seqs();
            let exclude: Vec<(&str, u64, u64)> = excl.iter().map(|&(a, l)| ("s0", a, (a + l).min(999))).collect();
            let sampler = NegativeSampler::new(&sq, exclude.iter().copied());
            let pos = positives(n);
            if let Ok(m) = build_classification_split(&pos, &sampler, seed) {
                let negs: Vec<&BenchClip> = m.clips.iter().filter(|c| !c.lesion).collect();
                prop_assert_eq!(negs.len(), (n as f64 * NEGATIVE_RATIO).round() as usize);
                for (i, a) in negs.iter().enumerate() {
                    prop_assert_eq!(a.len(), 20);
                    prop_assert!(a.end_frame < sq.iter().find(|s| s.sequence_id == a.sequence_id).unwrap().frame_count);
                    for &(s, x, y) in &exclude {
                        prop_assert!(!(a.sequence_id == s && a.start_frame <= y && x <= a.end_frame));
                    }
                    for b in &negs[i + 1..] {
                        prop_assert!(!(a.sequence_id == b.sequence_id && a.start_frame <= b.end_frame && b.start_frame <= a.end_frame));
                    }
                }
            }
        }
    }
}
