//! Box-prompted mask propagation.
//!
//! A [`TrackPrompt`] carries up to seven prompt frames of a window, each with
//! one or more boxes. A [`TrackerBackend`] turns it into per-frame masks. The
//! [`ReferenceTracker`] interpolates boxes linearly between prompt frames and
//! rasterizes their union, so its output is fully predictable; neural
//! trackers plug in over HTTP or through [`import_tracklets`].

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use async_trait::async_trait;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{BoxAnnotation, FrameSize, MaskTracklet, TrackletViolation};
use crate::rle::{self, Mask};

pub const MAX_PROMPTS: usize = 7;

/// `k` frame indices spread evenly over `[start, end]`, both ends included.
///
/// Index `i` is `round(start + i * (end - start) / (k - 1))`; `k = 1` gives
/// the midpoint. Collisions are pushed to the next free frame.
pub fn equally_spaced_frames(start: u64, end: u64, k: usize) -> Result<Vec<u64>> {
    let available = end.saturating_sub(start) + 1;
    if start > end || k == 0 || k as u64 > available {
        return Err(Error::TooManyFrames {
            requested: k,
            available: if start > end { 0 } else { available },
        });
    }
    if k == 1 {
        return Ok(vec![start + (end - start) / 2]);
    }
    let step = (end - start) as f64 / (k - 1) as f64;
    let mut out: Vec<u64> = Vec::with_capacity(k);
    for i in 0..k {
        let mut f = (start as f64 + i as f64 * step).round() as u64;
        if let Some(&prev) = out.last() {
            if f <= prev {
                f = prev + 1;
            }
        }
        out.push(f);
    }
    // pull back anything nudged past the end
    for i in (0..k).rev() {
        let cap = if i + 1 < k { out[i + 1] - 1 } else { end };
        out[i] = out[i].min(cap);
    }
    Ok(out)
}

/// Boxes given to the tracker on one frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptFrame {
    pub frame_index: u64,
    pub boxes: Vec<BoxAnnotation>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackPrompt {
    pub window_id: String,
    #[serde(default)]
    pub sequence_id: String,
    pub start_frame: u64,
    pub end_frame: u64,
    pub frame_size: FrameSize,
    pub prompts: Vec<PromptFrame>,
    pub target_label: String,
}

impl TrackPrompt {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidPrompt(format!("{}: {m}", self.window_id)));
        if self.start_frame > self.end_frame {
            return bad("inverted window".into());
        }
        if self.prompts.is_empty() || self.prompts.len() > MAX_PROMPTS {
            return bad(format!("{} prompt frames, expected 1 to {MAX_PROMPTS}", self.prompts.len()));
        }
        for pair in self.prompts.windows(2) {
            if pair[1].frame_index <= pair[0].frame_index {
                return bad("prompt frames must be strictly increasing".into());
            }
        }
        for p in &self.prompts {
            if p.frame_index < self.start_frame || p.frame_index > self.end_frame {
                return bad(format!("prompt frame {} outside the window", p.frame_index));
            }
            if p.boxes.is_empty() {
                return bad(format!("prompt frame {} has no boxes", p.frame_index));
            }
        }
        Ok(())
    }

    pub fn frames(&self) -> impl Iterator<Item = u64> {
        self.start_frame..=self.end_frame
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TrackerError {
    #[error("tracker unavailable: {0}")]
    Unavailable(String),
    #[error("tracker returned garbage: {0}")]
    BadResponse(String),
}

/// Per-frame masks; frames the backend could not produce are simply absent.
#[async_trait]
pub trait TrackerBackend: Send + Sync {
    async fn track(&self, prompt: &TrackPrompt) -> Result<BTreeMap<u64, Mask>, TrackerError>;
}

/// A frame without a usable mask.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameGap {
    pub frame: u64,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Propagation {
    pub tracklet: MaskTracklet,
    pub gaps: Vec<FrameGap>,
    /// Frames that initialized the tracker.
    pub prompt_frames: Vec<u64>,
}

/// Runs `tracker` on a validated prompt. Backend failures never abort the
/// window; they surface as gaps.
pub async fn propagate(prompt: &TrackPrompt, tracker: &dyn TrackerBackend) -> Result<Propagation> {
    prompt.validate()?;
    let mut tracklet = MaskTracklet::new(&prompt.window_id, prompt.frame_size);
    let mut gaps = Vec::new();
    match tracker.track(prompt).await {
        Ok(mut masks) => {
            for f in prompt.frames() {
                match masks.remove(&f) {
                    Some(m) => {
                        if let Err(e) = tracklet.insert(f, &m) {
                            gaps.push(FrameGap {
                                frame: f,
                                reason: e.to_string(),
                            });
                        }
                    }
                    None => gaps.push(FrameGap {
                        frame: f,
                        reason: "no mask returned".into(),
                    }),
                }
            }
            if !masks.is_empty() {
                tracing::warn!(window = %prompt.window_id, extra = masks.len(), "tracker returned frames outside the window");
            }
        }
        Err(e) => {
            let reason = e.to_string();
            gaps.extend(prompt.frames().map(|frame| FrameGap {
                frame,
                reason: reason.clone(),
            }));
        }
    }
    Ok(Propagation {
        tracklet,
        gaps,
        prompt_frames: prompt.prompts.iter().map(|p| p.frame_index).collect(),
    })
}

/// Linear box interpolation between prompt frames, constant outside them.
#[derive(Debug, Clone, Copy, Default)]
pub struct ReferenceTracker;

impl ReferenceTracker {
    /// Boxes the reference tracker places on `frame`.
    pub fn boxes_at(prompt: &TrackPrompt, frame: u64) -> Vec<BoxAnnotation> {
        let p = &prompt.prompts;
        let after = p.partition_point(|q| q.frame_index <= frame);
        let relabel = |bs: &[BoxAnnotation]| -> Vec<BoxAnnotation> {
            bs.iter()
                .map(|b| BoxAnnotation {
                    frame_index: frame,
                    ..b.clone()
                })
                .collect()
        };
        if after == 0 {
            return relabel(&p[0].boxes);
        }
        if after == p.len() {
            return relabel(&p[p.len() - 1].boxes);
        }
        let (a, b) = (&p[after - 1], &p[after]);
        if a.frame_index == frame {
            return relabel(&a.boxes);
        }
        let t = (frame - a.frame_index) as f64 / (b.frame_index - a.frame_index) as f64;
        if a.boxes.len() != b.boxes.len() {
            // no one-to-one pairing: hold the nearer prompt
            return relabel(if t <= 0.5 { &a.boxes } else { &b.boxes });
        }
        let lerp = |u: f64, v: f64| u + (v - u) * t;
        a.boxes
            .iter()
            .zip(&b.boxes)
            .map(|(u, v)| {
                let mut out = BoxAnnotation::new(frame, lerp(u.x, v.x), lerp(u.y, v.y), lerp(u.w, v.w), lerp(u.h, v.h), u.label.clone());
                out.confidence = u.confidence;
                out
            })
            .collect()
    }
}

#[async_trait]
impl TrackerBackend for ReferenceTracker {
    async fn track(&self, prompt: &TrackPrompt) -> Result<BTreeMap<u64, Mask>, TrackerError> {
        Ok(prompt
            .frames()
            .map(|f| (f, Mask::from_boxes(prompt.frame_size, &Self::boxes_at(prompt, f))))
            .collect())
    }
}

/// Remote tracker: `POST {base}/track` with `{window_id, frames, frame_size, prompts}`,
/// answered by `{"masks": {"<frame>": "<rle>"}}`.
#[derive(Debug, Clone)]
pub struct HttpTracker {
    client: reqwest::Client,
    base_url: String,
}

impl HttpTracker {
    pub fn new(base_url: impl Into<String>) -> Self {
        Self {
            client: reqwest::Client::new(),
            base_url: base_url.into(),
        }
    }
}

#[derive(Deserialize)]
struct TrackReply {
    masks: BTreeMap<u64, String>,
}

#[async_trait]
impl TrackerBackend for HttpTracker {
    async fn track(&self, prompt: &TrackPrompt) -> Result<BTreeMap<u64, Mask>, TrackerError> {
        let url = format!("{}/track", self.base_url.trim_end_matches('/'));
        let body = serde_json::json!({
            "window_id": prompt.window_id,
            "sequence_id": prompt.sequence_id,
            "frames": prompt.frames().collect::<Vec<_>>(),
            "frame_size": prompt.frame_size,
            "prompts": prompt.prompts,
        });
        let resp = self
            .client
            .post(url)
            .json(&body)
            .send()
            .await
            .map_err(|e| TrackerError::Unavailable(e.to_string()))?;
        if !resp.status().is_success() {
            return Err(TrackerError::Unavailable(format!("status {}", resp.status())));
        }
        let reply: TrackReply = resp.json().await.map_err(|e| TrackerError::BadResponse(e.to_string()))?;
        // undecodable frames become gaps in `propagate`
        Ok(reply
            .masks
            .into_iter()
            .filter_map(|(f, s)| rle::decode(&s).ok().map(|m| (f, m)))
            .collect())
    }
}

/// Why one imported record was set aside.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImportIssue {
    /// 1-based line number.
    pub line: usize,
    pub window_id: Option<String>,
    #[serde(default)]
    pub parse_error: Option<String>,
    #[serde(default)]
    pub violations: Vec<TrackletViolation>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TrackletImport {
    pub tracklets: Vec<MaskTracklet>,
    pub issues: Vec<ImportIssue>,
}

/// Reads RLE-JSONL tracklets. Bad records are reported and skipped.
pub fn import_tracklets(path: &Path) -> Result<TrackletImport> {
    import_tracklets_checked(path, &BTreeMap::new())
}

/// Like [`import_tracklets`], also checking frames against known window ranges.
pub fn import_tracklets_checked(path: &Path, ranges: &BTreeMap<String, (u64, u64)>) -> Result<TrackletImport> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut out = TrackletImport::default();
    let mut seen = BTreeSet::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let t: MaskTracklet = match serde_json::from_str(line) {
            Ok(t) => t,
            Err(e) => {
                out.issues.push(ImportIssue {
                    line: i + 1,
                    window_id: None,
                    parse_error: Some(e.to_string()),
                    violations: Vec::new(),
                });
                continue;
            }
        };
        let violations = t.validate(ranges.get(&t.window_id).copied());
        if !violations.is_empty() {
            out.issues.push(ImportIssue {
                line: i + 1,
                window_id: Some(t.window_id),
                parse_error: None,
                violations,
            });
            continue;
        }
        if !seen.insert(t.window_id.clone()) {
            tracing::warn!(window = %t.window_id, "duplicate tracklet; keeping both");
        }
        out.tracklets.push(t);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bx(f: u64, x: f64, w: f64) -> BoxAnnotation {
        BoxAnnotation::new(f, x, 2.0, w, 4.0, "polyp")
    }

    fn prompt(start: u64, end: u64, prompts: Vec<(u64, Vec<BoxAnnotation>)>) -> TrackPrompt {
        TrackPrompt {
            window_id: "w".into(),
            sequence_id: "s".into(),
            start_frame: start,
            end_frame: end,
            frame_size: FrameSize::new(32, 16),
            prompts: prompts
                .into_iter()
                .map(|(frame_index, boxes)| PromptFrame { frame_index, boxes })
                .collect(),
            target_label: "polyp".into(),
        }
    }

    #[test]
    fn spacing_examples() {
        assert_eq!(equally_spaced_frames(0, 100, 3).unwrap(), vec![0, 50, 100]);
        assert_eq!(equally_spaced_frames(10, 10, 1).unwrap(), vec![10]);
        assert_eq!(equally_spaced_frames(0, 10, 5).unwrap(), vec![0, 3, 5, 8, 10]);
        assert_eq!(equally_spaced_frames(0, 4, 5).unwrap(), vec![0, 1, 2, 3, 4]);
        assert!(matches!(equally_spaced_frames(0, 3, 5), Err(Error::TooManyFrames { requested: 5, available: 4 })));
        assert!(equally_spaced_frames(0, 3, 0).is_err());
    }

    proptest::proptest! {
        #[test]
        fn spacing_is_strict_and_in_range(start in 0u64..1000, len in 1u64..200, k in 1usize..8) {
            let end = start + len - 1;
            match equally_spaced_frames(start, end, k) {
                Ok(v) => {
                    proptest::prop_assert_eq!(v.len(), k);
                    proptest::prop_assert!(v.windows(2).all(|p| p[0] < p[1]));
                    proptest::prop_assert!(v[0] >= start && v[k - 1] <= end);
                }
                Err(_) => proptest::prop_assert!(k as u64 > len),
            }
        }
    }

    #[tokio::test]
    async fn single_prompt_is_held_constant() {
        let p = prompt(0, 4, vec![(2, vec![bx(2, 3.0, 5.0)])]);
        let out = propagate(&p, &ReferenceTracker).await.unwrap();
        assert!(out.gaps.is_empty());
        let frames: Vec<u64> = out.tracklet.masks.keys().copied().collect();
        assert_eq!(frames, vec![0, 1, 2, 3, 4]);
        let first = out.tracklet.masks[&0].clone();
        assert!(out.tracklet.masks.values().all(|m| *m == first));
        assert_eq!(rle::decode(&first).unwrap().area(), 20);
    }

    #[tokio::test]
    async fn linear_interpolation_between_prompts() {
        let p = prompt(0, 10, vec![(0, vec![bx(0, 0.0, 4.0)]), (10, vec![bx(10, 10.0, 4.0)])]);
        let b = ReferenceTracker::boxes_at(&p, 5);
        assert_eq!((b[0].x, b[0].w), (5.0, 4.0));
        let out = propagate(&p, &ReferenceTracker).await.unwrap();
        let m = out.tracklet.mask(5).unwrap().unwrap();
        assert_eq!(m.bounding_box(5, "polyp").unwrap().x, 5.0);

        let same = prompt(0, 6, vec![(0, vec![bx(0, 1.0, 4.0)]), (6, vec![bx(6, 1.0, 4.0)])]);
        let out = propagate(&same, &ReferenceTracker).await.unwrap();
        let first = out.tracklet.masks[&0].clone();
        assert!(out.tracklet.masks.values().all(|m| *m == first));
    }

    #[tokio::test]
    async fn multiple_boxes_are_unioned() {
        let p = prompt(0, 0, vec![(0, vec![bx(0, 0.0, 2.0), bx(0, 10.0, 2.0)])]);
        let out = propagate(&p, &ReferenceTracker).await.unwrap();
        assert_eq!(out.tracklet.mask(0).unwrap().unwrap().area(), 16);
    }

    #[test]
    fn prompt_validation() {
        assert!(prompt(0, 10, vec![]).validate().is_err());
        assert!(prompt(0, 10, vec![(5, vec![bx(5, 0.0, 1.0)]), (5, vec![bx(5, 0.0, 1.0)])]).validate().is_err());
        assert!(prompt(0, 10, vec![(11, vec![bx(11, 0.0, 1.0)])]).validate().is_err());
        let eight = (0..8).map(|f| (f, vec![bx(f, 0.0, 1.0)])).collect();
        assert!(prompt(0, 10, eight).validate().is_err());
    }

    struct Broken;
    #[async_trait]
    impl TrackerBackend for Broken {
        async fn track(&self, p: &TrackPrompt) -> Result<BTreeMap<u64, Mask>, TrackerError> {
            if p.window_id == "dead" {
                return Err(TrackerError::Unavailable("down".into()));
            }
            // drop odd frames
            Ok(p.frames().filter(|f| f % 2 == 0).map(|f| (f, Mask::empty(p.frame_size))).collect())
        }
    }

    #[tokio::test]
    async fn failures_become_gaps() {
        let p = prompt(0, 5, vec![(0, vec![bx(0, 0.0, 1.0)])]);
        let out = propagate(&p, &Broken).await.unwrap();
        assert_eq!(out.tracklet.masks.len(), 3);
        assert_eq!(out.gaps.iter().map(|g| g.frame).collect::<Vec<_>>(), vec![1, 3, 5]);

        let mut dead = p.clone();
        dead.window_id = "dead".into();
        let out = propagate(&dead, &Broken).await.unwrap();
        assert!(out.tracklet.masks.is_empty());
        assert_eq!(out.gaps.len(), 6);
    }

    #[test]
    fn import_reports_bad_records() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.jsonl");
        std::fs::write(&path, "").unwrap();
        assert_eq!(import_tracklets(&path).unwrap(), TrackletImport::default());

        let mut t = MaskTracklet::new("w1", FrameSize::new(3, 1));
        t.masks.insert(0, "3x1:1,1,1".into());
        let good = serde_json::to_string(&t).unwrap();
        let mut bad = t.clone();
        bad.window_id = "w2".into();
        bad.masks.insert(1, "3x1:1,1,2".into());
        let bad = serde_json::to_string(&bad).unwrap();
        std::fs::write(&path, format!("{good}\n{bad}\nnot json\n")).unwrap();

        let imp = import_tracklets(&path).unwrap();
        assert_eq!(imp.tracklets, vec![t]);
        assert_eq!(imp.issues.len(), 2);
        assert!(matches!(imp.issues[0].violations[0], TrackletViolation::CorruptRle { frame: 1, .. }));
        assert_eq!(imp.issues[1].line, 3);
        assert!(imp.issues[1].parse_error.is_some());

        let ranges = [("w1".to_string(), (5u64, 9u64))].into();
        let imp = import_tracklets_checked(&path, &ranges).unwrap();
        assert!(imp.tracklets.is_empty());
    }
}
