use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{BoxAnnotation, MaskTracklet, Stage, VideoWindow};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Decision {
    Accept,
    Reject,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Actor {
    VerificationAgent,
    ConfirmationAgent,
    Human,
}

/// One decision about one window at one stage.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageVerdict {
    pub window_id: String,
    pub decision: Decision,
    #[serde(default)]
    pub note: Option<String>,
    pub actor: Actor,
}

impl StageVerdict {
    pub fn new(window_id: impl Into<String>, decision: Decision, actor: Actor) -> Self {
        Self {
            window_id: window_id.into(),
            decision,
            note: None,
            actor,
        }
    }

    pub fn with_note(mut self, note: impl Into<String>) -> Self {
        self.note = Some(note.into());
        self
    }

    pub fn is_accept(&self) -> bool {
        self.decision == Decision::Accept
    }

    /// A confirmation accept must carry its note.
    pub fn validate(&self) -> Result<()> {
        let missing = self.note.as_deref().is_none_or(|n| n.trim().is_empty());
        if self.actor == Actor::ConfirmationAgent && self.is_accept() && missing {
            return Err(Error::Config(format!(
                "confirmation of `{}` accepted without a note",
                self.window_id
            )));
        }
        Ok(())
    }
}

/// Stage a window reaches when it survives the named funnel stage.
pub fn stage_after(stage_name: &str) -> Result<Stage> {
    Ok(match stage_name {
        "propose" => Stage::Proposed,
        "merge" => Stage::Merged,
        "verify" => Stage::Verified,
        "track" => Stage::Tracked,
        "confirm" => Stage::Confirmed,
        "review" => Stage::HumanAccepted,
        other => return Err(Error::Config(format!("unknown stage `{other}`"))),
    })
}

/// Merges one sequence's proposals whose separation is at most `max_gap_frames`.
///
/// Separation is the number of frames strictly between two windows, so
/// adjacent windows have separation 0. The merged window keeps the id of its
/// earliest constituent and joins the constituents' `initial_desc` in
/// temporal order.
pub fn merge_windows(proposals: &[VideoWindow], max_gap_frames: u64) -> Result<Vec<VideoWindow>> {
    let sequences: BTreeSet<&str> = proposals.iter().map(|w| w.sequence_id.as_str()).collect();
    if sequences.len() > 1 {
        return Err(Error::MixedSequence(sequences.into_iter().map(String::from).collect()));
    }
    let mut sorted: Vec<&VideoWindow> = proposals.iter().filter(|w| !w.is_empty()).collect();
    sorted.sort_by(|a, b| {
        (a.start_frame, a.end_frame, &a.window_id).cmp(&(b.start_frame, b.end_frame, &b.window_id))
    });

    let mut out: Vec<(VideoWindow, Vec<String>)> = Vec::new();
    for w in sorted {
        if let Some((last, descs)) = out.last_mut() {
            let separation = w.start_frame.saturating_sub(last.end_frame + 1);
            if w.start_frame <= last.end_frame + 1 || separation <= max_gap_frames {
                last.end_frame = last.end_frame.max(w.end_frame);
                descs.extend(w.initial_desc.clone());
                continue;
            }
        }
        let mut fresh = w.clone();
        fresh.stage = Stage::Merged;
        out.push((fresh, w.initial_desc.iter().cloned().collect()));
    }
    Ok(out
        .into_iter()
        .map(|(mut w, descs)| {
            w.initial_desc = (!descs.is_empty()).then(|| descs.join(" | "));
            w
        })
        .collect())
}

/// A window with its spatial annotations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotatedWindow {
    pub window: VideoWindow,
    #[serde(default)]
    pub boxes: Vec<BoxAnnotation>,
    #[serde(default)]
    pub tracklet: Option<MaskTracklet>,
}

impl AnnotatedWindow {
    pub fn new(window: VideoWindow) -> Self {
        Self {
            window,
            boxes: Vec::new(),
            tracklet: None,
        }
    }

    pub fn id(&self) -> &str {
        &self.window.window_id
    }

    pub fn box_frames(&self) -> BTreeSet<u64> {
        self.boxes.iter().map(|b| b.frame_index).collect()
    }

    /// Percentage of window frames carrying at least one box.
    pub fn bbox_coverage(&self) -> f64 {
        let len = self.window.len();
        if len == 0 {
            return 0.0;
        }
        100.0 * self.box_frames().len() as f64 / len as f64
    }

    pub fn mask_count(&self) -> u64 {
        self.tracklet.as_ref().map_or(0, |t| t.masks.len() as u64)
    }

    pub fn has_spatial(&self) -> bool {
        !self.boxes.is_empty()
    }
}

/// Stores boxes and tracklet on a window and marks it `Tracked`.
pub fn attach_spatial(
    window: VideoWindow,
    boxes: Vec<BoxAnnotation>,
    tracklet: Option<MaskTracklet>,
) -> Result<AnnotatedWindow> {
    let range_err = |frame| Error::FrameRange {
        window_id: window.window_id.clone(),
        frame,
        start: window.start_frame,
        end: window.end_frame,
    };
    if let Some(b) = boxes.iter().find(|b| !window.contains(b.frame_index)) {
        return Err(range_err(b.frame_index));
    }
    if let Some(t) = &tracklet {
        if let Some(&f) = t.masks.keys().find(|&&f| !window.contains(f)) {
            return Err(range_err(f));
        }
    }
    let mut window = window;
    window.advance(Stage::Tracked)?;
    Ok(AnnotatedWindow {
        window,
        boxes,
        tracklet,
    })
}

/// Windows partitioned by one stage's verdicts.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct StageOutcome {
    pub retained: Vec<AnnotatedWindow>,
    pub rejected: Vec<AnnotatedWindow>,
}

/// Applies one verdict per window. Nothing is committed unless every window
/// has a verdict. Verdict notes land in `verified_desc` (verification agent)
/// or `confirmation_note` (confirmation agent), for rejected windows too.
pub fn apply_stage(windows: Vec<AnnotatedWindow>, verdicts: &[StageVerdict], stage_name: &str) -> Result<StageOutcome> {
    let next = stage_after(stage_name)?;
    let mut by_id: BTreeMap<&str, &StageVerdict> = BTreeMap::new();
    for v in verdicts {
        v.validate()?;
        if let Some(prev) = by_id.insert(&v.window_id, v) {
            if prev != v {
                return Err(Error::Config(format!("conflicting verdicts for `{}`", v.window_id)));
            }
        }
    }
    let missing: Vec<String> = windows
        .iter()
        .filter(|w| !by_id.contains_key(w.id()))
        .map(|w| w.id().to_string())
        .collect();
    if !missing.is_empty() {
        return Err(Error::IncompleteStage {
            stage: stage_name.to_string(),
            missing,
        });
    }

    let mut out = StageOutcome::default();
    for mut w in windows {
        let v = by_id[w.id()];
        match v.actor {
            Actor::VerificationAgent if v.note.is_some() => w.window.verified_desc = v.note.clone(),
            Actor::ConfirmationAgent if v.note.is_some() => w.window.confirmation_note = v.note.clone(),
            _ => {}
        }
        if v.is_accept() {
            w.window.advance(next.clone())?;
            out.retained.push(w);
        } else {
            w.window.advance(Stage::Rejected(stage_name.to_string()))?;
            out.rejected.push(w);
        }
    }
    Ok(out)
}
