use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use futures::future::join_all;
use serde::{Deserialize, Serialize};

use super::journal::{history_in, Journal, JournalEntry};
use super::report::StageSnapshot;
use super::stages::{apply_stage, attach_spatial, merge_windows, Actor, AnnotatedWindow, Decision, StageVerdict};
use crate::error::{Error, Result};
use crate::gateway::{AgentRequest, AgentResponse, AgentRole, Gateway, MediaRef};
use crate::model::{BoxAnnotation, MaskTracklet, Stage, VideoRef, VideoWindow};
use crate::prompts::PromptSet;
use crate::review::{ReviewQueue, Reviewer};
use crate::tracker::{propagate, PromptFrame, ReferenceTracker, TrackPrompt, TrackerBackend, MAX_PROMPTS};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StageName {
    Propose,
    Merge,
    Verify,
    Track,
    Confirm,
    Review,
}

impl StageName {
    pub const ALL: [StageName; 6] = [
        StageName::Propose,
        StageName::Merge,
        StageName::Verify,
        StageName::Track,
        StageName::Confirm,
        StageName::Review,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            StageName::Propose => "propose",
            StageName::Merge => "merge",
            StageName::Verify => "verify",
            StageName::Track => "track",
            StageName::Confirm => "confirm",
            StageName::Review => "review",
        }
    }

    /// Stages from tracking on score only frames that carry boxes.
    pub fn boxes_only(self) -> bool {
        self >= StageName::Track
    }
}

impl fmt::Display for StageName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for StageName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        StageName::ALL
            .into_iter()
            .find(|n| n.as_str() == s.trim())
            .ok_or_else(|| Error::Config(format!("unknown stage `{s}`")))
    }
}

/// Parses `propose,merge,verify`.
pub fn parse_stages(list: &str) -> Result<Vec<StageName>> {
    list.split(',').filter(|s| !s.trim().is_empty()).map(str::parse).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub stages: Vec<StageName>,
    /// Proposals separated by at most this many frames are merged.
    #[serde(default)]
    pub max_gap_frames: u64,
    /// Distance between detection frames in the tracking stage.
    #[serde(default = "default_stride")]
    pub detect_stride: u64,
    #[serde(default)]
    pub seed: u64,
}

fn default_stride() -> u64 {
    5
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            stages: StageName::ALL.to_vec(),
            max_gap_frames: 0,
            detect_stride: default_stride(),
            seed: 0,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if self.stages.first() != Some(&StageName::Propose) {
            return Err(Error::Config("a run starts with the propose stage".into()));
        }
        if self.stages.windows(2).any(|p| p[1] <= p[0]) {
            return Err(Error::Config("stages must follow funnel order without repeats".into()));
        }
        if self.detect_stride == 0 {
            return Err(Error::Config("detect_stride must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum RunStatus {
    Complete,
    /// The review stage is waiting for human decisions; rerun to resume.
    AwaitingReview { pending: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    pub history: Vec<StageSnapshot>,
    pub status: RunStatus,
}

impl RunOutcome {
    /// Windows retained by the last committed stage.
    pub fn final_windows(&self) -> &[AnnotatedWindow] {
        self.history.last().map_or(&[], |s| &s.windows)
    }

    /// Every window rejected along the way.
    pub fn archived(&self) -> impl Iterator<Item = &AnnotatedWindow> {
        self.history.iter().flat_map(|s| &s.rejected)
    }
}

/// Drives the funnel over a set of sequences.
///
/// The gateway should log into `journal` and be primed with its recorded
/// calls (see [`Pipeline::prepare_gateway`]); a rerun over the same journal
/// then skips committed stages and replays every recorded agent call.
pub struct Pipeline<'a> {
    pub config: RunConfig,
    pub sequences: Vec<VideoRef>,
    pub gateway: &'a Gateway,
    pub tracker: &'a dyn TrackerBackend,
    pub prompts: PromptSet,
    pub journal: Arc<Journal>,
    pub review: Option<&'a ReviewQueue>,
    pub reviewer: Option<&'a dyn Reviewer>,
}

impl<'a> Pipeline<'a> {
    pub fn new(config: RunConfig, sequences: Vec<VideoRef>, gateway: &'a Gateway, journal: Arc<Journal>) -> Self {
        Self {
            config,
            sequences,
            gateway,
            tracker: &ReferenceTracker,
            prompts: PromptSet::default(),
            journal,
            review: None,
            reviewer: None,
        }
    }

    /// Hooks a gateway up to a journal: logs new calls, replays recorded ones.
    pub fn prepare_gateway(gateway: Gateway, journal: &Arc<Journal>) -> Gateway {
        gateway.with_replay(journal.calls()).with_log(journal.clone())
    }

    pub async fn run(&self) -> Result<RunOutcome> {
        self.config.validate()?;
        for s in &self.sequences {
            s.validate()?;
        }
        let entries = self.journal.entries();
        match entries.first() {
            None => self.journal.append(JournalEntry::Start {
                config: self.config.clone(),
                sequences: self.sequences.clone(),
            })?,
            Some(JournalEntry::Start { config, sequences }) => {
                if *config != self.config || *sequences != self.sequences {
                    return Err(Error::Config("journal belongs to a different run".into()));
                }
            }
            Some(_) => return Err(Error::Parse("journal does not begin with a start entry".into())),
        }
        let committed: BTreeMap<String, StageSnapshot> = history_in(&entries)
            .into_iter()
            .map(|s| (s.stage_name.clone(), s))
            .collect();
        let recorded_verdicts: BTreeSet<String> = entries
            .iter()
            .filter_map(|e| match e {
                JournalEntry::Verdicts { stage, .. } => Some(stage.clone()),
                _ => None,
            })
            .collect();

        let mut history = Vec::new();
        let mut current: Vec<AnnotatedWindow> = Vec::new();
        for &stage in &self.config.stages {
            if let Some(snap) = committed.get(stage.as_str()) {
                current = snap.windows.clone();
                history.push(snap.clone());
                continue;
            }
            let (retained, rejected, verdicts) = match stage {
                StageName::Propose => (self.propose().await?, Vec::new(), None),
                StageName::Merge => (self.merge(current)?, Vec::new(), None),
                StageName::Verify => {
                    let v = self.verify(&current).await;
                    let out = apply_stage(current, &v, stage.as_str())?;
                    (out.retained, out.rejected, Some(v))
                }
                StageName::Track => {
                    let (kept, dropped, v) = self.track(current).await?;
                    (kept, dropped, Some(v))
                }
                StageName::Confirm => {
                    let v = self.confirm(&current).await;
                    let out = apply_stage(current, &v, stage.as_str())?;
                    (out.retained, out.rejected, Some(v))
                }
                StageName::Review => match self.review_verdicts(&current)? {
                    Some(v) => {
                        let out = apply_stage(current, &v, stage.as_str())?;
                        (out.retained, out.rejected, Some(v))
                    }
                    None => {
                        self.journal.flush_calls()?;
                        let pending = self.review.map_or(current.len(), |q| q.stats().pending as usize);
                        return Ok(RunOutcome {
                            history,
                            status: RunStatus::AwaitingReview { pending },
                        });
                    }
                },
            };
            self.journal.flush_calls()?;
            if let Some(verdicts) = verdicts {
                if !recorded_verdicts.contains(stage.as_str()) {
                    self.journal.append(JournalEntry::Verdicts {
                        stage: stage.as_str().to_string(),
                        verdicts,
                    })?;
                }
            }
            let snapshot = StageSnapshot {
                stage_name: stage.as_str().to_string(),
                windows: retained,
                rejected,
                boxes_only: stage.boxes_only(),
            };
            self.journal.append(JournalEntry::Commit {
                snapshot: snapshot.clone(),
            })?;
            current = snapshot.windows.clone();
            history.push(snapshot);
        }
        Ok(RunOutcome {
            history,
            status: RunStatus::Complete,
        })
    }

    fn sequence(&self, id: &str) -> Result<&VideoRef> {
        self.sequences
            .iter()
            .find(|s| s.sequence_id == id)
            .ok_or_else(|| Error::UnknownItem(id.to_string()))
    }

    fn request(&self, role: AgentRole, vars: &[(&str, &str)]) -> AgentRequest {
        AgentRequest::new(role, self.prompts.render(role, vars)).with_seed(self.config.seed)
    }

    async fn propose(&self) -> Result<Vec<AnnotatedWindow>> {
        let fps = |v: &VideoRef| v.fps.to_string();
        let reqs: Vec<AgentRequest> = self
            .sequences
            .iter()
            .map(|v| {
                self.request(
                    AgentRole::Propose,
                    &[("sequence_id", &v.sequence_id), ("frame_count", &v.frame_count.to_string()), ("fps", &fps(v))],
                )
                .with_media([MediaRef::clip(&v.sequence_id, 0, v.frame_count - 1, false)])
                .with_item(&v.sequence_id)
            })
            .collect();
        let replies = join_all(reqs.iter().map(|r| self.gateway.invoke(r))).await;
        let mut out = Vec::new();
        for (v, reply) in self.sequences.iter().zip(replies) {
            let spans = match reply {
                Ok(AgentResponse::Windows { windows }) => windows,
                Ok(other) => return Err(Error::Parse(format!("proposer returned {other:?}"))),
                Err(e) => {
                    // a failed sequence simply yields no proposals
                    tracing::warn!(sequence = %v.sequence_id, %e, "proposal failed");
                    Vec::new()
                }
            };
            for (i, s) in spans.into_iter().enumerate() {
                if s.start_frame >= v.frame_count {
                    tracing::warn!(sequence = %v.sequence_id, start = s.start_frame, "proposal past the end dropped");
                    continue;
                }
                let mut w = VideoWindow::new(
                    format!("{}-p{i:04}", v.sequence_id),
                    &v.sequence_id,
                    s.start_frame,
                    s.end_frame.min(v.frame_count - 1),
                );
                if !s.description.trim().is_empty() {
                    w.initial_desc = Some(s.description);
                }
                out.push(AnnotatedWindow::new(w));
            }
        }
        Ok(out)
    }

    fn merge(&self, windows: Vec<AnnotatedWindow>) -> Result<Vec<AnnotatedWindow>> {
        let mut by_seq: BTreeMap<String, Vec<VideoWindow>> = BTreeMap::new();
        for w in windows {
            by_seq.entry(w.window.sequence_id.clone()).or_default().push(w.window);
        }
        let mut out = Vec::new();
        for ws in by_seq.values() {
            out.extend(merge_windows(ws, self.config.max_gap_frames)?.into_iter().map(AnnotatedWindow::new));
        }
        Ok(out)
    }

    async fn verify(&self, windows: &[AnnotatedWindow]) -> Vec<StageVerdict> {
        let reqs: Vec<AgentRequest> = windows
            .iter()
            .map(|w| {
                let desc = w.window.initial_desc.as_deref().unwrap_or("");
                self.request(AgentRole::Verify, &[("description", desc)])
                    .with_media([clip(&w.window, false)])
                    .with_item(w.id())
            })
            .collect();
        let replies = join_all(reqs.iter().map(|r| self.gateway.invoke(r))).await;
        windows
            .iter()
            .zip(replies)
            .map(|(w, r)| verdict_from(w.id(), r, Actor::VerificationAgent))
            .collect()
    }

    async fn confirm(&self, windows: &[AnnotatedWindow]) -> Vec<StageVerdict> {
        let reqs: Vec<AgentRequest> = windows
            .iter()
            .map(|w| {
                let desc = w.window.initial_desc.as_deref().unwrap_or("");
                let verified = w.window.verified_desc.as_deref().unwrap_or("");
                self.request(AgentRole::Confirm, &[("description", desc), ("verified", verified)])
                    .with_media([clip(&w.window, true)])
                    .with_item(w.id())
            })
            .collect();
        let replies = join_all(reqs.iter().map(|r| self.gateway.invoke(r))).await;
        windows
            .iter()
            .zip(replies)
            .map(|(w, r)| verdict_from(w.id(), r, Actor::ConfirmationAgent))
            .collect()
    }

    async fn track(
        &self,
        windows: Vec<AnnotatedWindow>,
    ) -> Result<(Vec<AnnotatedWindow>, Vec<AnnotatedWindow>, Vec<StageVerdict>)> {
        let spatial = join_all(windows.iter().map(|w| self.track_window(&w.window))).await;
        let (mut kept, mut dropped, mut verdicts) = (Vec::new(), Vec::new(), Vec::new());
        for (w, result) in windows.into_iter().zip(spatial) {
            let (boxes, tracklet) = result?;
            if boxes.is_empty() {
                let mut w = w;
                w.window.advance(Stage::Rejected(StageName::Track.as_str().into()))?;
                verdicts.push(
                    StageVerdict::new(w.id(), Decision::Reject, Actor::VerificationAgent).with_note("no lesion localized"),
                );
                dropped.push(w);
            } else {
                verdicts.push(StageVerdict::new(w.id(), Decision::Accept, Actor::VerificationAgent));
                kept.push(attach_spatial(w.window, boxes, Some(tracklet))?);
            }
        }
        Ok((kept, dropped, verdicts))
    }

    /// Detects at a fixed stride and tracks between consecutive hits.
    ///
    /// Runs of detection frames that all found boxes become track prompts
    /// (at most seven per tracker call) covering the run plus half a stride
    /// on either side; frames outside any run carry no boxes.
    async fn track_window(&self, w: &VideoWindow) -> Result<(Vec<BoxAnnotation>, MaskTracklet)> {
        let video = self.sequence(&w.sequence_id)?;
        let stride = self.config.detect_stride;
        let mut frames: Vec<u64> = (w.start_frame..=w.end_frame).step_by(stride as usize).collect();
        if frames.last() != Some(&w.end_frame) {
            frames.push(w.end_frame);
        }
        let target = w.verified_desc.as_deref().or(w.initial_desc.as_deref()).unwrap_or("lesion");
        let reqs: Vec<AgentRequest> = frames
            .iter()
            .map(|&f| {
                self.request(AgentRole::Detect, &[("target", target)])
                    .with_media([MediaRef::frame(&w.sequence_id, f)])
                    .with_item(&w.window_id)
            })
            .collect();
        let replies = join_all(reqs.iter().map(|r| self.gateway.invoke(r))).await;
        let detections: Vec<(u64, Vec<BoxAnnotation>)> = frames
            .iter()
            .zip(replies)
            .map(|(&f, r)| {
                let boxes = match r {
                    Ok(AgentResponse::Boxes { boxes }) => boxes
                        .into_iter()
                        .filter_map(|b| BoxAnnotation { frame_index: f, ..b }.clamped(video.frame_size))
                        .collect(),
                    _ => Vec::new(),
                };
                (f, boxes)
            })
            .collect();

        let mut runs: Vec<Vec<PromptFrame>> = Vec::new();
        let mut open = false;
        for (f, boxes) in detections {
            if boxes.is_empty() {
                open = false;
                continue;
            }
            let frame = PromptFrame { frame_index: f, boxes };
            if open {
                runs.last_mut().expect("open run").push(frame);
            } else {
                runs.push(vec![frame]);
                open = true;
            }
        }

        let half = stride / 2;
        let mut boxes = Vec::new();
        let mut tracklet = MaskTracklet::new(&w.window_id, video.frame_size);
        for run in runs {
            let lo = run[0].frame_index.saturating_sub(half).max(w.start_frame);
            let hi = (run[run.len() - 1].frame_index + half).min(w.end_frame);
            // chunks of up to seven prompts sharing their boundary frames
            let mut i = 0;
            loop {
                let j = (i + MAX_PROMPTS).min(run.len());
                let chunk = run[i..j].to_vec();
                let start = if i == 0 { lo } else { chunk[0].frame_index };
                let end = if j == run.len() { hi } else { chunk[chunk.len() - 1].frame_index };
                let prompt = TrackPrompt {
                    window_id: w.window_id.clone(),
                    sequence_id: w.sequence_id.clone(),
                    start_frame: start,
                    end_frame: end,
                    frame_size: video.frame_size,
                    target_label: target.to_string(),
                    prompts: chunk,
                };
                let first_new = if i == 0 { start } else { start + 1 };
                for f in first_new..=end {
                    boxes.extend(ReferenceTracker::boxes_at(&prompt, f));
                }
                let prop = propagate(&prompt, self.tracker).await?;
                tracklet.masks.extend(prop.tracklet.masks);
                if j == run.len() {
                    break;
                }
                i = j - 1;
            }
        }
        Ok((boxes, tracklet))
    }

    /// Human verdicts for every window, or `None` while some are pending.
    fn review_verdicts(&self, windows: &[AnnotatedWindow]) -> Result<Option<Vec<StageVerdict>>> {
        let Some(queue) = self.review else {
            return Err(Error::Config("the review stage needs a review queue".into()));
        };
        let report = queue.enqueue(windows)?;
        if let Some(r) = self.reviewer {
            r.review(queue)?;
        }
        let missing: BTreeSet<&str> = report.missing_overlay.iter().map(String::as_str).collect();
        let mut verdicts = Vec::with_capacity(windows.len());
        for w in windows {
            if missing.contains(w.id()) {
                verdicts.push(StageVerdict::new(w.id(), Decision::Reject, Actor::Human).with_note("missing overlay"));
                continue;
            }
            match queue.verdict(w.id()) {
                Some(v) => verdicts.push(v),
                None => return Ok(None),
            }
        }
        Ok(Some(verdicts))
    }
}

fn clip(w: &VideoWindow, overlay: bool) -> MediaRef {
    MediaRef::clip(&w.sequence_id, w.start_frame, w.end_frame, overlay)
}

fn verdict_from(
    window_id: &str,
    reply: std::result::Result<AgentResponse, crate::gateway::GatewayError>,
    actor: Actor,
) -> StageVerdict {
    match reply {
        Ok(AgentResponse::Verdict { accept: true, text }) => {
            let v = StageVerdict::new(window_id, Decision::Accept, actor);
            match text {
                Some(t) => v.with_note(t),
                None => v,
            }
        }
        Ok(AgentResponse::Verdict { accept: false, text }) => {
            StageVerdict::new(window_id, Decision::Reject, actor).with_note(text.unwrap_or_else(|| "rejected".into()))
        }
        Ok(other) => StageVerdict::new(window_id, Decision::Reject, actor).with_note(format!("unexpected reply {other:?}")),
        Err(e) => StageVerdict::new(window_id, Decision::Reject, actor).with_note(format!("agent unavailable: {e}")),
    }
}
