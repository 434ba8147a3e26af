use std::collections::{BTreeMap, HashMap};
use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::time::{Duration, SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use super::ReviewError;
use crate::model::BoxAnnotation;
use crate::pipeline::{Actor, AnnotatedWindow, Decision, StageVerdict};

/// Milliseconds since the Unix epoch.
pub trait Clock: Send + Sync {
    fn now_ms(&self) -> u64;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct SystemClock;

impl Clock for SystemClock {
    fn now_ms(&self) -> u64 {
        SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_millis() as u64)
    }
}

/// A clock that only moves when told to.
#[derive(Debug, Default)]
pub struct ManualClock(AtomicU64);

impl ManualClock {
    pub fn new(start_ms: u64) -> Self {
        Self(AtomicU64::new(start_ms))
    }

    pub fn advance(&self, d: Duration) {
        self.0.fetch_add(d.as_millis() as u64, Ordering::SeqCst);
    }
}

impl Clock for ManualClock {
    fn now_ms(&self) -> u64 {
        self.0.load(Ordering::SeqCst)
    }
}

pub const DEFAULT_LEASE_TTL: Duration = Duration::from_secs(600);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReviewStatus {
    Pending,
    Accepted,
    Rejected,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ReviewTexts {
    pub initial: Option<String>,
    pub verified: Option<String>,
    pub confirmation: Option<String>,
}

/// One cued window awaiting (or past) human review.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReviewItem {
    pub window_id: String,
    pub sequence_id: String,
    pub start_frame: u64,
    pub end_frame: u64,
    /// Per-frame box geometry.
    pub overlay: Vec<BoxAnnotation>,
    /// Optional per-frame RLE masks.
    #[serde(default, deserialize_with = "crate::io::frame_keys::deserialize")]
    pub masks: BTreeMap<u64, String>,
    pub texts: ReviewTexts,
    pub status: ReviewStatus,
    #[serde(default)]
    pub note: Option<String>,
    #[serde(default)]
    pub decided_by: Option<String>,
    #[serde(default)]
    pub decided_at: Option<u64>,
}

impl ReviewItem {
    fn from_window(w: &AnnotatedWindow) -> Self {
        Self {
            window_id: w.window.window_id.clone(),
            sequence_id: w.window.sequence_id.clone(),
            start_frame: w.window.start_frame,
            end_frame: w.window.end_frame,
            overlay: w.boxes.clone(),
            masks: w.tracklet.as_ref().map(|t| t.masks.clone()).unwrap_or_default(),
            texts: ReviewTexts {
                initial: w.window.initial_desc.clone(),
                verified: w.window.verified_desc.clone(),
                confirmation: w.window.confirmation_note.clone(),
            },
            status: ReviewStatus::Pending,
            note: None,
            decided_by: None,
            decided_at: None,
        }
    }

    pub fn verdict(&self) -> Option<StageVerdict> {
        let decision = match self.status {
            ReviewStatus::Pending => return None,
            ReviewStatus::Accepted => Decision::Accept,
            ReviewStatus::Rejected => Decision::Reject,
        };
        Some(StageVerdict {
            window_id: self.window_id.clone(),
            decision,
            note: self.note.clone(),
            actor: Actor::Human,
        })
    }
}

/// One line of the append-only review log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum ReviewEvent {
    Enqueued {
        item: ReviewItem,
    },
    Decided {
        window_id: String,
        decision: Decision,
        #[serde(default)]
        note: Option<String>,
        reviewer_id: String,
        at_ms: u64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReviewStats {
    pub enqueued: u64,
    pub pending: u64,
    pub accepted: u64,
    pub rejected: u64,
    /// Rejected share of decided items, in percent.
    pub rejection_rate_pct: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct EnqueueReport {
    pub added: usize,
    pub already_queued: usize,
    /// Windows refused because they carry no boxes.
    pub missing_overlay: Vec<String>,
}

#[derive(Debug, Default)]
struct State {
    items: BTreeMap<String, ReviewItem>,
    order: Vec<String>,
    leases: HashMap<String, (String, u64)>,
    events: Vec<ReviewEvent>,
}

impl State {
    fn apply(&mut self, event: &ReviewEvent) -> Result<(), ReviewError> {
        match event {
            ReviewEvent::Enqueued { item } => {
                if !self.items.contains_key(&item.window_id) {
                    self.order.push(item.window_id.clone());
                    self.items.insert(item.window_id.clone(), item.clone());
                }
            }
            ReviewEvent::Decided {
                window_id,
                decision,
                note,
                reviewer_id,
                at_ms,
            } => {
                let item = self
                    .items
                    .get_mut(window_id)
                    .ok_or_else(|| ReviewError::UnknownWindow(window_id.clone()))?;
                if item.status != ReviewStatus::Pending {
                    return Err(ReviewError::AlreadyDecided(window_id.clone()));
                }
                item.status = match decision {
                    Decision::Accept => ReviewStatus::Accepted,
                    Decision::Reject => ReviewStatus::Rejected,
                };
                item.note = note.clone();
                item.decided_by = Some(reviewer_id.clone());
                item.decided_at = Some(*at_ms);
                self.leases.remove(window_id);
            }
        }
        self.events.push(event.clone());
        Ok(())
    }
}

/// Event-sourced review queue with TTL leases.
///
/// Every mutation is an event appended to the log (and to the log file, when
/// one is attached) before the in-memory state changes, so replaying the log
/// reconstructs the queue. Leases are ephemeral and not logged.
pub struct ReviewQueue {
    state: Mutex<State>,
    file: Mutex<Option<(PathBuf, File)>>,
    ttl: Duration,
    clock: Arc<dyn Clock>,
}

impl std::fmt::Debug for ReviewQueue {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ReviewQueue").field("ttl", &self.ttl).finish_non_exhaustive()
    }
}

impl Default for ReviewQueue {
    fn default() -> Self {
        Self::new()
    }
}

impl ReviewQueue {
    pub fn new() -> Self {
        Self {
            state: Mutex::new(State::default()),
            file: Mutex::new(None),
            ttl: DEFAULT_LEASE_TTL,
            clock: Arc::new(SystemClock),
        }
    }

    pub fn with_ttl(mut self, ttl: Duration) -> Self {
        self.ttl = ttl;
        self
    }

    pub fn with_clock(mut self, clock: Arc<dyn Clock>) -> Self {
        self.clock = clock;
        self
    }

    /// Rebuilds a queue from logged events.
    pub fn from_events(events: &[ReviewEvent]) -> Result<Self, ReviewError> {
        let q = Self::new();
        {
            let mut st = q.state.lock().unwrap();
            for e in events {
                st.apply(e)?;
            }
        }
        Ok(q)
    }

    /// Replays the log at `path` (if any) and appends new events to it.
    pub fn open(path: &Path) -> Result<Self, ReviewError> {
        let events: Vec<ReviewEvent> = if path.exists() {
            crate::io::read_jsonl(path).map_err(|e| ReviewError::Storage(e.to_string()))?
        } else {
            Vec::new()
        };
        let q = Self::from_events(&events)?;
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|e| ReviewError::Storage(format!("{}: {e}", path.display())))?;
        *q.file.lock().unwrap() = Some((path.to_path_buf(), file));
        Ok(q)
    }

    fn commit(&self, st: &mut State, event: ReviewEvent) -> Result<(), ReviewError> {
        if let Some((path, file)) = self.file.lock().unwrap().as_mut() {
            let line = serde_json::to_string(&event).map_err(|e| ReviewError::Storage(e.to_string()))? + "\n";
            file.write_all(line.as_bytes())
                .and_then(|_| file.flush())
                .map_err(|e| ReviewError::Storage(format!("{}: {e}", path.display())))?;
        }
        st.apply(&event)
    }

    /// Adds one pending item per window; windows already queued are skipped.
    pub fn enqueue(&self, windows: &[AnnotatedWindow]) -> Result<EnqueueReport, ReviewError> {
        let mut st = self.state.lock().unwrap();
        let mut report = EnqueueReport::default();
        for w in windows {
            if st.items.contains_key(w.id()) {
                report.already_queued += 1;
            } else if !w.has_spatial() {
                report.missing_overlay.push(w.id().to_string());
            } else {
                self.commit(
                    &mut st,
                    ReviewEvent::Enqueued {
                        item: ReviewItem::from_window(w),
                    },
                )?;
                report.added += 1;
            }
        }
        Ok(report)
    }

    /// Enqueues a single window, refusing one without boxes.
    pub fn enqueue_one(&self, window: &AnnotatedWindow) -> Result<usize, ReviewError> {
        let report = self.enqueue(std::slice::from_ref(window))?;
        if !report.missing_overlay.is_empty() {
            return Err(ReviewError::MissingOverlay(window.id().to_string()));
        }
        Ok(self.len())
    }

    pub fn len(&self) -> usize {
        self.state.lock().unwrap().items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Oldest pending item not leased to someone else; leases it to `reviewer_id`.
    pub fn next_item(&self, reviewer_id: &str) -> Option<ReviewItem> {
        let now = self.clock.now_ms();
        let mut st = self.state.lock().unwrap();
        let st = &mut *st;
        let id = st.order.iter().find(|id| {
            st.items[*id].status == ReviewStatus::Pending
                && match st.leases.get(*id) {
                    Some((holder, expires)) => holder == reviewer_id || *expires <= now,
                    None => true,
                }
        })?;
        st.leases
            .insert(id.clone(), (reviewer_id.to_string(), now + self.ttl.as_millis() as u64));
        Some(st.items[id].clone())
    }

    /// Records a decision. Resubmitting the same decision and note is a no-op.
    pub fn submit_decision(
        &self,
        window_id: &str,
        decision: Decision,
        note: Option<String>,
        reviewer_id: &str,
    ) -> Result<StageVerdict, ReviewError> {
        let note = note.filter(|n| !n.trim().is_empty());
        let now = self.clock.now_ms();
        let mut st = self.state.lock().unwrap();
        let item = st
            .items
            .get(window_id)
            .ok_or_else(|| ReviewError::UnknownWindow(window_id.to_string()))?;
        if let Some(v) = item.verdict() {
            return if v.decision == decision && v.note == note {
                Ok(v)
            } else {
                Err(ReviewError::AlreadyDecided(window_id.to_string()))
            };
        }
        if let Some((holder, expires)) = st.leases.get(window_id) {
            if holder != reviewer_id && *expires > now {
                return Err(ReviewError::LeaseHeld {
                    window_id: window_id.to_string(),
                    holder: holder.clone(),
                });
            }
        }
        self.commit(
            &mut st,
            ReviewEvent::Decided {
                window_id: window_id.to_string(),
                decision,
                note,
                reviewer_id: reviewer_id.to_string(),
                at_ms: now,
            },
        )?;
        Ok(st.items[window_id].verdict().expect("just decided"))
    }

    pub fn stats(&self) -> ReviewStats {
        let st = self.state.lock().unwrap();
        let count = |s| st.items.values().filter(|i| i.status == s).count() as u64;
        let (pending, accepted, rejected) = (
            count(ReviewStatus::Pending),
            count(ReviewStatus::Accepted),
            count(ReviewStatus::Rejected),
        );
        let decided = accepted + rejected;
        ReviewStats {
            enqueued: st.items.len() as u64,
            pending,
            accepted,
            rejected,
            rejection_rate_pct: if decided == 0 { 0.0 } else { 100.0 * rejected as f64 / decided as f64 },
        }
    }

    pub fn item(&self, window_id: &str) -> Option<ReviewItem> {
        self.state.lock().unwrap().items.get(window_id).cloned()
    }

    /// The human verdict for a decided window.
    pub fn verdict(&self, window_id: &str) -> Option<StageVerdict> {
        self.item(window_id).and_then(|i| i.verdict())
    }

    pub fn verdicts(&self) -> Vec<StageVerdict> {
        let st = self.state.lock().unwrap();
        st.order.iter().filter_map(|id| st.items[id].verdict()).collect()
    }

    pub fn events(&self) -> Vec<ReviewEvent> {
        self.state.lock().unwrap().events.clone()
    }

    /// Items in enqueue order.
    pub fn items(&self) -> Vec<ReviewItem> {
        let st = self.state.lock().unwrap();
        st.order.iter().map(|id| st.items[id].clone()).collect()
    }
}
