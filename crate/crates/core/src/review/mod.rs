//! Human review gate: an event-sourced queue with leases, a simulated
//! reviewer for offline runs, and the HTTP service the review UI talks to.

mod queue;
pub mod server;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub use queue::{
    Clock, EnqueueReport, ManualClock, ReviewEvent, ReviewItem, ReviewQueue, ReviewStats, ReviewStatus,
    ReviewTexts, SystemClock, DEFAULT_LEASE_TTL,
};
pub use server::{router, serve, ServerConfig, ServerState};

use crate::pipeline::Decision;
use crate::synth::PlantedTruth;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ReviewError {
    #[error("unknown window {0}")]
    UnknownWindow(String),
    #[error("window {0} already decided with a different payload")]
    AlreadyDecided(String),
    #[error("window {window_id} is leased to {holder}")]
    LeaseHeld { window_id: String, holder: String },
    #[error("window {0} has no spatial overlay")]
    MissingOverlay(String),
    #[error("review log: {0}")]
    Storage(String),
}

/// Anything that drains a review queue by submitting decisions.
pub trait Reviewer: Send + Sync {
    /// Decides every item it can obtain; returns the number decided.
    fn review(&self, queue: &ReviewQueue) -> crate::Result<usize>;
}

/// Acceptance probabilities for a simulated reviewer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReviewerRates {
    /// Probability of accepting a window that overlaps a planted lesion.
    pub accept_true: f64,
    /// Probability of accepting a window with no planted lesion.
    pub accept_false: f64,
}

impl Default for ReviewerRates {
    fn default() -> Self {
        Self {
            accept_true: 0.98,
            accept_false: 0.05,
        }
    }
}

/// Reviewer that decides against planted ground truth, seeded per window.
#[derive(Debug, Clone)]
pub struct SimulatedReviewer {
    pub truth: PlantedTruth,
    pub rates: ReviewerRates,
    pub seed: u64,
    pub reviewer_id: String,
}

impl SimulatedReviewer {
    pub fn new(truth: PlantedTruth, seed: u64) -> Self {
        Self {
            truth,
            rates: ReviewerRates::default(),
            seed,
            reviewer_id: "simulated".into(),
        }
    }

    pub fn with_rates(mut self, rates: ReviewerRates) -> Self {
        self.rates = rates;
        self
    }

    fn decide(&self, item: &ReviewItem) -> (Decision, Option<String>) {
        let digest = Sha256::new()
            .chain_update(self.seed.to_le_bytes())
            .chain_update(item.window_id.as_bytes())
            .finalize();
        let mut rng = ChaCha8Rng::from_seed(digest.into());
        let real = self.truth.overlaps(&item.sequence_id, item.start_frame, item.end_frame);
        let p = if real { self.rates.accept_true } else { self.rates.accept_false };
        if rng.random_bool(p.clamp(0.0, 1.0)) {
            (Decision::Accept, None)
        } else {
            (Decision::Reject, Some("no lesion visible in clip".into()))
        }
    }
}

impl Reviewer for SimulatedReviewer {
    fn review(&self, queue: &ReviewQueue) -> crate::Result<usize> {
        let mut n = 0;
        while let Some(item) = queue.next_item(&self.reviewer_id) {
            let (decision, note) = self.decide(&item);
            queue.submit_decision(&item.window_id, decision, note, &self.reviewer_id)?;
            n += 1;
        }
        Ok(n)
    }
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;
    use std::time::Duration;

    use proptest::prelude::*;

    use super::*;
    use crate::model::{BoxAnnotation, VideoWindow};
    use crate::pipeline::AnnotatedWindow;

    fn boxed(id: &str) -> AnnotatedWindow {
        let mut w = AnnotatedWindow::new(VideoWindow::new(id, "seq", 0, 9));
        w.boxes.push(BoxAnnotation::new(0, 1.0, 1.0, 4.0, 4.0, "polyp"));
        w
    }

    fn queue_of(n: usize) -> ReviewQueue {
        let q = ReviewQueue::new();
        let ws: Vec<_> = (0..n).map(|i| boxed(&format!("w{i:04}"))).collect();
        q.enqueue(&ws).unwrap();
        q
    }

    #[test]
    fn fresh_queue_stats() {
        let s = queue_of(5).stats();
        assert_eq!((s.enqueued, s.pending, s.accepted, s.rejected), (5, 5, 0, 0));
    }

    #[test]
    fn empty_queue_has_no_next() {
        assert!(ReviewQueue::new().next_item("a").is_none());
    }

    #[test]
    fn duplicate_enqueue_is_ignored() {
        let q = queue_of(3);
        let r = q.enqueue(&[boxed("w0000")]).unwrap();
        assert_eq!((r.added, r.already_queued), (0, 1));
        assert_eq!(q.len(), 3);
    }

    #[test]
    fn window_without_boxes_is_refused() {
        let q = ReviewQueue::new();
        let bare = AnnotatedWindow::new(VideoWindow::new("bare", "seq", 0, 9));
        assert_eq!(q.enqueue_one(&bare), Err(ReviewError::MissingOverlay("bare".into())));
        assert!(q.is_empty());
    }

    #[test]
    fn reject_69_of_597() {
        let q = queue_of(597);
        let mut i = 0;
        while let Some(item) = q.next_item("doc") {
            let d = if i < 69 { Decision::Reject } else { Decision::Accept };
            q.submit_decision(&item.window_id, d, None, "doc").unwrap();
            i += 1;
        }
        let s = q.stats();
        assert_eq!((s.pending, s.accepted, s.rejected), (0, 528, 69));
        assert!((s.rejection_rate_pct - 11.6).abs() <= 0.1);
    }

    #[test]
    fn identical_resubmit_is_noop_and_conflict_errors() {
        let q = queue_of(1);
        q.submit_decision("w0000", Decision::Reject, Some("blurry".into()), "a").unwrap();
        let before = q.events().len();
        q.submit_decision("w0000", Decision::Reject, Some("blurry".into()), "a").unwrap();
        assert_eq!(q.events().len(), before);
        assert_eq!(
            q.submit_decision("w0000", Decision::Accept, None, "a"),
            Err(ReviewError::AlreadyDecided("w0000".into()))
        );
        assert_eq!(
            q.submit_decision("nope", Decision::Accept, None, "a"),
            Err(ReviewError::UnknownWindow("nope".into()))
        );
    }

    #[test]
    fn leases_are_exclusive_until_expiry() {
        let clock = Arc::new(ManualClock::new(0));
        let q = queue_of(2).with_ttl(Duration::from_secs(60)).with_clock(clock.clone());
        let a = q.next_item("a").unwrap();
        let b = q.next_item("b").unwrap();
        assert_ne!(a.window_id, b.window_id);
        assert!(q.next_item("c").is_none());
        assert!(matches!(
            q.submit_decision(&a.window_id, Decision::Accept, None, "c"),
            Err(ReviewError::LeaseHeld { .. })
        ));
        clock.advance(Duration::from_secs(61));
        assert_eq!(q.next_item("c").unwrap().window_id, a.window_id);
    }

    #[test]
    fn log_file_replays_state() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("review.jsonl");
        {
            let q = ReviewQueue::open(&path).unwrap();
            q.enqueue(&[boxed("a"), boxed("b"), boxed("c")]).unwrap();
            q.submit_decision("b", Decision::Reject, Some("artifact".into()), "r").unwrap();
        }
        let q = ReviewQueue::open(&path).unwrap();
        let s = q.stats();
        assert_eq!((s.pending, s.accepted, s.rejected), (2, 0, 1));
        assert_eq!(q.item("b").unwrap().note.as_deref(), Some("artifact"));
    }

    #[test]
    fn simulated_reviewer_drains_queue() {
        let truth = crate::synth::generate(&crate::synth::SynthConfig::default());
        let q = queue_of(20);
        let n = SimulatedReviewer::new(truth, 3).review(&q).unwrap();
        assert_eq!(n, 20);
        assert_eq!(q.stats().pending, 0);
    }

    proptest! {
        #[test]
        fn counts_conserved_and_replay_exact(
            n in 1usize..30,
            ops in prop::collection::vec((0usize..40, any::<bool>(), 0u8..3), 0..60),
        ) {
            let q = queue_of(n);
            for (i, accept, who) in ops {
                let id = format!("w{i:04}");
                let d = if accept { Decision::Accept } else { Decision::Reject };
                let _ = q.submit_decision(&id, d, None, &format!("r{who}"));
                let s = q.stats();
                prop_assert_eq!(s.pending + s.accepted + s.rejected, s.enqueued);
            }
            let replayed = ReviewQueue::from_events(&q.events()).unwrap();
            prop_assert_eq!(replayed.items(), q.items());
            prop_assert_eq!(replayed.stats(), q.stats());
        }
    }
}
