//! Deterministic mock backends.
//!
//! Each [`MockResponder`] answers one role from a [`PlantedTruth`] or an
//! answer key. All randomness is drawn from a ChaCha stream seeded by
//! hashing the request hash (or item id) together with the responder seed,
//! so every reply is a pure function of `(request, seed, knobs)`.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use async_trait::async_trait;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use super::{AgentRequest, AgentRole, Backend, BackendError, GatewayError, MediaRef};
use crate::prompts::{parse_options, tagged_line};
use crate::synth::{PlantedTruth, LOCATIONS, SYNTH_CATEGORIES};

/// Failure injected by a mock.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MockFailure {
    Timeout,
    RateLimited,
    Auth,
    /// Replies with prose that no schema accepts.
    Malformed,
}

impl MockFailure {
    fn raise(self) -> Result<Value, BackendError> {
        match self {
            MockFailure::Timeout => Err(BackendError::Timeout),
            MockFailure::RateLimited => Err(BackendError::RateLimited { retry_after_ms: Some(1) }),
            MockFailure::Auth => Err(BackendError::Auth("mock credentials rejected".into())),
            MockFailure::Malformed => Ok(Value::String("I am not sure what this shows.".into())),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ProposeKnobs {
    pub truth: Arc<PlantedTruth>,
    /// Probability that a planted lesion yields a proposal.
    pub hit_rate: f64,
    /// Probability that a hit is emitted as two overlapping fragments.
    pub fragment_rate: f64,
    /// Frames added on both sides of a lesion.
    pub pad_frames: u64,
    /// Lesion-free proposals per sequence.
    pub false_windows: usize,
    pub false_len: (u64, u64),
}

#[derive(Debug, Clone)]
pub struct VerdictKnobs {
    pub truth: Arc<PlantedTruth>,
    /// Accept rate for clips overlapping a lesion.
    pub tpr: f64,
    /// Accept rate for lesion-free clips.
    pub fpr: f64,
}

#[derive(Debug, Clone)]
pub struct DetectKnobs {
    pub truth: Arc<PlantedTruth>,
    /// Gaussian jitter on every box coordinate, in pixels.
    pub sigma_px: f64,
    pub miss_rate: f64,
    /// Probability of one spurious box per frame.
    pub false_box_rate: f64,
}

#[derive(Debug, Clone)]
pub enum ClassifyKnobs {
    Truth {
        truth: Arc<PlantedTruth>,
        tpr: f64,
        fpr: f64,
    },
    Always(bool),
}

#[derive(Debug, Clone)]
pub struct VqaKnobs {
    /// Question id → correct option index.
    pub key: Arc<BTreeMap<String, usize>>,
    pub accuracy: f64,
    /// Accuracy added when the request carries a skill context.
    pub skill_bonus: f64,
    /// Per-question accuracy overriding `accuracy`.
    pub item_accuracy: Arc<BTreeMap<String, f64>>,
}

impl VqaKnobs {
    pub fn new(key: Arc<BTreeMap<String, usize>>, accuracy: f64) -> Self {
        Self {
            key,
            accuracy,
            skill_bonus: 0.0,
            item_accuracy: Arc::default(),
        }
    }
}

#[derive(Debug, Clone)]
pub enum BlindStrategy {
    Uniform,
    LongestOption,
    Keyed {
        key: Arc<BTreeMap<String, usize>>,
        accuracy: f64,
    },
}

#[derive(Debug, Clone)]
pub enum MockKnobs {
    Propose(ProposeKnobs),
    Verify(VerdictKnobs),
    Confirm(VerdictKnobs),
    Detect(DetectKnobs),
    Classify(ClassifyKnobs),
    AnswerVqa(VqaKnobs),
    BlindSolve(BlindStrategy),
    WriteMcq,
    RewriteDistractors,
    SynthesizeSkill { text: String },
    /// Every call fails.
    Failing(MockFailure),
    /// The first `fail_first` attempts of every request fail.
    Flaky {
        inner: Box<MockKnobs>,
        fail_first: u32,
        failure: MockFailure,
    },
    /// A fixed, hash-selected fraction of requests always fails.
    Unreliable {
        inner: Box<MockKnobs>,
        fail_rate: f64,
        failure: MockFailure,
    },
}

impl MockKnobs {
    fn role(&self) -> Option<AgentRole> {
        Some(match self {
            MockKnobs::Propose(_) => AgentRole::Propose,
            MockKnobs::Verify(_) => AgentRole::Verify,
            MockKnobs::Confirm(_) => AgentRole::Confirm,
            MockKnobs::Detect(_) => AgentRole::Detect,
            MockKnobs::Classify(_) => AgentRole::Classify,
            MockKnobs::AnswerVqa(_) => AgentRole::AnswerVqa,
            MockKnobs::BlindSolve(_) => AgentRole::BlindSolve,
            MockKnobs::WriteMcq => AgentRole::WriteMcq,
            MockKnobs::RewriteDistractors => AgentRole::RewriteDistractors,
            MockKnobs::SynthesizeSkill { .. } => AgentRole::SynthesizeSkill,
            MockKnobs::Failing(_) => return None,
            MockKnobs::Flaky { inner, .. } | MockKnobs::Unreliable { inner, .. } => return inner.role(),
        })
    }
}

/// A deterministic responder for one role.
#[derive(Debug, Clone)]
pub struct MockResponder {
    role: AgentRole,
    seed: u64,
    knobs: MockKnobs,
}

/// Checks that `knobs` fit `role` and builds the responder.
pub fn mock_behavior(role: AgentRole, seed: u64, knobs: MockKnobs) -> Result<MockResponder, GatewayError> {
    match knobs.role() {
        Some(r) if r != role => Err(GatewayError::config(format!(
            "mock knobs for {r:?} cannot drive role {role:?}"
        ))),
        _ => Ok(MockResponder { role, seed, knobs }),
    }
}

/// Seeds a ChaCha stream from the SHA-256 of length-prefixed parts.
pub(crate) fn stream(parts: &[&[u8]]) -> ChaCha8Rng {
    let mut h = Sha256::new();
    for p in parts {
        h.update((p.len() as u64).to_le_bytes());
        h.update(p);
    }
    ChaCha8Rng::from_seed(h.finalize().into())
}

impl MockResponder {
    pub fn role(&self) -> AgentRole {
        self.role
    }

    pub fn respond(&self, req: &AgentRequest, attempt: u32) -> Result<Value, BackendError> {
        if req.role != self.role {
            return Err(BackendError::Config(format!("responder for {:?} got {:?}", self.role, req.role)));
        }
        let hash = req.hash();
        self.respond_with(&self.knobs, req, &hash, attempt)
    }

    fn rng(&self, key: &str, salt: &str) -> ChaCha8Rng {
        stream(&[key.as_bytes(), &self.seed.to_le_bytes(), salt.as_bytes()])
    }

    fn respond_with(&self, knobs: &MockKnobs, req: &AgentRequest, hash: &str, attempt: u32) -> Result<Value, BackendError> {
        match knobs {
            MockKnobs::Failing(f) => f.raise(),
            MockKnobs::Flaky {
                inner,
                fail_first,
                failure,
            } => {
                if attempt < *fail_first {
                    failure.raise()
                } else {
                    self.respond_with(inner, req, hash, attempt)
                }
            }
            MockKnobs::Unreliable {
                inner,
                fail_rate,
                failure,
            } => {
                // keyed on the item so the reformat retry fails too
                let key = req.item_id.as_deref().unwrap_or(hash);
                if self.rng(key, "unreliable").random_bool(fail_rate.clamp(0.0, 1.0)) {
                    failure.raise()
                } else {
                    self.respond_with(inner, req, hash, attempt)
                }
            }
            MockKnobs::Propose(k) => Ok(self.propose(k, req, hash)),
            MockKnobs::Verify(k) => Ok(self.verdict(k, req, hash, false)),
            MockKnobs::Confirm(k) => Ok(self.verdict(k, req, hash, true)),
            MockKnobs::Detect(k) => Ok(self.detect(k, req, hash)),
            MockKnobs::Classify(k) => Ok(self.classify(k, req, hash)),
            MockKnobs::AnswerVqa(k) => Ok(self.answer_vqa(k, req, hash)),
            MockKnobs::BlindSolve(s) => Ok(self.blind(s, req, hash)),
            MockKnobs::WriteMcq => Ok(self.write_mcq(req, hash)),
            MockKnobs::RewriteDistractors => Ok(self.rewrite(req, hash)),
            MockKnobs::SynthesizeSkill { text } => Ok(json!({ "skill": text })),
        }
    }

    fn propose(&self, k: &ProposeKnobs, req: &AgentRequest, hash: &str) -> Value {
        let Some(seq) = req.media.first().map(MediaRef::sequence_id) else {
            return json!({ "windows": [] });
        };
        let Some(video) = k.truth.sequence(seq) else {
            return json!({ "windows": [] });
        };
        let last = video.frame_count - 1;
        let mut rng = self.rng(hash, "propose");
        let mut windows = Vec::new();
        for l in k.truth.lesions_in(seq) {
            if !rng.random_bool(k.hit_rate.clamp(0.0, 1.0)) {
                continue;
            }
            let s = l.start_frame.saturating_sub(k.pad_frames);
            let e = (l.end_frame + k.pad_frames).min(last);
            if e > s && rng.random_bool(k.fragment_rate.clamp(0.0, 1.0)) {
                let cut = rng.random_range(s..e);
                windows.push(span(s, cut, &l.description));
                windows.push(span(cut + 1, e, &l.description));
            } else {
                windows.push(span(s, e, &l.description));
            }
        }
        let (lo, hi) = k.false_len;
        let mut placed = 0;
        let mut tries = 0;
        while placed < k.false_windows && tries < k.false_windows * 50 {
            tries += 1;
            let len = rng.random_range(lo.max(1)..=hi.max(lo.max(1))).min(video.frame_count);
            let s = rng.random_range(0..=video.frame_count - len);
            let e = s + len - 1;
            // keep a margin so padding of true proposals never touches false ones
            let guard = k.pad_frames + 1;
            if k.truth.overlaps(seq, s.saturating_sub(guard), e + guard)
                || windows.iter().any(|w: &Value| overlaps_span(w, s, e))
            {
                continue;
            }
            let cat = SYNTH_CATEGORIES[rng.random_range(0..SYNTH_CATEGORIES.len())];
            windows.push(span(s, e, &format!("possible {cat}")));
            placed += 1;
        }
        json!({ "windows": windows })
    }

    fn verdict(&self, k: &VerdictKnobs, req: &AgentRequest, hash: &str, confirm: bool) -> Value {
        let Some(MediaRef::Clip {
            sequence_id,
            start_frame,
            end_frame,
            ..
        }) = req.media.first()
        else {
            return json!({ "decision": "reject", "text": "no clip supplied" });
        };
        let lesion = k
            .truth
            .lesions_overlapping(sequence_id, *start_frame, *end_frame)
            .next();
        let rate = if lesion.is_some() { k.tpr } else { k.fpr };
        let accept = self.rng(hash, "verdict").random_bool(rate.clamp(0.0, 1.0));
        let text = match (accept, lesion, confirm) {
            (true, Some(l), false) => l.description.clone(),
            (true, Some(l), true) => format!("Overlay tracks the {}.", l.category),
            (true, None, false) => tagged_line(&req.prompt, "PROPOSAL").unwrap_or("possible finding").to_string(),
            (true, None, true) => "Overlay marks a suspected finding.".to_string(),
            (false, _, _) => "No definite lesion; normal mucosa or artifact.".to_string(),
        };
        json!({ "decision": if accept { "accept" } else { "reject" }, "text": text })
    }

    fn detect(&self, k: &DetectKnobs, req: &AgentRequest, hash: &str) -> Value {
        let Some(MediaRef::Frame {
            sequence_id,
            frame_index,
        }) = req.media.first()
        else {
            return json!({ "boxes": [] });
        };
        let Some(size) = k.truth.frame_size(sequence_id) else {
            return json!({ "boxes": [] });
        };
        let mut rng = self.rng(hash, "detect");
        let noise = Normal::new(0.0, k.sigma_px.max(0.0)).expect("finite sigma");
        let mut boxes = Vec::new();
        for b in k.truth.boxes_at(sequence_id, *frame_index) {
            if rng.random_bool(k.miss_rate.clamp(0.0, 1.0)) {
                continue;
            }
            let mut j = b.clone();
            if k.sigma_px > 0.0 {
                j.x += noise.sample(&mut rng);
                j.y += noise.sample(&mut rng);
                j.w = (j.w + noise.sample(&mut rng)).max(1.0);
                j.h = (j.h + noise.sample(&mut rng)).max(1.0);
            }
            if let Some(c) = j.clamped(size) {
                boxes.push(json!({ "x": c.x, "y": c.y, "w": c.w, "h": c.h, "label": c.label }));
            }
        }
        if rng.random_bool(k.false_box_rate.clamp(0.0, 1.0)) {
            let (fw, fh) = (size.width as f64, size.height as f64);
            let w = rng.random_range(0.1..0.3) * fw;
            let h = rng.random_range(0.1..0.3) * fh;
            let x = rng.random_range(0.0..fw - w);
            let y = rng.random_range(0.0..fh - h);
            boxes.push(json!({ "x": x, "y": y, "w": w, "h": h, "label": "lesion" }));
        }
        json!({ "boxes": boxes })
    }

    fn classify(&self, k: &ClassifyKnobs, req: &AgentRequest, hash: &str) -> Value {
        let positive = match k {
            ClassifyKnobs::Always(p) => *p,
            ClassifyKnobs::Truth { truth, tpr, fpr } => {
                let lesion = match req.media.first() {
                    Some(MediaRef::Clip {
                        sequence_id,
                        start_frame,
                        end_frame,
                        ..
                    }) => truth.overlaps(sequence_id, *start_frame, *end_frame),
                    Some(MediaRef::Frame {
                        sequence_id,
                        frame_index,
                    }) => truth.overlaps(sequence_id, *frame_index, *frame_index),
                    None => false,
                };
                let rate = if lesion { *tpr } else { *fpr };
                self.rng(hash, "classify").random_bool(rate.clamp(0.0, 1.0))
            }
        };
        json!({ "label": if positive { "positive" } else { "negative" } })
    }

    fn answer_vqa(&self, k: &VqaKnobs, req: &AgentRequest, hash: &str) -> Value {
        let keyed = req.item_id.as_ref().and_then(|id| k.key.get(id).map(|&a| (id, a)));
        let Some((id, answer)) = keyed else {
            return json!({ "answer": self.rng(hash, "vqa").random_range(0..5usize) });
        };
        // drawn per item, not per request, so runs with and without a skill are paired
        let mut rng = self.rng(id, "vqa");
        let base = k.item_accuracy.get(id).copied().unwrap_or(k.accuracy);
        let p = if req.context.is_some() { base + k.skill_bonus } else { base };
        let u: f64 = rng.random();
        let wrong = (answer + rng.random_range(1..5usize)) % 5;
        json!({ "answer": if u < p { answer } else { wrong } })
    }

    fn blind(&self, s: &BlindStrategy, req: &AgentRequest, hash: &str) -> Value {
        let options = parse_options(&req.prompt);
        let n = options.len().max(1);
        let index = match s {
            BlindStrategy::Uniform => self.rng(hash, "blind").random_range(0..n),
            BlindStrategy::LongestOption => options
                .iter()
                .enumerate()
                .max_by_key(|(i, o)| (o.chars().count(), std::cmp::Reverse(*i)))
                .map_or(0, |(i, _)| i),
            BlindStrategy::Keyed { key, accuracy } => {
                let mut rng = self.rng(hash, "blind");
                match req.item_id.as_ref().and_then(|id| key.get(id)) {
                    Some(&a) if rng.random_bool(accuracy.clamp(0.0, 1.0)) => a,
                    Some(&a) => (a + rng.random_range(1..5usize)) % 5,
                    None => rng.random_range(0..n),
                }
            }
        };
        json!({ "answer": index })
    }

    fn write_mcq(&self, req: &AgentRequest, hash: &str) -> Value {
        let desc = tagged_line(&req.prompt, "DESCRIPTION").unwrap_or("").trim();
        if desc.is_empty() {
            return Value::String("There is no description to write questions about.".into());
        }
        let n: usize = tagged_line(&req.prompt, "COUNT").and_then(|c| c.trim().parse().ok()).unwrap_or(3);
        let mut rng = self.rng(hash, "write_mcq");
        let category = SYNTH_CATEGORIES
            .iter()
            .find(|c| desc.to_lowercase().contains(*c))
            .copied()
            .unwrap_or("lesion");
        let location = LOCATIONS
            .iter()
            .find(|l| desc.contains(*l))
            .copied()
            .unwrap_or("in the colon");

        let mut questions = Vec::with_capacity(n);
        for i in 0..n {
            let round = i / 3;
            let suffix = if round == 0 { String::new() } else { format!(" (variant {})", round + 1) };
            let (stem, answer, mut pool): (String, String, Vec<String>) = match i % 3 {
                0 => (
                    format!("Which finding is visible in this clip?{suffix}"),
                    desc.to_string(),
                    SYNTH_CATEGORIES.iter().filter(|c| **c != category).map(|c| c.to_string()).collect(),
                ),
                1 => (
                    format!("Where is the finding located?{suffix}"),
                    location.to_string(),
                    LOCATIONS.iter().filter(|l| **l != location).map(|l| l.to_string()).collect(),
                ),
                _ => {
                    let opts = TEMPORAL_OPTIONS.map(String::from).to_vec();
                    let a = opts[rng.random_range(0..opts.len())].clone();
                    (format!("When is the finding most clearly visible?{suffix}"), a, opts)
                }
            };
            pool.retain(|p| *p != answer);
            pool.shuffle(&mut rng);
            pool.truncate(4);
            let at = rng.random_range(0..5usize);
            pool.insert(at, answer);
            questions.push(json!({ "stem": stem, "options": pool, "answer_index": at }));
        }
        json!({ "questions": questions })
    }

    fn rewrite(&self, req: &AgentRequest, hash: &str) -> Value {
        let answer = tagged_line(&req.prompt, "ANSWER").unwrap_or("").trim().to_string();
        let mut rng = self.rng(hash, "rewrite");
        let mut pool: Vec<String> = SYNTH_CATEGORIES
            .iter()
            .flat_map(|c| LOCATIONS.iter().map(move |l| format!("{c} {l}")))
            .chain(LOCATIONS.iter().map(|l| l.to_string()))
            .chain(TEMPORAL_OPTIONS.iter().map(|t| t.to_string()))
            .collect();
        pool.shuffle(&mut rng);
        let target = answer.chars().count() as i64;
        pool.sort_by_key(|p| (p.chars().count() as i64 - target).abs());
        let mut seen = BTreeSet::from([answer.to_lowercase()]);
        let distractors: Vec<String> = pool.into_iter().filter(|p| seen.insert(p.to_lowercase())).take(4).collect();
        json!({ "distractors": distractors })
    }
}

const TEMPORAL_OPTIONS: [&str; 5] = [
    "At the start of the clip",
    "In the middle of the clip",
    "Near the end of the clip",
    "Throughout the whole clip",
    "Only in a single frame",
];

fn span(start: u64, end: u64, desc: &str) -> Value {
    json!({ "start_frame": start, "end_frame": end, "description": desc })
}

fn overlaps_span(w: &Value, s: u64, e: u64) -> bool {
    let a = w["start_frame"].as_u64().unwrap_or(0);
    let b = w["end_frame"].as_u64().unwrap_or(0);
    a <= e && s <= b
}

/// Behavior of every role in a fully simulated backend.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimRates {
    pub propose_hit_rate: f64,
    pub fragment_rate: f64,
    pub pad_frames: u64,
    pub false_windows_per_sequence: usize,
    pub false_len: (u64, u64),
    pub verify_tpr: f64,
    pub verify_fpr: f64,
    pub confirm_tpr: f64,
    pub confirm_fpr: f64,
    pub detect_sigma_px: f64,
    pub detect_miss_rate: f64,
    pub detect_false_box_rate: f64,
    pub classify_tpr: f64,
    pub classify_fpr: f64,
    pub vqa_accuracy: f64,
    pub vqa_skill_bonus: f64,
    pub skill_text: String,
}

impl Default for SimRates {
    fn default() -> Self {
        Self {
            propose_hit_rate: 0.95,
            fragment_rate: 0.2,
            pad_frames: 10,
            false_windows_per_sequence: 12,
            false_len: (30, 150),
            verify_tpr: 0.9,
            verify_fpr: 0.1,
            confirm_tpr: 0.9,
            confirm_fpr: 0.05,
            detect_sigma_px: 1.0,
            detect_miss_rate: 0.05,
            detect_false_box_rate: 0.1,
            classify_tpr: 0.85,
            classify_fpr: 0.15,
            vqa_accuracy: 0.6,
            vqa_skill_bonus: 0.05,
            skill_text: crate::prompts::REFERENCE_SKILL.to_string(),
        }
    }
}

/// A backend answering every role from planted truth and a VQA answer key.
pub fn simulated_backend(truth: Arc<PlantedTruth>, vqa_key: Arc<BTreeMap<String, usize>>, rates: &SimRates, seed: u64) -> MockBackend {
    let verdict = |tpr, fpr| VerdictKnobs {
        truth: truth.clone(),
        tpr,
        fpr,
    };
    let knobs = [
        (
            AgentRole::Propose,
            MockKnobs::Propose(ProposeKnobs {
                truth: truth.clone(),
                hit_rate: rates.propose_hit_rate,
                fragment_rate: rates.fragment_rate,
                pad_frames: rates.pad_frames,
                false_windows: rates.false_windows_per_sequence,
                false_len: rates.false_len,
            }),
        ),
        (AgentRole::Verify, MockKnobs::Verify(verdict(rates.verify_tpr, rates.verify_fpr))),
        (AgentRole::Confirm, MockKnobs::Confirm(verdict(rates.confirm_tpr, rates.confirm_fpr))),
        (
            AgentRole::Detect,
            MockKnobs::Detect(DetectKnobs {
                truth: truth.clone(),
                sigma_px: rates.detect_sigma_px,
                miss_rate: rates.detect_miss_rate,
                false_box_rate: rates.detect_false_box_rate,
            }),
        ),
        (
            AgentRole::Classify,
            MockKnobs::Classify(ClassifyKnobs::Truth {
                truth: truth.clone(),
                tpr: rates.classify_tpr,
                fpr: rates.classify_fpr,
            }),
        ),
        (
            AgentRole::AnswerVqa,
            MockKnobs::AnswerVqa(VqaKnobs {
                skill_bonus: rates.vqa_skill_bonus,
                ..VqaKnobs::new(vqa_key, rates.vqa_accuracy)
            }),
        ),
        (AgentRole::BlindSolve, MockKnobs::BlindSolve(BlindStrategy::Uniform)),
        (AgentRole::WriteMcq, MockKnobs::WriteMcq),
        (AgentRole::RewriteDistractors, MockKnobs::RewriteDistractors),
        (
            AgentRole::SynthesizeSkill,
            MockKnobs::SynthesizeSkill {
                text: rates.skill_text.clone(),
            },
        ),
    ];
    knobs.into_iter().fold(MockBackend::new(), |b, (role, k)| {
        b.behave(role, seed, k).expect("knobs match their roles")
    })
}

/// [`simulated_backend`] behind a gateway routing every role to one client.
pub fn simulated_gateway(truth: Arc<PlantedTruth>, vqa_key: Arc<BTreeMap<String, usize>>, rates: &SimRates, seed: u64) -> super::Gateway {
    let cfg = super::BackendConfig {
        max_concurrent: 64,
        ..super::BackendConfig::mock("simulated")
    };
    let client = super::AgentClient::from_config(cfg, Some(simulated_backend(truth, vqa_key, rates, seed)))
        .expect("mock config is valid");
    super::Gateway::new().route_all(Arc::new(client))
}

/// Routes each role to its responder.
#[derive(Debug, Clone, Default)]
pub struct MockBackend {
    responders: BTreeMap<AgentRole, MockResponder>,
}

impl MockBackend {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, responder: MockResponder) -> Self {
        self.responders.insert(responder.role, responder);
        self
    }

    /// Shorthand for `with(mock_behavior(role, seed, knobs)?)`.
    pub fn behave(self, role: AgentRole, seed: u64, knobs: MockKnobs) -> Result<Self, GatewayError> {
        Ok(self.with(mock_behavior(role, seed, knobs)?))
    }
}

#[async_trait]
impl Backend for MockBackend {
    async fn call(&self, req: &AgentRequest, attempt: u32) -> Result<Value, BackendError> {
        match self.responders.get(&req.role) {
            Some(r) => r.respond(req, attempt),
            None => Err(BackendError::Config(format!("no mock behavior for {:?}", req.role))),
        }
    }
}
