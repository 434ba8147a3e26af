use std::collections::{BTreeMap, BTreeSet};

use futures::future::join_all;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{BenchClip, BenchManifest, ExcludedClip};
use crate::error::{Error, Result};
use crate::gateway::mock::stream;
use crate::gateway::{AgentRequest, AgentResponse, AgentRole, Gateway, McqDraft, MediaRef};
use crate::model::{check_options, McqItem, Provenance, Split, Task, OPTIONS_PER_QUESTION};
use crate::prompts::{format_options, PromptSet};

pub const QUESTIONS_PER_CLIP: usize = 3;

/// Asks the question writer for `n` drafts about `clip`, retrying once when
/// the reply fails structural validation.
pub async fn generate_mcqs(
    clip: &BenchClip,
    n: usize,
    split: Split,
    gateway: &Gateway,
    prompts: &PromptSet,
    seed: u64,
) -> Result<Vec<McqDraft>> {
    let desc = clip
        .description
        .as_deref()
        .filter(|d| !d.trim().is_empty())
        .ok_or_else(|| Error::Build(format!("clip {} has no descriptive text", clip.clip_id)))?;
    let prompt = prompts.render(AgentRole::WriteMcq, &[("n", &n.to_string()), ("description", desc)]);
    let media = MediaRef::clip(&clip.sequence_id, clip.start_frame, clip.end_frame, split == Split::Prompted);
    let mut last = String::new();
    for attempt in 0..2u64 {
        let req = AgentRequest::new(AgentRole::WriteMcq, prompt.clone())
            .with_media([media.clone()])
            .with_seed(seed.wrapping_add(attempt))
            .with_item(&clip.clip_id);
        match gateway.invoke(&req).await {
            Ok(AgentResponse::McqDrafts { drafts }) => match check_drafts(&drafts, n) {
                Ok(()) => return Ok(drafts),
                Err(e) => last = e,
            },
            Ok(other) => last = format!("unexpected reply {other:?}"),
            Err(e) => last = e.to_string(),
        }
    }
    Err(Error::Build(format!("clip {}: {last}", clip.clip_id)))
}

fn check_drafts(drafts: &[McqDraft], n: usize) -> std::result::Result<(), String> {
    if drafts.len() != n {
        return Err(format!("expected {n} drafts, got {}", drafts.len()));
    }
    for (i, d) in drafts.iter().enumerate() {
        check_options(&d.stem, &d.options, d.answer_index).map_err(|e| format!("draft {i}: {e}"))?;
    }
    Ok(())
}

/// Permutes options as a pure function of `(question_id, seed)`; seed 0 is
/// the identity. The answer index follows the answer text.
pub fn shuffle_options(item: &McqItem, seed: u64) -> McqItem {
    let mut out = item.clone();
    out.shuffle_seed = seed;
    if seed == 0 {
        return out;
    }
    let mut perm: Vec<usize> = (0..item.options.len()).collect();
    perm.shuffle(&mut stream(&[b"shuffle", item.question_id.as_bytes(), &seed.to_le_bytes()]));
    out.options = perm.iter().map(|&i| item.options[i].clone()).collect();
    out.answer_index = perm.iter().position(|&i| i == item.answer_index).expect("permutation");
    out
}

/// Blind answers for one question across the audit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlindEntry {
    pub original_answer: Option<usize>,
    pub original_correct: bool,
    /// Absent when the distractor rewrite failed.
    #[serde(default)]
    pub debiased_answer: Option<usize>,
    #[serde(default)]
    pub debiased_correct: Option<bool>,
    pub reverted: bool,
    /// Fresh blind pass over the final formulation.
    pub final_answer: Option<usize>,
    pub final_correct: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlindAudit {
    pub entries: BTreeMap<String, BlindEntry>,
    /// Share of final items the blind solver answers correctly.
    pub blind_accuracy: f64,
    pub debiased_ids: BTreeSet<String>,
    pub reverted_ids: BTreeSet<String>,
}

impl BlindAudit {
    /// Stored answers agree with the summary fields.
    pub fn is_consistent(&self) -> bool {
        let n = self.entries.len();
        let correct = self.entries.values().filter(|e| e.final_correct).count();
        let acc = if n == 0 { 0.0 } else { correct as f64 / n as f64 };
        let reverted: BTreeSet<String> = self.entries.iter().filter(|(_, e)| e.reverted).map(|(k, _)| k.clone()).collect();
        (acc - self.blind_accuracy).abs() < 1e-12 && reverted == self.reverted_ids && self.reverted_ids.is_subset(&self.debiased_ids)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DebiasOutcome {
    pub items: Vec<McqItem>,
    pub audit: BlindAudit,
}

async fn blind_answer(item: &McqItem, gateway: &Gateway, prompts: &PromptSet, seed: u64) -> Option<usize> {
    let prompt = prompts.render(
        AgentRole::BlindSolve,
        &[("stem", &item.stem), ("options", &format_options(&item.options))],
    );
    let req = AgentRequest::new(AgentRole::BlindSolve, prompt).with_seed(seed).with_item(&item.question_id);
    match gateway.invoke(&req).await {
        Ok(AgentResponse::OptionIndex { index }) => index.filter(|i| *i < OPTIONS_PER_QUESTION),
        _ => None,
    }
}

/// Distractors rewritten from stem and answer alone, answer kept at its
/// draft position before the seeded shuffle.
async fn rewrite(item: &McqItem, gateway: &Gateway, prompts: &PromptSet, seed: u64) -> Option<McqItem> {
    let prompt = prompts.render(
        AgentRole::RewriteDistractors,
        &[("stem", &item.stem), ("answer", item.answer_text())],
    );
    let req = AgentRequest::new(AgentRole::RewriteDistractors, prompt).with_seed(seed).with_item(&item.question_id);
    let Ok(AgentResponse::Distractors { distractors }) = gateway.invoke(&req).await else {
        return None;
    };
    let mut options = distractors;
    options.insert(item.answer_index.min(options.len()), item.answer_text().to_string());
    let answer_index = options.iter().position(|o| o == item.answer_text())?;
    check_options(&item.stem, &options, answer_index).ok()?;
    let candidate = McqItem {
        options,
        answer_index,
        provenance: Provenance::Debiased,
        ..item.clone()
    };
    Some(shuffle_options(&candidate, seed))
}

/// Two-stage debiasing: rewrite distractors, then revert any item the blind
/// solver gets right only after the rewrite. A final blind pass with a fresh
/// decode seed measures the residual text-only accuracy.
pub async fn debias_questions(items: &[McqItem], gateway: &Gateway, prompts: &PromptSet, seed: u64) -> DebiasOutcome {
    let staged = join_all(items.iter().map(|item| async move {
        let original = McqItem {
            provenance: Provenance::Original,
            ..item.clone()
        };
        let original_answer = blind_answer(&original, gateway, prompts, seed).await;
        let original_correct = original_answer == Some(original.answer_index);
        let Some(debiased) = rewrite(&original, gateway, prompts, seed).await else {
            return (original, original_answer, original_correct, None, false);
        };
        let debiased_answer = blind_answer(&debiased, gateway, prompts, seed).await;
        let debiased_correct = debiased_answer == Some(debiased.answer_index);
        if debiased_correct && !original_correct {
            let reverted = McqItem {
                provenance: Provenance::RevertedAfterBlindTest,
                ..original
            };
            (reverted, original_answer, original_correct, Some((debiased_answer, debiased_correct)), true)
        } else {
            (debiased, original_answer, original_correct, Some((debiased_answer, debiased_correct)), false)
        }
    }))
    .await;

    let audit_seed = seed.wrapping_add(1);
    let finals = join_all(staged.iter().map(|(item, ..)| blind_answer(item, gateway, prompts, audit_seed))).await;

    let mut audit = BlindAudit {
        entries: BTreeMap::new(),
        blind_accuracy: 0.0,
        debiased_ids: BTreeSet::new(),
        reverted_ids: BTreeSet::new(),
    };
    let mut out = Vec::with_capacity(staged.len());
    for ((item, original_answer, original_correct, debiased, reverted), final_answer) in staged.into_iter().zip(finals) {
        let id = item.question_id.clone();
        if debiased.is_some() {
            audit.debiased_ids.insert(id.clone());
        }
        if reverted {
            audit.reverted_ids.insert(id.clone());
        }
        audit.entries.insert(
            id,
            BlindEntry {
                original_answer,
                original_correct,
                debiased_answer: debiased.and_then(|d| d.0),
                debiased_correct: debiased.map(|d| d.1),
                reverted,
                final_answer,
                final_correct: final_answer == Some(item.answer_index),
            },
        );
        out.push(item);
    }
    let n = audit.entries.len();
    let correct = audit.entries.values().filter(|e| e.final_correct).count();
    audit.blind_accuracy = if n == 0 { 0.0 } else { correct as f64 / n as f64 };
    DebiasOutcome { items: out, audit }
}

/// Standalone blind pass over finished items.
pub async fn audit_blind(items: &[McqItem], gateway: &Gateway, prompts: &PromptSet, seed: u64) -> BlindAudit {
    let answers = join_all(items.iter().map(|i| blind_answer(i, gateway, prompts, seed))).await;
    let mut audit = BlindAudit {
        entries: BTreeMap::new(),
        blind_accuracy: 0.0,
        debiased_ids: BTreeSet::new(),
        reverted_ids: BTreeSet::new(),
    };
    for (item, answer) in items.iter().zip(answers) {
        let id = item.question_id.clone();
        let correct = answer == Some(item.answer_index);
        match item.provenance {
            Provenance::Original => {}
            Provenance::Debiased => {
                audit.debiased_ids.insert(id.clone());
            }
            Provenance::RevertedAfterBlindTest => {
                audit.debiased_ids.insert(id.clone());
                audit.reverted_ids.insert(id.clone());
            }
        }
        audit.entries.insert(
            id,
            BlindEntry {
                original_answer: answer,
                original_correct: correct,
                debiased_answer: None,
                debiased_correct: None,
                reverted: item.provenance == Provenance::RevertedAfterBlindTest,
                final_answer: answer,
                final_correct: correct,
            },
        );
    }
    let n = audit.entries.len();
    let correct = audit.entries.values().filter(|e| e.final_correct).count();
    audit.blind_accuracy = if n == 0 { 0.0 } else { correct as f64 / n as f64 };
    audit
}

/// Manifest, final items and the blind audit of one VQA split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VqaBuild {
    pub manifest: BenchManifest,
    pub items: Vec<McqItem>,
    pub audit: BlindAudit,
}

impl VqaBuild {
    pub fn items_jsonl(&self) -> String {
        self.items
            .iter()
            .map(|i| serde_json::to_string(i).expect("item serializes") + "\n")
            .collect()
    }

    /// Answer key by question id.
    pub fn key(&self) -> BTreeMap<String, usize> {
        self.items.iter().map(|i| (i.question_id.clone(), i.answer_index)).collect()
    }
}

/// Generates, debiases and audits questions for every clip. Clips whose
/// drafts fail twice are excluded and listed in the manifest.
pub async fn build_vqa_split(
    split: Split,
    clips: &[BenchClip],
    n: usize,
    gateway: &Gateway,
    prompts: &PromptSet,
    seed: u64,
) -> Result<VqaBuild> {
    let drafts = join_all(clips.iter().map(|c| generate_mcqs(c, n, split, gateway, prompts, seed))).await;
    let mut kept = Vec::new();
    let mut excluded = Vec::new();
    let mut items = Vec::new();
    for (clip, result) in clips.iter().zip(drafts) {
        match result {
            Ok(ds) => {
                for (i, d) in ds.into_iter().enumerate() {
                    items.push(McqItem {
                        question_id: format!("{}-q{i}", clip.clip_id),
                        clip_id: clip.clip_id.clone(),
                        stem: d.stem,
                        options: d.options,
                        answer_index: d.answer_index,
                        split,
                        provenance: Provenance::Original,
                        shuffle_seed: 0,
                    });
                }
                kept.push(clip.clone());
            }
            Err(e) => excluded.push(ExcludedClip {
                clip_id: clip.clip_id.clone(),
                reason: e.to_string(),
            }),
        }
    }
    let outcome = debias_questions(&items, gateway, prompts, seed).await;
    let task = match split {
        Split::Prompted => Task::VqaPrompted,
        Split::Unprompted => Task::VqaUnprompted,
    };
    let mut manifest = BenchManifest::new(task, seed, kept);
    manifest.question_ids = outcome.items.iter().map(|i| i.question_id.clone()).collect();
    manifest.excluded = excluded;
    manifest.recount();
    manifest.validate()?;
    Ok(VqaBuild {
        manifest,
        items: outcome.items,
        audit: outcome.audit,
    })
}
