use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::gateway::{AgentRequest, AgentResponse, AgentRole, Gateway};
use crate::model::{EvalRecord, McqItem};
use crate::prompts::PromptSet;

/// Per-category error rates relative to each model's mean, plus the
/// questions most models get wrong.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stratification {
    pub mean_error: BTreeMap<String, f64>,
    /// model -> category -> category error rate / model mean error rate.
    pub normalized: BTreeMap<String, BTreeMap<String, f64>>,
    /// Items answered wrong by strictly more than half the models that saw them.
    pub majority_wrong: BTreeSet<String>,
    /// Requested categories with no questions.
    pub excluded_categories: Vec<String>,
}

pub fn stratify_errors(
    records: &[EvalRecord],
    item_categories: &BTreeMap<String, BTreeSet<String>>,
    categories: &[String],
) -> Result<Stratification> {
    let scored: Vec<&EvalRecord> = records.iter().filter(|r| r.correct.is_some()).collect();
    let models: BTreeSet<&str> = scored.iter().map(|r| r.model_id.as_str()).collect();
    if models.len() < 3 {
        return Err(Error::Config(format!("stratification needs at least 3 models, got {}", models.len())));
    }
    let wrong = |r: &EvalRecord| r.correct == Some(false);

    let present: BTreeSet<&str> = scored
        .iter()
        .flat_map(|r| item_categories.get(&r.item_id).into_iter().flatten())
        .map(String::as_str)
        .collect();
    let (kept, excluded): (Vec<&String>, Vec<&String>) = categories.iter().partition(|c| present.contains(c.as_str()));

    let mut mean_error = BTreeMap::new();
    let mut normalized = BTreeMap::new();
    for m in &models {
        let mine: Vec<&&EvalRecord> = scored.iter().filter(|r| r.model_id == *m).collect();
        let mean = mine.iter().filter(|r| wrong(r)).count() as f64 / mine.len() as f64;
        let mut per_cat = BTreeMap::new();
        for c in &kept {
            let in_cat: Vec<&&&EvalRecord> = mine
                .iter()
                .filter(|r| item_categories.get(&r.item_id).is_some_and(|cs| cs.contains(*c)))
                .collect();
            if in_cat.is_empty() {
                continue;
            }
            let rate = in_cat.iter().filter(|r| wrong(r)).count() as f64 / in_cat.len() as f64;
            // a model with no errors at all sits exactly at its own average
            per_cat.insert((*c).clone(), if mean == 0.0 { 1.0 } else { rate / mean });
        }
        mean_error.insert(m.to_string(), mean);
        normalized.insert(m.to_string(), per_cat);
    }

    let mut tally: BTreeMap<&str, (usize, usize)> = BTreeMap::new();
    for r in &scored {
        let e = tally.entry(r.item_id.as_str()).or_default();
        e.0 += usize::from(wrong(r));
        e.1 += 1;
    }
    Ok(Stratification {
        mean_error,
        normalized,
        majority_wrong: tally
            .into_iter()
            .filter(|(_, (w, n))| 2 * w > *n)
            .map(|(id, _)| id.to_string())
            .collect(),
        excluded_categories: excluded.into_iter().cloned().collect(),
    })
}

/// Synthesized guidance text with a content-derived version.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkillArtifact {
    pub version: String,
    pub prompt_version: Option<String>,
    pub source_items: Vec<String>,
    pub text: String,
}

/// Asks the skill synthesizer to summarize the failure cases.
pub async fn build_skill(
    failures: &[McqItem],
    item_categories: &BTreeMap<String, BTreeSet<String>>,
    gateway: &Gateway,
    prompts: &PromptSet,
    seed: u64,
) -> Result<SkillArtifact> {
    if failures.is_empty() {
        return Err(Error::Build("no failure cases to synthesize a skill from".into()));
    }
    let mut cases = String::new();
    for item in failures {
        let cats = item_categories
            .get(&item.question_id)
            .map(|c| c.iter().cloned().collect::<Vec<_>>().join(", "))
            .unwrap_or_default();
        let _ = writeln!(cases, "- [{cats}] Q: {} | A: {}", item.stem, item.answer_text());
    }
    let req = AgentRequest::new(AgentRole::SynthesizeSkill, prompts.render(AgentRole::SynthesizeSkill, &[("cases", &cases)]))
        .with_seed(seed);
    let text = match gateway.invoke(&req).await? {
        AgentResponse::Skill { text } => text,
        other => return Err(Error::Build(format!("unexpected skill reply {other:?}"))),
    };
    let digest = Sha256::digest(text.as_bytes());
    Ok(SkillArtifact {
        version: hex::encode(&digest[..6]),
        prompt_version: prompts.version(AgentRole::SynthesizeSkill).map(str::to_string),
        source_items: failures.iter().map(|i| i.question_id.clone()).collect(),
        text,
    })
}

/// One row of the skill A/B table, in percent and percentage points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkillGain {
    pub model_id: String,
    pub split: String,
    pub baseline_pct: f64,
    pub with_skill_pct: f64,
    pub delta_pp: f64,
}

pub fn skill_gain(model_id: &str, split: &str, baseline_pct: f64, with_skill_pct: f64) -> SkillGain {
    SkillGain {
        model_id: model_id.to_string(),
        split: split.to_string(),
        baseline_pct,
        with_skill_pct,
        delta_pp: with_skill_pct - baseline_pct,
    }
}

pub fn skill_gain_table(rows: &[SkillGain]) -> String {
    let mut out = format!("{:<24} {:<16} {:>9} {:>12} {:>7}\n", "Model", "Split", "Baseline", "w/ Skill", "Δ");
    for r in rows {
        let _ = writeln!(
            out,
            "{:<24} {:<16} {:>9.1} {:>12.1} {:>+7.1}",
            r.model_id, r.split, r.baseline_pct, r.with_skill_pct, r.delta_pp
        );
    }
    out
}

pub fn skill_gain_csv(rows: &[SkillGain]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["model", "split", "baseline", "w/ skill", "delta"])
        .map_err(|e| Error::Parse(e.to_string()))?;
    for r in rows {
        w.write_record([
            r.model_id.clone(),
            r.split.clone(),
            format!("{:.1}", r.baseline_pct),
            format!("{:.1}", r.with_skill_pct),
            format!("{:+.1}", r.delta_pp),
        ])
        .map_err(|e| Error::Parse(e.to_string()))?;
    }
    String::from_utf8(w.into_inner().map_err(|e| Error::Parse(e.to_string()))?).map_err(|e| Error::Parse(e.to_string()))
}
