//! Strict per-role response schemas.
//!
//! Models often wrap JSON in prose or code fences, so a string payload is
//! searched for the outermost JSON object before validation.

use serde::Deserialize;
use serde_json::Value;

use super::{AgentResponse, AgentRole, McqDraft, ProposedSpan};
use crate::model::BoxAnnotation;

/// Parses a raw backend payload into the role's response, or explains why not.
pub fn parse_response(role: AgentRole, raw: &Value) -> Result<AgentResponse, String> {
    let value = coerce(raw)?;
    match role {
        AgentRole::Propose => {
            #[derive(Deserialize)]
            struct P {
                windows: Vec<ProposedSpan>,
            }
            let p: P = from(value)?;
            if let Some(w) = p.windows.iter().find(|w| w.start_frame > w.end_frame) {
                return Err(format!("window {}..{} is inverted", w.start_frame, w.end_frame));
            }
            Ok(AgentResponse::Windows { windows: p.windows })
        }
        AgentRole::Verify | AgentRole::Confirm => {
            #[derive(Deserialize)]
            struct V {
                decision: String,
                #[serde(default)]
                text: Option<String>,
            }
            let v: V = from(value)?;
            let accept = match v.decision.trim().to_ascii_lowercase().as_str() {
                "accept" => true,
                "reject" => false,
                other => return Err(format!("unknown decision `{other}`")),
            };
            let text = v.text.filter(|t| !t.trim().is_empty());
            if role == AgentRole::Confirm && accept && text.is_none() {
                return Err("confirmation accept requires a note".into());
            }
            Ok(AgentResponse::Verdict { accept, text })
        }
        AgentRole::WriteMcq => {
            #[derive(Deserialize)]
            struct Q {
                questions: Vec<McqDraft>,
            }
            let q: Q = from(value)?;
            Ok(AgentResponse::McqDrafts { drafts: q.questions })
        }
        AgentRole::RewriteDistractors => {
            #[derive(Deserialize)]
            struct D {
                distractors: Vec<String>,
            }
            let d: D = from(value)?;
            if d.distractors.len() != 4 {
                return Err(format!("expected 4 distractors, got {}", d.distractors.len()));
            }
            Ok(AgentResponse::Distractors {
                distractors: d.distractors,
            })
        }
        AgentRole::BlindSolve | AgentRole::AnswerVqa => {
            let answer = value
                .get("answer")
                .ok_or_else(|| "missing `answer`".to_string())?;
            let index = match answer {
                Value::Null => None,
                Value::Number(n) => Some(n.as_u64().ok_or("answer index must be a non-negative integer")? as usize),
                Value::String(s) => Some(letter_index(s)?),
                _ => return Err("answer must be a letter, an index or null".into()),
            };
            Ok(AgentResponse::OptionIndex { index })
        }
        AgentRole::Classify => {
            let label = value
                .get("label")
                .and_then(Value::as_str)
                .ok_or_else(|| "missing string `label`".to_string())?;
            let lesion_present = match label.trim().to_ascii_lowercase().as_str() {
                "positive" | "yes" | "lesion" => true,
                "negative" | "no" | "no lesion" => false,
                other => return Err(format!("unknown label `{other}`")),
            };
            Ok(AgentResponse::Classification { lesion_present })
        }
        AgentRole::Detect => {
            #[derive(Deserialize)]
            struct RawBox {
                x: f64,
                y: f64,
                w: f64,
                h: f64,
                #[serde(default)]
                label: String,
                #[serde(default)]
                confidence: Option<f64>,
            }
            #[derive(Deserialize)]
            struct B {
                boxes: Vec<RawBox>,
            }
            let b: B = from(value)?;
            let mut boxes = Vec::with_capacity(b.boxes.len());
            for r in b.boxes {
                if !(r.w > 0.0 && r.h > 0.0 && r.x.is_finite() && r.y.is_finite()) {
                    return Err(format!("degenerate box ({}, {}, {}, {})", r.x, r.y, r.w, r.h));
                }
                if r.confidence.is_some_and(|c| !(0.0..=1.0).contains(&c)) {
                    return Err("confidence outside [0, 1]".into());
                }
                // the frame index is filled in by the caller, which knows the frame
                let mut b = BoxAnnotation::new(0, r.x, r.y, r.w, r.h, r.label);
                b.confidence = r.confidence;
                boxes.push(b);
            }
            Ok(AgentResponse::Boxes { boxes })
        }
        AgentRole::SynthesizeSkill => {
            let text = value
                .get("skill")
                .and_then(Value::as_str)
                .filter(|s| !s.trim().is_empty())
                .ok_or_else(|| "missing non-empty `skill`".to_string())?;
            Ok(AgentResponse::Skill { text: text.to_string() })
        }
    }
}

fn from<T: serde::de::DeserializeOwned>(v: Value) -> Result<T, String> {
    serde_json::from_value(v).map_err(|e| e.to_string())
}

fn letter_index(s: &str) -> Result<usize, String> {
    let t = s.trim().trim_start_matches('(').trim_end_matches([')', '.']);
    let mut chars = t.chars();
    match (chars.next(), chars.next()) {
        (Some(c), None) if ('A'..='E').contains(&c.to_ascii_uppercase()) => {
            Ok((c.to_ascii_uppercase() as u8 - b'A') as usize)
        }
        _ => Err(format!("answer `{s}` is not one of A-E")),
    }
}

fn coerce(raw: &Value) -> Result<Value, String> {
    match raw {
        Value::Object(_) => Ok(raw.clone()),
        Value::String(s) => {
            let s = s.trim();
            if let Ok(v @ Value::Object(_)) = serde_json::from_str(s) {
                return Ok(v);
            }
            let (start, end) = (s.find('{'), s.rfind('}'));
            match (start, end) {
                (Some(a), Some(b)) if a < b => match serde_json::from_str(&s[a..=b]) {
                    Ok(v @ Value::Object(_)) => Ok(v),
                    _ => Err("no JSON object in reply".into()),
                },
                _ => Err("no JSON object in reply".into()),
            }
        }
        _ => Err("reply is not a JSON object".into()),
    }
}
