//! Versioned prompt templates, one per agent role.
//!
//! Templates are configuration: the built-in set ships under `fixtures/prompts`
//! and a directory of same-named files can replace any of them.

use std::collections::BTreeMap;
use std::path::Path;

use crate::error::{Error, Result};
use crate::gateway::AgentRole;

const BUILTIN: &[(AgentRole, &str)] = &[
    (AgentRole::Propose, include_str!("../fixtures/prompts/propose.txt")),
    (AgentRole::Verify, include_str!("../fixtures/prompts/verify.txt")),
    (AgentRole::Confirm, include_str!("../fixtures/prompts/confirm.txt")),
    (AgentRole::WriteMcq, include_str!("../fixtures/prompts/write_mcq.txt")),
    (AgentRole::RewriteDistractors, include_str!("../fixtures/prompts/rewrite_distractors.txt")),
    (AgentRole::BlindSolve, include_str!("../fixtures/prompts/blind_solve.txt")),
    (AgentRole::SynthesizeSkill, include_str!("../fixtures/prompts/synthesize_skill.txt")),
    (AgentRole::Classify, include_str!("../fixtures/prompts/classify.txt")),
    (AgentRole::Detect, include_str!("../fixtures/prompts/detect.txt")),
    (AgentRole::AnswerVqa, include_str!("../fixtures/prompts/answer_vqa.txt")),
];

/// The reference skill text shipped with the crate.
pub const REFERENCE_SKILL: &str = include_str!("../fixtures/skill.md");

pub const OPTION_LETTERS: [char; 5] = ['A', 'B', 'C', 'D', 'E'];

#[derive(Debug, Clone)]
pub struct PromptSet {
    templates: BTreeMap<AgentRole, String>,
}

impl Default for PromptSet {
    fn default() -> Self {
        Self {
            templates: BUILTIN.iter().map(|(r, t)| (*r, t.to_string())).collect(),
        }
    }
}

impl PromptSet {
    /// Built-in templates overridden by any `<role>.txt` found in `dir`.
    pub fn from_dir(dir: &Path) -> Result<Self> {
        let mut set = Self::default();
        for (role, _) in BUILTIN {
            let path = dir.join(format!("{}.txt", role.file_stem()));
            if path.exists() {
                let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
                set.templates.insert(*role, text);
            }
        }
        Ok(set)
    }

    pub fn template(&self, role: AgentRole) -> &str {
        &self.templates[&role]
    }

    /// First-line version tag, e.g. `1` for `# prompt-version: 1`.
    pub fn version(&self, role: AgentRole) -> Option<&str> {
        self.template(role)
            .lines()
            .next()
            .and_then(|l| l.strip_prefix("# prompt-version:"))
            .map(str::trim)
    }

    pub fn render(&self, role: AgentRole, vars: &[(&str, &str)]) -> String {
        render(self.template(role), vars)
    }
}

/// Substitutes `{key}` placeholders; unknown braces are left alone.
pub fn render(template: &str, vars: &[(&str, &str)]) -> String {
    let mut out = template.to_string();
    for (k, v) in vars {
        out = out.replace(&format!("{{{k}}}"), v);
    }
    out
}

/// `A. first` ... `E. fifth`, one per line.
pub fn format_options(options: &[String]) -> String {
    options
        .iter()
        .zip(OPTION_LETTERS)
        .map(|(o, l)| format!("{l}. {o}"))
        .collect::<Vec<_>>()
        .join("\n")
}

/// Value of the first `TAG: value` line in a rendered prompt.
pub fn tagged_line<'a>(prompt: &'a str, tag: &str) -> Option<&'a str> {
    prompt
        .lines()
        .find_map(|l| l.strip_prefix(tag).and_then(|r| r.strip_prefix(": ")))
}

/// Options listed as `A. text` lines.
pub fn parse_options(prompt: &str) -> Vec<String> {
    prompt
        .lines()
        .filter_map(|l| {
            let mut chars = l.chars();
            let letter = chars.next()?;
            OPTION_LETTERS.contains(&letter).then_some(())?;
            l.get(1..)?.strip_prefix(". ").map(str::to_string)
        })
        .collect()
}
