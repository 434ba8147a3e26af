//! Model evaluation over benchmark manifests: VQA, classification, detection
//! and box-prompted segmentation, plus error stratification, skill synthesis
//! and leaderboard tables rebuilt from raw records.

mod analysis;
mod report;
mod tasks;

use serde::{Deserialize, Serialize};

pub use analysis::{build_skill, skill_gain, skill_gain_csv, skill_gain_table, stratify_errors, SkillArtifact, SkillGain, Stratification};
pub use report::{leaderboard, leaderboard_csv, leaderboard_table, read_records, write_records, LeaderboardRow};
pub use tasks::{
    run_classification, run_detection, run_segmentation, run_vqa, CategoryScore, ClassificationResult, ClipSegmentation,
    DetectionResult, SegmentationResult, VqaResult,
};

use crate::error::{Error, Result};
use crate::model::Task;
use crate::tracker::MAX_PROMPTS;

/// Default detection frames per window.
pub const DEFAULT_FRAMES: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TemporalMode {
    #[default]
    Video,
    /// The window's midpoint frame only.
    SingleFrame,
}

impl std::str::FromStr for TemporalMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "video" => Ok(Self::Video),
            "frame" | "single-frame" => Ok(Self::SingleFrame),
            other => Err(Error::Config(format!("unknown temporal mode `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OverlayMode {
    WithBox,
    #[default]
    Raw,
}

impl std::str::FromStr for OverlayMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "box" => Ok(Self::WithBox),
            "raw" => Ok(Self::Raw),
            other => Err(Error::Config(format!("unknown overlay mode `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunOptions {
    /// Prepended to every VQA prompt when set.
    #[serde(default)]
    pub skill_context: Option<String>,
    /// Detection frames per window; segmentation prompts come from these.
    pub frames_per_window: usize,
    #[serde(default)]
    pub temporal_mode: TemporalMode,
    /// Box overlay on VQA clips.
    #[serde(default)]
    pub overlay: OverlayMode,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            skill_context: None,
            frames_per_window: DEFAULT_FRAMES,
            temporal_mode: TemporalMode::Video,
            overlay: OverlayMode::Raw,
        }
    }
}

/// One model on one task under fixed options.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSpec {
    pub model_id: String,
    pub task: Task,
    #[serde(default)]
    pub options: RunOptions,
    #[serde(default)]
    pub seed: u64,
}

impl RunSpec {
    pub fn new(model_id: impl Into<String>, task: Task) -> Self {
        let overlay = if task == Task::VqaPrompted { OverlayMode::WithBox } else { OverlayMode::Raw };
        Self {
            model_id: model_id.into(),
            task,
            options: RunOptions {
                overlay,
                ..RunOptions::default()
            },
            seed: 0,
        }
    }

    pub fn with_skill(mut self, skill: Option<String>) -> Self {
        self.options.skill_context = skill;
        self
    }

    pub fn with_frames(mut self, k: usize) -> Self {
        self.options.frames_per_window = k;
        self
    }

    pub fn with_temporal(mut self, mode: TemporalMode) -> Self {
        self.options.temporal_mode = mode;
        self
    }

    pub fn with_overlay(mut self, overlay: OverlayMode) -> Self {
        self.options.overlay = overlay;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.options.frames_per_window;
        if !(1..=MAX_PROMPTS).contains(&k) {
            return Err(Error::Config(format!("frames per window must be 1..={MAX_PROMPTS}, got {k}")));
        }
        Ok(())
    }
}
