//! The staged annotation funnel.
//!
//! Proposals are merged, verified by an agent, localized by detection plus
//! tracking, confirmed by a second agent looking at the box overlay, and
//! finally gated by human review. Each stage partitions its input into
//! retained and rejected windows; rejected windows are archived with the name
//! of the stage that rejected them. [`Pipeline`] runs the stages against a
//! [`crate::gateway::Gateway`] and records everything in a [`Journal`] so an
//! interrupted run resumes and a finished run replays exactly.

mod journal;
mod report;
mod runner;
mod stages;

pub use journal::{calls_in, history_in, Journal, JournalEntry};
pub use report::{funnel_report, mean_bbox_coverage, LabelInterval, stage_stats, FunnelReport, StageSnapshot, SurrogateLabels};
pub use runner::{parse_stages, Pipeline, RunConfig, RunOutcome, RunStatus, StageName};
pub use stages::{
    apply_stage, attach_spatial, merge_windows, stage_after, Actor, AnnotatedWindow, Decision, StageOutcome,
    StageVerdict,
};
