//! Command-line front end. The binary only parses arguments and calls [`run`].

use std::collections::{BTreeMap, BTreeSet};
use std::path::PathBuf;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};

use crate::bench::{self, KeywordMatcher, NegativeSampler};
use crate::error::{Error, Result};
use crate::eval::{self, OverlayMode, RunSpec, TemporalMode};
use crate::gateway::mock::{simulated_backend, simulated_gateway, SimRates};
use crate::gateway::{Gateway, GatewayConfig};
use crate::io::{read_json, read_jsonl, write_json, write_jsonl, DatasetManifest};
use crate::metrics::{score_lines, ScoreLine};
use crate::model::{EvalRecord, McqItem, Split, Task};
use crate::pipeline::{self, AnnotatedWindow, Journal, LabelInterval, Pipeline, RunConfig, RunStatus, SurrogateLabels};
use crate::prompts::PromptSet;
use crate::review::{self, ReviewQueue, ServerConfig, ServerState, SimulatedReviewer};
use crate::synth::{self, PlantedTruth, SynthConfig};
use crate::tracker::{self, HttpTracker, ReferenceTracker, TrackPrompt, TrackerBackend};

#[derive(Debug, Parser)]
#[command(name = "lesion-funnel", version, about = "Annotation funnel and evaluation harness for procedure videos")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic dataset with planted lesions.
    Synth(SynthArgs),
    /// Score a predictions JSONL against a ground-truth JSONL.
    Score(ScoreArgs),
    #[command(subcommand)]
    Pipeline(PipelineCommand),
    /// Propagate box prompts into mask tracklets.
    Track(TrackArgs),
    #[command(subcommand)]
    Bench(BenchCommand),
    #[command(subcommand)]
    Eval(EvalCommand),
    #[command(subcommand)]
    Review(ReviewCommand),
}

/// Where agent calls go.
#[derive(Debug, Clone, Args)]
pub struct BackendArgs {
    /// Gateway TOML listing backends and role routes.
    #[arg(long)]
    pub backends: Option<PathBuf>,
    /// Planted truth written by `synth`; drives the simulated backend.
    #[arg(long)]
    pub truth: Option<PathBuf>,
    /// Seed of the simulated backend.
    #[arg(long, default_value_t = 0)]
    pub sim_seed: u64,
    /// Directory of prompt templates overriding the built-in ones.
    #[arg(long)]
    pub prompts: Option<PathBuf>,
}

/// Backend id that needs no gateway file, only `--truth`.
pub const SIM_BACKEND: &str = "sim";

impl BackendArgs {
    fn prompt_set(&self) -> Result<PromptSet> {
        self.prompts.as_deref().map_or_else(|| Ok(PromptSet::default()), PromptSet::from_dir)
    }

    fn truth(&self) -> Result<Option<Arc<PlantedTruth>>> {
        self.truth.as_deref().map(|p| read_json(p).map(Arc::new)).transpose()
    }

    /// Routes every role to `backend` when given, else uses the file's routes.
    fn gateway(&self, backend: Option<&str>, vqa_key: BTreeMap<String, usize>) -> Result<Gateway> {
        let truth = self.truth()?;
        let key = Arc::new(vqa_key);
        let rates = SimRates::default();
        let sim = || {
            truth.clone().ok_or_else(|| Error::Config(format!("backend `{SIM_BACKEND}` needs --truth")))
        };
        match (&self.backends, backend) {
            (None, None) | (_, Some(SIM_BACKEND)) => Ok(simulated_gateway(sim()?, key, &rates, self.sim_seed)),
            (None, Some(other)) => Err(Error::Config(format!("backend `{other}` needs --backends"))),
            (Some(path), choice) => {
                let cfg = GatewayConfig::load(path)?;
                let mock = |_: &crate::gateway::BackendConfig| {
                    truth.clone().map(|t| simulated_backend(t, key.clone(), &rates, self.sim_seed))
                };
                Ok(match choice {
                    Some(id) => cfg.build_single(id, mock)?,
                    None => cfg.build(mock)?,
                })
            }
        }
    }
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 4)]
    pub sequences: usize,
    #[arg(long, default_value_t = 6000)]
    pub frames: u64,
    #[arg(long, default_value_t = 6)]
    pub lesions: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct ScoreArgs {
    #[arg(long)]
    pub pred: PathBuf,
    #[arg(long)]
    pub gt: PathBuf,
    /// Also write the report here.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum PipelineCommand {
    /// Run (or resume) the funnel, journaling every step.
    Run(PipelineRunArgs),
    /// Per-stage funnel table from a journal.
    Report(PipelineReportArgs),
}

#[derive(Debug, Args)]
pub struct PipelineRunArgs {
    /// Dataset manifest JSON.
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long, default_value = "propose,merge,verify,track,confirm,review")]
    pub stages: String,
    #[arg(long)]
    pub journal: PathBuf,
    #[command(flatten)]
    pub backend: BackendArgs,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 0)]
    pub max_gap: u64,
    #[arg(long, default_value_t = 5)]
    pub detect_stride: u64,
    /// Tracker: `ref` or `http`.
    #[arg(long, default_value = "ref")]
    pub tracker: String,
    #[arg(long)]
    pub tracker_url: Option<String>,
    /// Review decision log; the review stage waits on it.
    #[arg(long)]
    pub review_log: Option<PathBuf>,
    /// Decide review items with the simulated reviewer (needs --truth).
    #[arg(long)]
    pub simulate_review: bool,
    /// Write the surviving windows as JSONL.
    #[arg(long)]
    pub windows_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PipelineReportArgs {
    #[arg(long)]
    pub journal: PathBuf,
    /// Positive frame spans, one `{sequence_id, start_frame, end_frame}` per line.
    #[arg(long)]
    pub gt: Option<PathBuf>,
    #[arg(long)]
    pub fps: Option<f64>,
    /// Write the JSON report here instead of stdout.
    #[arg(long)]
    pub json: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrackArgs {
    /// One track prompt per line.
    #[arg(long)]
    pub prompts: PathBuf,
    /// `ref` or `http`.
    #[arg(long, default_value = "ref")]
    pub backend: String,
    #[arg(long)]
    pub url: Option<String>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Subcommand)]
pub enum BenchCommand {
    /// Assemble one benchmark task.
    Build(BenchBuildArgs),
    /// Text-only answering pass over finished questions.
    AuditBlind(AuditBlindArgs),
}

#[derive(Debug, Args)]
pub struct BenchBuildArgs {
    /// vqa-prompted, vqa-unprompted, cls, det or seg.
    #[arg(long)]
    pub task: Task,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Curated windows JSONL (from `pipeline run --windows-out` or `synth`).
    #[arg(long)]
    pub windows: PathBuf,
    /// Dataset manifest JSON.
    #[arg(long)]
    pub manifest: PathBuf,
    /// Pipeline journal whose windows, rejected ones included, negatives avoid.
    #[arg(long)]
    pub journal: Option<PathBuf>,
    /// Keyword map JSON; the built-in map when absent.
    #[arg(long)]
    pub keywords: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub backend: BackendArgs,
}

#[derive(Debug, Args)]
pub struct AuditBlindArgs {
    #[arg(long)]
    pub items: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub backend: BackendArgs,
}

#[derive(Debug, Subcommand)]
pub enum EvalCommand {
    /// Evaluate one model on one task.
    Run(EvalRunArgs),
    /// Combined results table from record files.
    Report(EvalReportArgs),
    /// Distill the questions most models miss into skill text.
    Skill(EvalSkillArgs),
}

#[derive(Debug, Args)]
pub struct EvalRunArgs {
    /// Backend id in --backends, or `sim`.
    #[arg(long)]
    pub model: String,
    /// Name recorded in the output; the backend id when absent.
    #[arg(long)]
    pub model_id: Option<String>,
    #[arg(long)]
    pub task: Task,
    /// Benchmark manifest from `bench build`.
    #[arg(long)]
    pub manifest: PathBuf,
    /// Question items, for VQA tasks.
    #[arg(long)]
    pub items: Option<PathBuf>,
    /// Skill text prepended to VQA prompts.
    #[arg(long)]
    pub skill: Option<PathBuf>,
    #[arg(long, default_value_t = eval::DEFAULT_FRAMES)]
    pub frames: usize,
    #[arg(long, default_value = "video")]
    pub temporal: TemporalMode,
    /// `box` or `raw`; defaults to `box` for the prompted split.
    #[arg(long)]
    pub overlay: Option<OverlayMode>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Records JSONL.
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub backend: BackendArgs,
}

#[derive(Debug, Args)]
pub struct EvalReportArgs {
    #[arg(long, num_args = 1.., required = true)]
    pub runs: Vec<PathBuf>,
    #[arg(long)]
    pub csv: Option<PathBuf>,
    #[arg(long)]
    pub json: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalSkillArgs {
    /// VQA record files of at least three models.
    #[arg(long, num_args = 1.., required = true)]
    pub runs: Vec<PathBuf>,
    #[arg(long)]
    pub items: PathBuf,
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub backend: BackendArgs,
}

#[derive(Debug, Subcommand)]
pub enum ReviewCommand {
    /// Serve the review API.
    Serve(ReviewServeArgs),
}

#[derive(Debug, Args)]
pub struct ReviewServeArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Windows JSONL to enqueue before serving.
    #[arg(long)]
    pub enqueue: Option<PathBuf>,
}

fn print_json<T: serde::Serialize>(value: &T) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

fn tracker_backend(kind: &str, url: Option<&str>) -> Result<Box<dyn TrackerBackend>> {
    match (kind, url) {
        ("ref", _) => Ok(Box::new(ReferenceTracker)),
        ("http", Some(u)) => Ok(Box::new(HttpTracker::new(u))),
        ("http", None) => Err(Error::Config("the http tracker needs a url".into())),
        (other, _) => Err(Error::Config(format!("unknown tracker `{other}`"))),
    }
}

pub async fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Synth(a) => synth_cmd(a),
        Command::Score(a) => {
            let preds: Vec<ScoreLine> = read_jsonl(&a.pred)?;
            let gts: Vec<ScoreLine> = read_jsonl(&a.gt)?;
            let report = score_lines(&preds, &gts)?;
            if let Some(p) = &a.out {
                write_json(p, &report)?;
            }
            print_json(&report)
        }
        Command::Pipeline(PipelineCommand::Run(a)) => pipeline_run(a).await,
        Command::Pipeline(PipelineCommand::Report(a)) => pipeline_report(a),
        Command::Track(a) => track_cmd(a).await,
        Command::Bench(BenchCommand::Build(a)) => bench_build(a).await,
        Command::Bench(BenchCommand::AuditBlind(a)) => {
            let items: Vec<McqItem> = read_jsonl(&a.items)?;
            let gw = a.backend.gateway(None, BTreeMap::new())?;
            let audit = bench::audit_blind(&items, &gw, &a.backend.prompt_set()?, a.seed).await;
            if let Some(p) = &a.out {
                write_json(p, &audit)?;
            }
            print_json(&serde_json::json!({
                "questions": audit.entries.len(),
                "blind_accuracy": audit.blind_accuracy,
                "debiased": audit.debiased_ids.len(),
                "reverted": audit.reverted_ids.len(),
            }))
        }
        Command::Eval(EvalCommand::Run(a)) => eval_run(a).await,
        Command::Eval(EvalCommand::Report(a)) => {
            let mut records = Vec::new();
            for p in &a.runs {
                records.extend(eval::read_records(p)?);
            }
            let rows = eval::leaderboard(&records)?;
            if let Some(p) = &a.csv {
                std::fs::write(p, eval::leaderboard_csv(&rows)?).map_err(|e| Error::io(p, e))?;
            }
            if let Some(p) = &a.json {
                write_json(p, &rows)?;
            }
            print!("{}", eval::leaderboard_table(&rows));
            Ok(())
        }
        Command::Eval(EvalCommand::Skill(a)) => eval_skill(a).await,
        Command::Review(ReviewCommand::Serve(a)) => {
            let cfg = ServerConfig::load(&a.config)?;
            let queue = ReviewQueue::open(&cfg.log_path)?.with_ttl(cfg.lease_ttl());
            if let Some(p) = &a.enqueue {
                let windows: Vec<AnnotatedWindow> = read_jsonl(p)?;
                let r = queue.enqueue(&windows)?;
                tracing::info!(added = r.added, skipped = r.missing_overlay.len(), "enqueued");
            }
            let mut state = ServerState::new(Arc::new(queue));
            if let Some(t) = cfg.resolve_token()? {
                state = state.with_token(t);
            }
            review::serve(&cfg, state).await
        }
    }
}

fn synth_cmd(a: SynthArgs) -> Result<()> {
    let cfg = SynthConfig {
        sequences: a.sequences,
        frames_per_sequence: a.frames,
        lesions_per_sequence: a.lesions,
        seed: a.seed,
        ..SynthConfig::default()
    };
    let truth = synth::generate(&cfg);
    std::fs::create_dir_all(&a.out).map_err(|e| Error::io(&a.out, e))?;
    write_json(
        &a.out.join("manifest.json"),
        &DatasetManifest {
            sequences: truth.sequences.clone(),
        },
    )?;
    write_json(&a.out.join("truth.json"), &truth)?;
    write_jsonl(&a.out.join("labels.jsonl"), &truth.label_intervals())?;
    write_jsonl(&a.out.join("curated.jsonl"), &truth.curated_windows())?;
    print_json(&serde_json::json!({
        "sequences": truth.sequences.len(),
        "lesions": truth.lesions.len(),
        "out": a.out,
    }))
}

async fn pipeline_run(a: PipelineRunArgs) -> Result<()> {
    let manifest = DatasetManifest::load(&a.manifest)?;
    let journal = Arc::new(Journal::open(&a.journal)?);
    let gw = Pipeline::prepare_gateway(a.backend.gateway(None, BTreeMap::new())?, &journal);
    let config = RunConfig {
        stages: pipeline::parse_stages(&a.stages)?,
        max_gap_frames: a.max_gap,
        detect_stride: a.detect_stride,
        seed: a.seed,
    };
    let tracker = tracker_backend(&a.tracker, a.tracker_url.as_deref())?;
    let queue = match &a.review_log {
        Some(p) => ReviewQueue::open(p)?,
        None => ReviewQueue::new(),
    };
    let reviewer = if a.simulate_review {
        let truth = a.backend.truth()?.ok_or_else(|| Error::Config("--simulate-review needs --truth".into()))?;
        Some(SimulatedReviewer::new((*truth).clone(), a.seed))
    } else {
        None
    };
    let mut p = Pipeline::new(config, manifest.sequences, &gw, journal.clone());
    p.tracker = tracker.as_ref();
    p.prompts = a.backend.prompt_set()?;
    p.review = Some(&queue);
    p.reviewer = reviewer.as_ref().map(|r| r as &dyn review::Reviewer);
    let outcome = p.run().await?;
    if let Some(path) = &a.windows_out {
        write_jsonl(path, outcome.final_windows())?;
    }
    let report = pipeline::funnel_report(&outcome.history, None, None);
    print!("{}", report.to_text());
    match outcome.status {
        RunStatus::Complete => println!("status: complete"),
        RunStatus::AwaitingReview { pending } => println!("status: awaiting review ({pending} pending)"),
    }
    Ok(())
}

fn pipeline_report(a: PipelineReportArgs) -> Result<()> {
    let entries = Journal::load(&a.journal)?;
    let sequences = match entries.first() {
        Some(pipeline::JournalEntry::Start { sequences, .. }) => sequences.clone(),
        _ => return Err(Error::Parse(format!("{}: no start entry", a.journal.display()))),
    };
    let gt = a
        .gt
        .as_deref()
        .map(|p| read_jsonl::<LabelInterval>(p).map(|l| SurrogateLabels::from_intervals(&l, &sequences)))
        .transpose()?;
    let report = pipeline::funnel_report(&pipeline::history_in(&entries), a.fps, gt.as_ref());
    match &a.json {
        Some(p) => write_json(p, &report)?,
        None => print_json(&report)?,
    }
    print!("{}", report.to_text());
    Ok(())
}

async fn track_cmd(a: TrackArgs) -> Result<()> {
    let prompts: Vec<TrackPrompt> = read_jsonl(&a.prompts)?;
    let backend = tracker_backend(&a.backend, a.url.as_deref())?;
    let mut tracklets = Vec::with_capacity(prompts.len());
    let mut gaps = 0;
    for p in &prompts {
        let out = tracker::propagate(p, backend.as_ref()).await?;
        gaps += out.gaps.len();
        tracklets.push(out.tracklet);
    }
    write_jsonl(&a.out, &tracklets)?;
    print_json(&serde_json::json!({"tracklets": tracklets.len(), "gap_frames": gaps}))
}

async fn bench_build(a: BenchBuildArgs) -> Result<()> {
    let windows: Vec<AnnotatedWindow> = read_jsonl(&a.windows)?;
    let sequences = DatasetManifest::load(&a.manifest)?.sequences;
    let matcher = match &a.keywords {
        Some(p) => KeywordMatcher::load(p)?,
        None => KeywordMatcher::builtin(),
    };
    std::fs::create_dir_all(&a.out).map_err(|e| Error::io(&a.out, e))?;
    let stem = a.task.cli_name();
    let manifest = match a.task {
        Task::Classification => {
            let positives = bench::clips_from_windows(&windows, &sequences, &matcher)?;
            let mut avoid = windows.clone();
            if let Some(j) = &a.journal {
                for s in pipeline::history_in(&Journal::load(j)?) {
                    avoid.extend(s.windows);
                    avoid.extend(s.rejected);
                }
            }
            let sampler = NegativeSampler::excluding(&sequences, &avoid);
            bench::build_classification_split(&positives, &sampler, a.seed)?
        }
        Task::Detection => bench::build_detection_split(&windows, &sequences, &matcher, a.seed)?,
        Task::Segmentation => bench::build_segmentation_split(&windows, &sequences, &matcher, a.seed)?,
        Task::VqaPrompted | Task::VqaUnprompted => {
            let split = a.task.split().expect("vqa task has a split");
            let mut clips = bench::clips_from_windows(&windows, &sequences, &matcher)?;
            if split == Split::Prompted {
                clips.retain(|c| c.description.is_some());
            }
            let gw = a.backend.gateway(None, BTreeMap::new())?;
            let built = bench::build_vqa_split(split, &clips, bench::QUESTIONS_PER_CLIP, &gw, &a.backend.prompt_set()?, a.seed).await?;
            let items = a.out.join(format!("{stem}.items.jsonl"));
            std::fs::write(&items, built.items_jsonl()).map_err(|e| Error::io(&items, e))?;
            write_json(&a.out.join(format!("{stem}.audit.json")), &built.audit)?;
            built.manifest
        }
    };
    let path = a.out.join(format!("{stem}.manifest.json"));
    std::fs::write(&path, manifest.to_json()).map_err(|e| Error::io(&path, e))?;
    print_json(&manifest.counts)
}

async fn eval_run(a: EvalRunArgs) -> Result<()> {
    let manifest: bench::BenchManifest = read_json(&a.manifest)?;
    manifest.validate()?;
    if manifest.task != a.task && !(a.task.is_vqa() && manifest.task.is_vqa()) {
        return Err(Error::Config(format!("manifest holds {:?}, not {:?}", manifest.task, a.task)));
    }
    let items: Vec<McqItem> = match (&a.items, a.task.is_vqa()) {
        (Some(p), true) => read_jsonl(p)?,
        (None, true) => return Err(Error::Config("VQA tasks need --items".into())),
        (_, false) => Vec::new(),
    };
    let skill = a
        .skill
        .as_deref()
        .map(|p| std::fs::read_to_string(p).map_err(|e| Error::io(p, e)))
        .transpose()?;
    let key = items.iter().map(|i| (i.question_id.clone(), i.answer_index)).collect();
    let gw = a.backend.gateway(Some(&a.model), key)?;
    let prompts = a.backend.prompt_set()?;
    let mut spec = RunSpec::new(a.model_id.as_deref().unwrap_or(&a.model), a.task)
        .with_skill(skill)
        .with_frames(a.frames)
        .with_temporal(a.temporal)
        .with_seed(a.seed);
    if let Some(o) = a.overlay {
        spec = spec.with_overlay(o);
    }
    let (records, summary) = match a.task {
        Task::VqaPrompted | Task::VqaUnprompted => {
            let r = eval::run_vqa(&spec, &manifest, &items, &gw, &prompts).await?;
            let s = serde_json::json!({"accuracy": r.accuracy_pct, "answered": r.answered, "total": r.total, "per_category": r.per_category});
            (r.records, s)
        }
        Task::Classification => {
            let r = eval::run_classification(&spec, &manifest, &gw, &prompts).await?;
            let [accuracy, precision, recall, f1] = r.metrics.percent();
            (r.records, serde_json::json!({"accuracy": accuracy, "precision": precision, "recall": recall, "f1": f1}))
        }
        Task::Detection => {
            let r = eval::run_detection(&spec, &manifest, &gw, &prompts).await?;
            let s = serde_json::json!({
                "precision": 100.0 * r.scores.precision,
                "recall": 100.0 * r.scores.recall,
                "f1": 100.0 * r.scores.f1,
                "ap50": 100.0 * r.ap50,
                "map50_95": 100.0 * r.map50_95,
                "failed_frames": r.failed_frames,
            });
            (r.records, s)
        }
        Task::Segmentation => {
            let det = eval::run_detection(&spec, &manifest, &gw, &prompts).await?;
            let r = eval::run_segmentation(&spec, &manifest, &det, &ReferenceTracker).await?;
            let s = serde_json::json!({"miou": 100.0 * r.miou, "mdice": 100.0 * r.mdice, "frames": r.frames});
            (r.records, s)
        }
    };
    eval::write_records(&a.out, &records)?;
    print_json(&summary)
}

async fn eval_skill(a: EvalSkillArgs) -> Result<()> {
    let mut records = Vec::<EvalRecord>::new();
    for p in &a.runs {
        records.extend(eval::read_records(p)?);
    }
    records.retain(|r| r.task.is_vqa());
    let items: Vec<McqItem> = read_jsonl(&a.items)?;
    let manifest: bench::BenchManifest = read_json(&a.manifest)?;
    let clip_cats: BTreeMap<&str, &BTreeSet<String>> = manifest.clips.iter().map(|c| (c.clip_id.as_str(), &c.categories)).collect();
    let item_categories: BTreeMap<String, BTreeSet<String>> = items
        .iter()
        .map(|i| (i.question_id.clone(), clip_cats.get(i.clip_id.as_str()).map(|c| (*c).clone()).unwrap_or_default()))
        .collect();
    let categories: BTreeSet<String> = item_categories.values().flatten().cloned().collect();
    let strat = eval::stratify_errors(&records, &item_categories, &categories.into_iter().collect::<Vec<_>>())?;
    let failures: Vec<McqItem> = items.into_iter().filter(|i| strat.majority_wrong.contains(&i.question_id)).collect();
    let gw = a.backend.gateway(None, BTreeMap::new())?;
    let skill = eval::build_skill(&failures, &item_categories, &gw, &a.backend.prompt_set()?, a.seed).await?;
    std::fs::write(&a.out, &skill.text).map_err(|e| Error::io(&a.out, e))?;
    print_json(&serde_json::json!({
        "version": skill.version,
        "source_items": skill.source_items.len(),
        "normalized_error": strat.normalized,
    }))
}

/// Convenience for tests and examples: parse and run an argument list.
pub async fn run_args<I, S>(args: I) -> Result<()>
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = Cli::try_parse_from(args).map_err(|e| Error::Config(e.to_string()))?;
    run(cli).await
}
