//! Evaluate two simulated models on detection and VQA, print a leaderboard
//! and a skill A/B row.

use std::sync::Arc;

use lesion_funnel::bench::{self, KeywordMatcher};
use lesion_funnel::eval::{leaderboard, leaderboard_table, run_detection, run_vqa, skill_gain, skill_gain_table, RunSpec};
use lesion_funnel::gateway::mock::{simulated_gateway, SimRates};
use lesion_funnel::model::{Split, Task};
use lesion_funnel::prompts::{PromptSet, REFERENCE_SKILL};
use lesion_funnel::synth::{generate, SynthConfig};

#[tokio::main]
async fn main() -> lesion_funnel::Result<()> {
    let truth = Arc::new(generate(&SynthConfig {
        sequences: 3,
        lesions_per_sequence: 8,
        seed: 5,
        ..SynthConfig::default()
    }));
    let prompts = PromptSet::default();
    let matcher = KeywordMatcher::builtin();
    let windows = truth.curated_windows();
    let det = bench::build_detection_split(&windows, &truth.sequences, &matcher, 0)?;
    let clips = bench::clips_from_windows(&windows, &truth.sequences, &matcher)?;
    let builder = simulated_gateway(truth.clone(), Arc::default(), &SimRates::default(), 0);
    let vqa = bench::build_vqa_split(Split::Prompted, &clips, 3, &builder, &prompts, 0).await?;
    let key = Arc::new(vqa.key());

    let mut records = Vec::new();
    let mut gains = Vec::new();
    for (name, seed) in [("model-a", 1), ("model-b", 2)] {
        let gw = simulated_gateway(truth.clone(), key.clone(), &SimRates::default(), seed);
        let d = run_detection(&RunSpec::new(name, Task::Detection), &det, &gw, &prompts).await?;
        let base = run_vqa(&RunSpec::new(name, Task::VqaPrompted), &vqa.manifest, &vqa.items, &gw, &prompts).await?;
        let skilled = RunSpec::new(name, Task::VqaPrompted).with_skill(Some(REFERENCE_SKILL.into()));
        let with = run_vqa(&skilled, &vqa.manifest, &vqa.items, &gw, &prompts).await?;
        gains.push(skill_gain(name, "prompted", base.accuracy_pct, with.accuracy_pct));
        records.extend(d.records);
        records.extend(base.records);
    }
    print!("{}", leaderboard_table(&leaderboard(&records)?));
    print!("{}", skill_gain_table(&gains));
    Ok(())
}
