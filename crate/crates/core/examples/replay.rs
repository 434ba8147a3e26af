//! Record a run into a journal file, then replay it with no backend at all.

use std::sync::Arc;

use lesion_funnel::gateway::mock::{simulated_gateway, SimRates};
use lesion_funnel::gateway::Gateway;
use lesion_funnel::pipeline::{calls_in, parse_stages, Journal, Pipeline, RunConfig};
use lesion_funnel::synth::{generate, SynthConfig};

async fn run(gateway: Gateway, path: &std::path::Path, truth: &lesion_funnel::synth::PlantedTruth) -> lesion_funnel::Result<usize> {
    let journal = Arc::new(Journal::open(path)?);
    let gw = Pipeline::prepare_gateway(gateway, &journal);
    let config = RunConfig {
        stages: parse_stages("propose,merge,verify,track,confirm")?,
        ..RunConfig::default()
    };
    let out = Pipeline::new(config, truth.sequences.clone(), &gw, journal.clone())
        .run()
        .await?;
    journal.flush_calls()?;
    Ok(out.final_windows().len())
}

#[tokio::main]
async fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = tempfile::tempdir()?;
    let (a, b) = (dir.path().join("live.jsonl"), dir.path().join("replayed.jsonl"));
    let truth = generate(&SynthConfig::default());

    let live = simulated_gateway(Arc::new(truth.clone()), Arc::default(), &SimRates::default(), 0);
    let kept = run(live, &a, &truth).await?;
    let replay = Gateway::new().with_replay(calls_in(&Journal::load(&a)?));
    let kept_again = run(replay, &b, &truth).await?;

    let same = std::fs::read(&a)? == std::fs::read(&b)?;
    println!("windows kept: {kept} live, {kept_again} replayed; journals identical: {same}");
    Ok(())
}
