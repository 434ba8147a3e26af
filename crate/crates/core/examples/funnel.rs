//! Run the staged funnel on synthetic sequences against a simulated backend
//! and print the per-stage table.

use std::sync::Arc;

use lesion_funnel::gateway::mock::{simulated_gateway, SimRates};
use lesion_funnel::pipeline::{funnel_report, Journal, Pipeline, RunConfig};
use lesion_funnel::review::{ReviewQueue, SimulatedReviewer};
use lesion_funnel::synth::{generate, SynthConfig};

#[tokio::main]
async fn main() -> lesion_funnel::Result<()> {
    let truth = generate(&SynthConfig {
        sequences: 4,
        frames_per_sequence: 8000,
        lesions_per_sequence: 10,
        seed: 7,
        ..SynthConfig::default()
    });
    let journal = Arc::new(Journal::in_memory());
    let gateway = Pipeline::prepare_gateway(
        simulated_gateway(Arc::new(truth.clone()), Arc::default(), &SimRates::default(), 7),
        &journal,
    );
    let queue = ReviewQueue::new();
    let reviewer = SimulatedReviewer::new(truth.clone(), 7);
    let mut pipeline = Pipeline::new(RunConfig::default(), truth.sequences.clone(), &gateway, journal);
    pipeline.review = Some(&queue);
    pipeline.reviewer = Some(&reviewer);
    let out = pipeline.run().await?;

    let report = funnel_report(&out.history, Some(30.0), Some(&truth.surrogate_labels()));
    print!("{}", report.to_text());
    println!("review: {:?}", queue.stats());
    Ok(())
}
