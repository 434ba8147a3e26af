//! Assemble detection and VQA splits from curated windows,
//! with question debiasing and a blind audit.

use std::sync::Arc;

use lesion_funnel::bench::{self, KeywordMatcher};
use lesion_funnel::gateway::mock::{simulated_gateway, SimRates};
use lesion_funnel::model::Split;
use lesion_funnel::prompts::PromptSet;
use lesion_funnel::synth::{generate, SynthConfig};

#[tokio::main]
async fn main() -> lesion_funnel::Result<()> {
    let truth = Arc::new(generate(&SynthConfig {
        sequences: 3,
        lesions_per_sequence: 8,
        seed: 2,
        ..SynthConfig::default()
    }));
    let windows = truth.curated_windows();
    let matcher = KeywordMatcher::builtin();

    let det = bench::build_detection_split(&windows, &truth.sequences, &matcher, 0)?;
    println!("detection split: {:?}", det.counts);

    let clips = bench::clips_from_windows(&windows, &truth.sequences, &matcher)?;
    let gateway = simulated_gateway(truth.clone(), Arc::default(), &SimRates::default(), 2);
    let vqa = bench::build_vqa_split(Split::Prompted, &clips, 3, &gateway, &PromptSet::default(), 0).await?;
    println!(
        "vqa split: {} questions, {} debiased, {} reverted, blind accuracy {:.2}",
        vqa.items.len(),
        vqa.audit.debiased_ids.len(),
        vqa.audit.reverted_ids.len(),
        vqa.audit.blind_accuracy
    );
    if let Some(q) = vqa.items.first() {
        println!("{}\n{:#?}\nanswer: {}", q.stem, q.options, q.answer_text());
    }
    Ok(())
}
