//! Propagate two box prompts into a mask tracklet with the reference tracker.

use lesion_funnel::model::{BoxAnnotation, FrameSize};
use lesion_funnel::tracker::{equally_spaced_frames, propagate, PromptFrame, ReferenceTracker, TrackPrompt};

#[tokio::main]
async fn main() -> lesion_funnel::Result<()> {
    let (start, end) = (100, 120);
    let ends = equally_spaced_frames(start, end, 2)?;
    let prompts = vec![
        PromptFrame {
            frame_index: ends[0],
            boxes: vec![BoxAnnotation::new(ends[0], 4.0, 4.0, 10.0, 8.0, "polyp")],
        },
        PromptFrame {
            frame_index: ends[1],
            boxes: vec![BoxAnnotation::new(ends[1], 24.0, 12.0, 10.0, 8.0, "polyp")],
        },
    ];
    let prompt = TrackPrompt {
        window_id: "demo".into(),
        sequence_id: "seq".into(),
        start_frame: start,
        end_frame: end,
        frame_size: FrameSize::new(48, 32),
        prompts,
        target_label: "polyp".into(),
    };
    let out = propagate(&prompt, &ReferenceTracker).await?;
    for f in [100, 105, 110, 115, 120] {
        let mask = out.tracklet.mask(f).expect("frame tracked")?;
        let b = mask.bounding_box(f, "polyp").expect("non-empty");
        println!("frame {f}: area {:3} box at ({:.0}, {:.0})", mask.area(), b.x, b.y);
    }
    println!("gaps: {}", out.gaps.len());
    Ok(())
}
