//! One PASS/FAIL line per acceptance criterion, printed even under output capture.

use std::collections::{BTreeMap, BTreeSet};
use std::future::Future;
use std::io::Write;
use std::pin::Pin;
use std::sync::Arc;
use std::time::Instant;

use lesion_funnel::bench::{self, debias_questions, BenchClip, BenchManifest, KeywordMatcher};
use lesion_funnel::eval::{run_detection, run_segmentation, run_vqa, skill_gain, skill_gain_table, RunSpec};
use lesion_funnel::gateway::mock::{
    simulated_gateway, BlindStrategy, DetectKnobs, MockBackend, MockFailure, MockKnobs, SimRates, VqaKnobs,
};
use lesion_funnel::gateway::{AgentClient, AgentRole, BackendConfig, Gateway, RetryPolicy};
use lesion_funnel::metrics::{
    average_precision, box_iou, classification_metrics, frame_counts, map_thresholds, mask_overlap, ClassPrediction,
    GtFrames, PositiveMode,
};
use lesion_funnel::model::{BoxAnnotation, FrameSize, McqItem, Provenance, Split, Task, VideoWindow};
use lesion_funnel::pipeline::{
    calls_in, funnel_report, AnnotatedWindow, Decision, Journal, Pipeline, RunConfig, RunStatus, StageName,
    StageSnapshot,
};
use lesion_funnel::prompts::PromptSet;
use lesion_funnel::review::{ReviewQueue, SimulatedReviewer};
use lesion_funnel::rle::Mask;
use lesion_funnel::synth::{generate, PlantedTruth, SynthConfig};
use lesion_funnel::tracker::ReferenceTracker;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Check = Result<String, String>;

fn ensure(ok: bool, msg: impl Into<String>) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn mock_gateway(backend: MockBackend, attempts: u32) -> Gateway {
    let cfg = BackendConfig {
        max_concurrent: 64,
        retry: RetryPolicy {
            max_attempts: attempts,
            base_backoff_ms: 0,
        },
        ..BackendConfig::mock("mock")
    };
    Gateway::new().route_all(Arc::new(AgentClient::from_config(cfg, Some(backend)).unwrap()))
}

fn metric_oracle() -> Check {
    let t0 = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let rand_box = |rng: &mut ChaCha8Rng, l: u32| {
        let x = rng.random_range(0..l);
        let y = rng.random_range(0..l);
        let w = rng.random_range(1..=l - x);
        let h = rng.random_range(1..=l - y);
        (x, y, w, h)
    };
    for case in 0..500 {
        let l = rng.random_range(2..=128u32);
        let (a, b) = (rand_box(&mut rng, l), rand_box(&mut rng, l));
        let inside = |r: (u32, u32, u32, u32), x: u32, y: u32| x >= r.0 && x < r.0 + r.2 && y >= r.1 && y < r.1 + r.3;
        let (mut inter, mut union) = (0u64, 0u64);
        let size = FrameSize::new(l, l);
        let (mut ma, mut mb) = (Mask::empty(size), Mask::empty(size));
        for y in 0..l {
            for x in 0..l {
                let (ia, ib) = (inside(a, x, y), inside(b, x, y));
                inter += u64::from(ia && ib);
                union += u64::from(ia || ib);
                ma.set(x, y, ia);
                mb.set(x, y, ib);
            }
        }
        let bx = |r: (u32, u32, u32, u32)| BoxAnnotation::new(0, r.0 as f64, r.1 as f64, r.2 as f64, r.3 as f64, "x");
        let oracle = inter as f64 / union as f64;
        let got = box_iou(&bx(a), &bx(b));
        ensure((got - oracle).abs() < 1e-9, format!("case {case}: box_iou {got} vs {oracle}"))?;

        // random cell masks, independent of the boxes
        for (i, c) in ma.clone().cells().iter().enumerate() {
            let (x, y) = (i as u32 % l, i as u32 / l);
            ma.set(x, y, *c ^ rng.random_bool(0.1));
        }
        let (mut i2, mut u2, mut area) = (0u64, 0u64, 0u64);
        for (&p, &q) in ma.cells().iter().zip(mb.cells()) {
            i2 += u64::from(p && q);
            u2 += u64::from(p || q);
            area += u64::from(p) + u64::from(q);
        }
        let o = mask_overlap(&ma, &mb).map_err(|e| e.to_string())?;
        let (iou_bf, dice_bf) = if u2 == 0 { (1.0, 1.0) } else { (i2 as f64 / u2 as f64, 2.0 * i2 as f64 / area as f64) };
        ensure((o.iou - iou_bf).abs() < 1e-9 && (o.dice - dice_bf).abs() < 1e-9, format!("case {case}: mask overlap off"))?;
        ensure(o.dice == 2.0 * o.iou / (1.0 + o.iou), format!("case {case}: dice identity not exact"))?;
    }
    let empty = Mask::empty(FrameSize::new(3, 3));
    let o = mask_overlap(&empty, &empty).map_err(|e| e.to_string())?;
    ensure(o.iou == 1.0 && o.dice == 1.0, "both-empty pair")?;
    let secs = t0.elapsed().as_secs_f64();
    ensure(secs < 10.0, format!("took {secs:.2}s"))?;
    Ok(format!("500 cases in {secs:.2}s"))
}

fn classification_fixture() -> Check {
    let labels: BTreeMap<String, bool> = (0..790).map(|i| (format!("c{i:03}"), i < 272)).collect();
    let preds = labels.keys().map(|k| (k.clone(), ClassPrediction::Positive)).collect();
    let [a, p, r, f] = classification_metrics(&preds, &labels).map_err(|e| e.to_string())?.percent();
    let close = |x: f64, want: f64| (x - want).abs() <= 0.05;
    ensure(
        close(a, 34.4) && close(p, 34.4) && close(r, 100.0) && close(f, 51.2),
        format!("got {a:.2}/{p:.2}/{r:.2}/{f:.2}"),
    )?;
    Ok(format!("acc {a:.2} p {p:.2} r {r:.2} f1 {f:.2}"))
}

fn snapshot(name: &str, windows: usize, frames: u64) -> StageSnapshot {
    let base = frames / windows as u64;
    let extra = (frames % windows as u64) as usize;
    let mut start = 0;
    let ws = (0..windows)
        .map(|i| {
            let len = base + u64::from(i < extra);
            let w = AnnotatedWindow::new(VideoWindow::new(format!("w{i:04}"), "seq", start, start + len - 1));
            start += len;
            w
        })
        .collect();
    StageSnapshot::new(name, ws)
}

fn funnel_fixture() -> Check {
    let history = vec![
        snapshot("propose", 1325, 826_763),
        snapshot("verify", 903, 648_440),
        snapshot("confirm", 597, 492_606),
        snapshot("review", 528, 464_035),
    ];
    let r = funnel_report(&history, Some(10.0), None);
    let hours: Vec<f64> = r.stages.iter().map(|s| s.hours).collect();
    for (h, want) in hours.iter().zip([22.97, 18.01, 13.68, 12.89]) {
        ensure((h - want).abs() <= 0.01, format!("hours {hours:?}"))?;
    }
    ensure((r.retention_pct - 39.8).abs() <= 0.1, format!("retention {}", r.retention_pct))?;
    Ok(format!("hours {hours:.2?} retention {:.1}%", r.retention_pct))
}

fn review_fixture() -> Check {
    let q = ReviewQueue::new();
    let windows: Vec<AnnotatedWindow> = (0..597)
        .map(|i| {
            let mut w = AnnotatedWindow::new(VideoWindow::new(format!("w{i:04}"), "seq", i * 10, i * 10 + 5));
            w.boxes.push(BoxAnnotation::new(i * 10, 1.0, 1.0, 4.0, 4.0, "lesion"));
            w
        })
        .collect();
    q.enqueue(&windows).map_err(|e| e.to_string())?;
    let mut rejected = 0;
    while let Some(item) = q.next_item("physician") {
        let (d, note) = if rejected < 69 { (Decision::Reject, Some("not a lesion".to_string())) } else { (Decision::Accept, None) };
        rejected += usize::from(d == Decision::Reject);
        q.submit_decision(&item.window_id, d, note, "physician").map_err(|e| e.to_string())?;
    }
    let s = q.stats();
    ensure(
        s.accepted == 528 && s.rejected == 69 && s.pending == 0 && (s.rejection_rate_pct - 11.6).abs() <= 0.1,
        format!("{s:?}"),
    )?;
    Ok(format!("accepted {} rejected {} rate {:.1}%", s.accepted, s.rejected, s.rejection_rate_pct))
}

fn temporal_brute_force() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for t in 0..200 {
        let mut totals = BTreeMap::new();
        let mut gt = GtFrames::new();
        let mut gt_set: BTreeMap<String, BTreeSet<u64>> = BTreeMap::new();
        let mut windows = Vec::new();
        let mut box_frames: BTreeMap<String, BTreeSet<u64>> = BTreeMap::new();
        for s in 0..rng.random_range(1..4) {
            let seq = format!("s{s}");
            let n = rng.random_range(20..400u64);
            totals.insert(seq.clone(), n);
            for _ in 0..rng.random_range(0..5) {
                let a = rng.random_range(0..n);
                let b = (a + rng.random_range(0..60)).min(n + 10);
                gt.add_interval(&seq, a, b);
                gt_set.entry(seq.clone()).or_default().extend(a..=b);
            }
            for w in 0..rng.random_range(0..6) {
                let a = rng.random_range(0..n);
                let b = a + rng.random_range(0..80);
                let id = format!("{seq}-w{w}");
                let frames = (a..=b).filter(|_| rng.random_bool(0.3)).collect();
                box_frames.insert(id.clone(), frames);
                windows.push(VideoWindow::new(id, &seq, a, b));
            }
        }
        for boxes_only in [false, true] {
            let mode = if boxes_only { PositiveMode::BoxFramesOnly(&box_frames) } else { PositiveMode::Windows };
            let got = frame_counts(&windows, &gt, &totals, mode);
            let (mut tp, mut fp, mut fn_, mut tn) = (0u64, 0u64, 0u64, 0u64);
            for (seq, &n) in &totals {
                for f in 0..n {
                    let pred = windows.iter().any(|w| {
                        w.sequence_id == *seq
                            && w.contains(f)
                            && (!boxes_only || box_frames[&w.window_id].contains(&f))
                    });
                    let pos = gt_set.get(seq).is_some_and(|g| g.contains(&f));
                    match (pred, pos) {
                        (true, true) => tp += 1,
                        (true, false) => fp += 1,
                        (false, true) => fn_ += 1,
                        (false, false) => tn += 1,
                    }
                }
            }
            ensure(
                (got.tp, got.fp, got.fn_, got.tn) == (tp, fp, fn_, tn),
                format!("timeline {t}: {got:?} vs brute ({tp},{fp},{fn_},{tn})"),
            )?;
        }
    }
    Ok("200 timelines, both positive modes".into())
}

fn ap_hand_case() -> Check {
    let gt = |x: f64| BoxAnnotation::new(0, x, 0.0, 10.0, 10.0, "l");
    let gts = vec![gt(0.0), gt(50.0)];
    let preds = vec![
        gt(0.0).with_confidence(0.9),
        gt(100.0).with_confidence(0.8),
        gt(50.0).with_confidence(0.7),
    ];
    let ap = average_precision(&preds, &gts, 0.5);
    ensure((ap - 5.0 / 6.0).abs() < 1e-9, format!("AP {ap}"))?;
    let grid = map_thresholds();
    ensure(grid.len() == 10 && (grid[0] - 0.5).abs() < 1e-12 && (grid[9] - 0.95).abs() < 1e-12, format!("grid {grid:?}"))?;
    Ok(format!("AP {ap:.6}, {} thresholds", grid.len()))
}

async fn pipeline_simulation() -> Check {
    let mut rising = 0;
    let mut windows = Vec::new();
    for seed in 0..20u64 {
        let truth = Arc::new(generate(&SynthConfig {
            sequences: 8,
            frames_per_sequence: 20_000,
            lesions_per_sequence: 40,
            min_gap: 150,
            seed,
            ..SynthConfig::default()
        }));
        let rates = SimRates {
            false_windows_per_sequence: 90,
            ..SimRates::default()
        };
        let journal = Arc::new(Journal::in_memory());
        let gw = Pipeline::prepare_gateway(simulated_gateway(truth.clone(), Arc::default(), &rates, seed), &journal);
        let config = RunConfig {
            stages: vec![StageName::Propose, StageName::Merge, StageName::Verify, StageName::Track, StageName::Confirm],
            detect_stride: 10,
            seed,
            ..RunConfig::default()
        };
        let out = Pipeline::new(config, truth.sequences.clone(), &gw, journal).run().await.map_err(|e| e.to_string())?;
        let r = funnel_report(&out.history, None, Some(&truth.surrogate_labels()));
        let p: Vec<f64> = r.stages.iter().map(|s| s.temporal.expect("gt given").precision).collect();
        windows.push(r.stages[0].windows);
        if p[2] < p[3] && p[3] < p[4] {
            rising += 1;
        }
    }
    let min = windows.iter().min().copied().unwrap_or(0);
    ensure(min >= 1000, format!("only {min} proposed windows in a run"))?;
    ensure(rising >= 19, format!("precision rose in {rising}/20 runs"))?;
    Ok(format!("precision rose verify->track->confirm in {rising}/20 runs, >= {min} windows each"))
}

fn detector(truth: &Arc<PlantedTruth>, sigma: f64, seed: u64) -> Gateway {
    let knobs = MockKnobs::Detect(DetectKnobs {
        truth: truth.clone(),
        sigma_px: sigma,
        miss_rate: 0.0,
        false_box_rate: 0.0,
    });
    mock_gateway(MockBackend::new().behave(AgentRole::Detect, seed, knobs).unwrap(), 1)
}

async fn seg_miou(truth: &Arc<PlantedTruth>, sigma: f64, k: usize, seed: u64) -> Result<(f64, f64), String> {
    let manifest = bench::build_segmentation_split(&truth.curated_windows(), &truth.sequences, &KeywordMatcher::builtin(), 0)
        .map_err(|e| e.to_string())?;
    let spec = RunSpec::new("oracle", Task::Segmentation).with_frames(k);
    let gw = detector(truth, sigma, seed);
    let det = run_detection(&spec, &manifest, &gw, &PromptSet::default()).await.map_err(|e| e.to_string())?;
    let seg = run_segmentation(&spec, &manifest, &det, &ReferenceTracker).await.map_err(|e| e.to_string())?;
    Ok((seg.miou, seg.mdice))
}

async fn segmentation_closed_loop() -> Check {
    let truth = Arc::new(generate(&SynthConfig {
        frame_size: FrameSize::new(96, 72),
        seed: 3,
        ..SynthConfig::default()
    }));
    let (miou, mdice) = seg_miou(&truth, 0.0, 3, 0).await?;
    ensure(miou == 1.0 && mdice == 1.0, format!("oracle loop mIoU {miou} mDice {mdice}"))?;

    let curved = Arc::new(generate(&SynthConfig {
        frame_size: FrameSize::new(96, 72),
        easing: 2.0,
        seed: 4,
        ..SynthConfig::default()
    }));
    let mut trend = Vec::new();
    for k in [1, 2, 3, 5, 7] {
        let mut sum = 0.0;
        for seed in 0..6 {
            sum += seg_miou(&curved, 0.5, k, seed).await?.0;
        }
        trend.push(sum / 6.0);
    }
    ensure(trend.windows(2).all(|p| p[1] >= p[0]), format!("mIoU by k {trend:.4?}"))?;
    Ok(format!("oracle mIoU = mDice = 1.0; jittered mIoU by k=1,2,3,5,7: {trend:.3?}"))
}

fn vqa_fixture(n: usize, seed: u64) -> (BenchManifest, Vec<McqItem>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let clips: Vec<BenchClip> = (0..n.div_ceil(3))
        .map(|c| BenchClip {
            clip_id: format!("c{c:05}"),
            sequence_id: "seq".into(),
            start_frame: c as u64 * 100,
            end_frame: c as u64 * 100 + 50,
            frame_size: FrameSize::new(64, 48),
            lesion: true,
            categories: BTreeSet::from([["ulcer", "lipoma", "bleeding"][c % 3].to_string()]),
            description: Some("a finding".into()),
        })
        .collect();
    let items: Vec<McqItem> = (0..n)
        .map(|i| McqItem {
            question_id: format!("c{:05}-q{}", i / 3, i % 3),
            clip_id: format!("c{:05}", i / 3),
            stem: format!("Question {i}?"),
            options: (0..5).map(|o| format!("option {o} of {i}")).collect(),
            answer_index: rng.random_range(0..5),
            split: Split::Prompted,
            provenance: Provenance::Original,
            shuffle_seed: 0,
        })
        .collect();
    let manifest = BenchManifest {
        task: Task::VqaPrompted,
        build_seed: seed,
        clips,
        labels: BTreeMap::new(),
        gt_boxes: BTreeMap::new(),
        gt_masks: BTreeMap::new(),
        question_ids: items.iter().map(|i| i.question_id.clone()).collect(),
        excluded: Vec::new(),
        counts: BTreeMap::new(),
    };
    (manifest, items)
}

async fn vqa_machinery() -> Check {
    let (manifest, items) = vqa_fixture(12_000, 1);
    let prompts = PromptSet::default();
    let key: Arc<BTreeMap<String, usize>> = Arc::new(items.iter().map(|i| (i.question_id.clone(), i.answer_index)).collect());

    // unkeyed: every answer drawn uniformly
    let chance = MockBackend::new()
        .behave(AgentRole::AnswerVqa, 0, MockKnobs::AnswerVqa(VqaKnobs::new(Arc::default(), 0.0)))
        .unwrap();
    let spec = RunSpec::new("chance", Task::VqaPrompted);
    let r = run_vqa(&spec, &manifest, &items, &mock_gateway(chance, 1), &prompts).await.map_err(|e| e.to_string())?;
    ensure((r.accuracy_pct - 20.0).abs() <= 2.0, format!("chance accuracy {}", r.accuracy_pct))?;

    let failing = MockBackend::new()
        .behave(AgentRole::AnswerVqa, 0, MockKnobs::Failing(MockFailure::Timeout))
        .unwrap();
    let few = &items[..300];
    let f = run_vqa(&RunSpec::new("down", Task::VqaPrompted), &manifest, few, &mock_gateway(failing, 1), &prompts)
        .await
        .map_err(|e| e.to_string())?;
    ensure(f.accuracy_pct == 0.0 && f.answered == 0 && f.total == 300, format!("failing backend {f:?}"))?;

    let planted = MockBackend::new()
        .behave(
            AgentRole::AnswerVqa,
            0,
            MockKnobs::AnswerVqa(VqaKnobs {
                skill_bonus: 0.05,
                ..VqaKnobs::new(key, 0.55)
            }),
        )
        .unwrap();
    let gw = mock_gateway(planted, 1);
    let base = run_vqa(&RunSpec::new("planted", Task::VqaPrompted), &manifest, &items, &gw, &prompts)
        .await
        .map_err(|e| e.to_string())?;
    let skilled = run_vqa(
        &RunSpec::new("planted", Task::VqaPrompted).with_skill(Some(lesion_funnel::prompts::REFERENCE_SKILL.into())),
        &manifest,
        &items,
        &gw,
        &prompts,
    )
    .await
    .map_err(|e| e.to_string())?;
    let row = skill_gain("planted", "prompted", base.accuracy_pct, skilled.accuracy_pct);
    ensure((row.delta_pp - 5.0).abs() <= 1.0, format!("delta {}", row.delta_pp))?;
    let table = skill_gain_table(std::slice::from_ref(&row));
    let header: Vec<&str> = table.lines().next().unwrap_or("").split_whitespace().collect();
    ensure(header == ["Model", "Split", "Baseline", "w/", "Skill", "Δ"], format!("header {header:?}"))?;
    Ok(format!(
        "chance {:.1}% on {} questions; failing backend 0.0%; skill delta {:+.1} pp",
        r.accuracy_pct, r.total, row.delta_pp
    ))
}

async fn debias_invariants() -> Check {
    let (_, items) = vqa_fixture(1000, 2);
    let backend = || {
        MockBackend::new()
            .behave(AgentRole::RewriteDistractors, 0, MockKnobs::RewriteDistractors)
            .unwrap()
            .behave(AgentRole::BlindSolve, 0, MockKnobs::BlindSolve(BlindStrategy::Uniform))
            .unwrap()
    };
    let prompts = PromptSet::default();
    let out = debias_questions(&items, &mock_gateway(backend(), 1), &prompts, 9).await;
    let again = debias_questions(&items, &mock_gateway(backend(), 1), &prompts, 9).await;
    ensure(
        serde_json::to_string(&out).unwrap() == serde_json::to_string(&again).unwrap(),
        "debias output differs between identical runs",
    )?;
    ensure(out.items.len() == items.len() && out.audit.is_consistent(), "audit inconsistent")?;
    let originals: BTreeMap<&str, &McqItem> = items.iter().map(|i| (i.question_id.as_str(), i)).collect();
    for item in &out.items {
        let orig = originals[item.question_id.as_str()];
        ensure(item.answer_text().as_bytes() == orig.answer_text().as_bytes(), format!("{}: answer text changed", item.question_id))?;
        let distinct: BTreeSet<&str> = item.options.iter().map(String::as_str).collect();
        ensure(item.options.len() == 5 && distinct.len() == 5, format!("{}: options {:?}", item.question_id, item.options))?;
        let e = &out.audit.entries[&item.question_id];
        let rule = e.debiased_correct == Some(true) && !e.original_correct;
        ensure(e.reverted == rule, format!("{}: revert rule", item.question_id))?;
        if e.reverted {
            ensure(
                item.provenance == Provenance::RevertedAfterBlindTest && item.options == orig.options,
                format!("{}: reverted item differs from its original", item.question_id),
            )?;
        } else if e.debiased_correct.is_some() {
            ensure(item.provenance == Provenance::Debiased, format!("{}: provenance", item.question_id))?;
        }
    }

    // whole-split manifests under a fixed seed
    let truth = Arc::new(generate(&SynthConfig {
        sequences: 2,
        lesions_per_sequence: 10,
        ..SynthConfig::default()
    }));
    let clips = bench::clips_from_windows(&truth.curated_windows(), &truth.sequences, &KeywordMatcher::builtin())
        .map_err(|e| e.to_string())?;
    let build = || async {
        let gw = simulated_gateway(truth.clone(), Arc::default(), &SimRates::default(), 0);
        let b = bench::build_vqa_split(Split::Prompted, &clips, 3, &gw, &prompts, 4).await.map_err(|e| e.to_string())?;
        Ok::<_, String>((b.manifest.to_json(), b.items_jsonl(), serde_json::to_string(&b.audit).unwrap()))
    };
    ensure(build().await? == build().await?, "vqa split bytes differ under a fixed seed")?;
    Ok(format!(
        "{} items; {} debiased, {} reverted; split bytes stable",
        out.items.len(),
        out.audit.debiased_ids.len(),
        out.audit.reverted_ids.len()
    ))
}

/// Pipeline with review, then detection eval on the surviving windows.
async fn full_run(gateway: Gateway, journal: Arc<Journal>, truth: &PlantedTruth) -> Result<String, String> {
    let gw = gateway.with_log(journal.clone());
    let queue = ReviewQueue::new();
    let reviewer = SimulatedReviewer::new(truth.clone(), 1);
    let mut p = Pipeline::new(
        RunConfig {
            seed: 2,
            ..RunConfig::default()
        },
        truth.sequences.clone(),
        &gw,
        journal.clone(),
    );
    p.review = Some(&queue);
    p.reviewer = Some(&reviewer);
    let out = p.run().await.map_err(|e| e.to_string())?;
    ensure(out.status == RunStatus::Complete, format!("{:?}", out.status))?;
    let manifest = bench::build_detection_split(out.final_windows(), &truth.sequences, &KeywordMatcher::builtin(), 0)
        .map_err(|e| e.to_string())?;
    let det = run_detection(&RunSpec::new("sim", Task::Detection), &manifest, &gw, &PromptSet::default())
        .await
        .map_err(|e| e.to_string())?;
    journal.flush_calls().map_err(|e| e.to_string())?;
    Ok(det.records.iter().map(|r| serde_json::to_string(r).unwrap() + "\n").collect())
}

async fn determinism_replay() -> Check {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let truth = generate(&SynthConfig::default());
    let (pa, pb) = (dir.path().join("a.jsonl"), dir.path().join("b.jsonl"));

    let live = simulated_gateway(Arc::new(truth.clone()), Arc::default(), &SimRates::default(), 0);
    let rec_a = full_run(live, Arc::new(Journal::open(&pa).map_err(|e| e.to_string())?), &truth).await?;

    // no backend at all: every call must come from the recorded journal
    let recorded = calls_in(&Journal::load(&pa).map_err(|e| e.to_string())?);
    let replay = Gateway::new().with_replay(recorded);
    let rec_b = full_run(replay, Arc::new(Journal::open(&pb).map_err(|e| e.to_string())?), &truth).await?;

    let (a, b) = (std::fs::read(&pa).unwrap(), std::fs::read(&pb).unwrap());
    ensure(a == b, format!("journals differ ({} vs {} bytes)", a.len(), b.len()))?;
    ensure(rec_a == rec_b && !rec_a.is_empty(), "eval records differ")?;
    Ok(format!("journal {} bytes and {} eval records identical on replay", a.len(), rec_a.lines().count()))
}

type Pending<'a> = Pin<Box<dyn Future<Output = Check> + 'a>>;

#[tokio::test(flavor = "multi_thread")]
async fn acceptance() {
    let checks: Vec<(&str, Pending)> = vec![
        ("metric oracle suite", Box::pin(async { metric_oracle() })),
        ("classification fixture", Box::pin(async { classification_fixture() })),
        ("funnel fixture", Box::pin(async { funnel_fixture() })),
        ("human-review fixture", Box::pin(async { review_fixture() })),
        ("temporal brute force", Box::pin(async { temporal_brute_force() })),
        ("AP hand case", Box::pin(async { ap_hand_case() })),
        ("pipeline simulation", Box::pin(pipeline_simulation())),
        ("segmentation closed loop", Box::pin(segmentation_closed_loop())),
        ("VQA machinery", Box::pin(vqa_machinery())),
        ("debiasing invariants", Box::pin(debias_invariants())),
        ("determinism/replay", Box::pin(determinism_replay())),
    ];
    // written straight to stderr so the lines survive output capture
    let mut out = std::io::stderr();
    let mut failed = Vec::new();
    for (name, check) in checks {
        match check.await {
            Ok(detail) => writeln!(out, "PASS {name}: {detail}").unwrap(),
            Err(why) => {
                writeln!(out, "FAIL {name}: {why}").unwrap();
                failed.push(name);
            }
        }
    }
    assert!(failed.is_empty(), "failed: {failed:?}");
}
