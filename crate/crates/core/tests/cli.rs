use std::path::Path;

use lesion_funnel::cli::run_args;

async fn run(args: &[&str]) {
    let mut full = vec!["lesion-funnel"];
    full.extend_from_slice(args);
    if let Err(e) = run_args(full).await {
        panic!("{args:?} failed: {e}");
    }
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[tokio::test(flavor = "multi_thread")]
async fn end_to_end_with_the_simulated_backend() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let p = |name: &str| d.join(name);

    run(&["synth", "--out", s(d), "--sequences", "2", "--frames", "3000", "--lesions", "5", "--seed", "1"]).await;
    let truth = p("truth.json");
    run(&[
        "pipeline", "run", "--manifest", s(&p("manifest.json")), "--journal", s(&p("journal.jsonl")),
        "--truth", s(&truth), "--simulate-review", "--review-log", s(&p("review.jsonl")),
        "--windows-out", s(&p("windows.jsonl")),
    ])
    .await;
    run(&[
        "pipeline", "report", "--journal", s(&p("journal.jsonl")), "--gt", s(&p("labels.jsonl")),
        "--fps", "30", "--json", s(&p("funnel.json")),
    ])
    .await;
    let funnel: serde_json::Value = serde_json::from_slice(&std::fs::read(p("funnel.json")).unwrap()).unwrap();
    assert_eq!(funnel["stages"].as_array().unwrap().len(), 6);

    for task in ["det", "vqa-prompted"] {
        run(&[
            "bench", "build", "--task", task, "--windows", s(&p("windows.jsonl")), "--manifest",
            s(&p("manifest.json")), "--journal", s(&p("journal.jsonl")), "--truth", s(&truth), "--out", s(d),
        ])
        .await;
    }
    assert!(p("vqa-prompted.items.jsonl").exists() && p("vqa-prompted.audit.json").exists());

    run(&[
        "eval", "run", "--model", "sim", "--task", "det", "--manifest", s(&p("det.manifest.json")),
        "--truth", s(&truth), "--out", s(&p("det.records.jsonl")),
    ])
    .await;
    run(&[
        "eval", "run", "--model", "sim", "--model-id", "sim-vqa", "--task", "vqa-prompted", "--manifest",
        s(&p("vqa-prompted.manifest.json")), "--items", s(&p("vqa-prompted.items.jsonl")), "--truth", s(&truth),
        "--out", s(&p("vqa.records.jsonl")),
    ])
    .await;
    run(&[
        "eval", "report", "--runs", s(&p("det.records.jsonl")), s(&p("vqa.records.jsonl")), "--csv",
        s(&p("table.csv")),
    ])
    .await;
    let csv = std::fs::read_to_string(p("table.csv")).unwrap();
    assert!(csv.lines().count() >= 2, "{csv}");
    run(&["bench", "audit-blind", "--items", s(&p("vqa-prompted.items.jsonl")), "--truth", s(&truth), "--out", s(&p("blind.json"))]).await;

    std::fs::write(p("gt.jsonl"), "{\"task\":\"vqa\",\"item_id\":\"q1\",\"answer\":2}\n").unwrap();
    std::fs::write(p("pred.jsonl"), "{\"task\":\"vqa\",\"item_id\":\"q1\",\"answer\":2}\n").unwrap();
    run(&["score", "--pred", s(&p("pred.jsonl")), "--gt", s(&p("gt.jsonl")), "--out", s(&p("score.json"))]).await;
    let score: serde_json::Value = serde_json::from_slice(&std::fs::read(p("score.json")).unwrap()).unwrap();
    assert_eq!(score["vqa"]["accuracy"], 100.0);
}

#[tokio::test]
async fn bad_input_is_an_error() {
    assert!(run_args(["lesion-funnel", "eval", "run", "--task", "nope"]).await.is_err());
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("absent.jsonl");
    let args = ["lesion-funnel", "score", "--pred", s(&missing), "--gt", s(&missing)];
    assert!(run_args(args).await.is_err());
}
