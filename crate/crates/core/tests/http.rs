use std::collections::BTreeMap;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use axum::extract::State;
use axum::http::{HeaderMap, StatusCode};
use axum::routing::post;
use axum::{Json, Router};
use lesion_funnel::gateway::{AgentClient, AgentRequest, AgentResponse, AgentRole, BackendConfig, Gateway, RetryPolicy};
use lesion_funnel::model::{BoxAnnotation, FrameProvider, FrameSize, VideoWindow};
use lesion_funnel::pipeline::{AnnotatedWindow, Decision};
use lesion_funnel::review::{router, ReviewQueue, ServerState};
use lesion_funnel::rle::{self, Mask};
use lesion_funnel::tracker::{propagate, HttpTracker, PromptFrame, TrackPrompt};
use serde_json::{json, Value};

async fn spawn(app: Router) -> String {
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    tokio::spawn(async move { axum::serve(listener, app).await.unwrap() });
    format!("http://{addr}")
}

#[derive(Default)]
struct Stub {
    hits: AtomicUsize,
}

async fn detect(State(st): State<Arc<Stub>>, headers: HeaderMap, Json(body): Json<Value>) -> (StatusCode, String) {
    assert!(headers.contains_key("idempotency-key"));
    assert_eq!(body["role"], "detect");
    // first attempt is throttled, second answers with prose around the JSON
    if st.hits.fetch_add(1, Ordering::SeqCst) == 0 {
        return (StatusCode::TOO_MANY_REQUESTS, String::new());
    }
    let boxes = json!({"boxes": [
        {"x": 1, "y": 2, "w": 10, "h": 8, "label": "polyp", "confidence": 0.9},
        {"x": 20, "y": 2, "w": 5, "h": 5, "label": "polyp"},
        {"x": 40, "y": 30, "w": 6, "h": 4, "label": "ulcer", "confidence": 0.4},
    ]});
    (StatusCode::OK, format!("Here are the boxes: {boxes}"))
}

#[tokio::test]
async fn http_backend_retries_and_parses_boxes() {
    let stub = Arc::new(Stub::default());
    let url = spawn(Router::new().route("/v1/agent", post(detect)).with_state(stub.clone())).await;
    let cfg = BackendConfig {
        retry: RetryPolicy {
            max_attempts: 3,
            base_backoff_ms: 1,
        },
        ..BackendConfig::http("stub", format!("{url}/v1/agent"))
    };
    let gw = Gateway::new().route(AgentRole::Detect, Arc::new(AgentClient::from_config(cfg, None).unwrap()));
    let req = AgentRequest::new(AgentRole::Detect, "find lesions")
        .with_media([lesion_funnel::gateway::MediaRef::frame("seq", 7)]);
    let AgentResponse::Boxes { boxes } = gw.invoke(&req).await.unwrap() else {
        panic!("unexpected payload");
    };
    assert_eq!(boxes.len(), 3);
    assert_eq!((boxes[0].confidence, boxes[1].confidence), (Some(0.9), None));
    assert_eq!(stub.hits.load(Ordering::SeqCst), 2);

    // a repeat request is served from the cache
    gw.invoke(&req).await.unwrap();
    assert_eq!(stub.hits.load(Ordering::SeqCst), 2);
}

async fn track(Json(body): Json<Value>) -> Json<Value> {
    let size = FrameSize::new(8, 6);
    let b = BoxAnnotation::new(0, 1.0, 1.0, 3.0, 2.0, "polyp");
    let mask = rle::encode(&Mask::from_boxes(size, &[b])).unwrap();
    let mut masks: BTreeMap<String, String> = BTreeMap::new();
    for f in body["frames"].as_array().unwrap() {
        let f = f.as_u64().unwrap();
        // frame 3 comes back undecodable
        masks.insert(f.to_string(), if f == 3 { "garbage".into() } else { mask.clone() });
    }
    Json(json!({ "masks": masks }))
}

#[tokio::test]
async fn http_tracker_reports_gaps() {
    let url = spawn(Router::new().route("/track", post(track))).await;
    let prompt = TrackPrompt {
        window_id: "w".into(),
        sequence_id: "seq".into(),
        start_frame: 0,
        end_frame: 4,
        frame_size: FrameSize::new(8, 6),
        prompts: vec![PromptFrame {
            frame_index: 2,
            boxes: vec![BoxAnnotation::new(2, 1.0, 1.0, 3.0, 2.0, "polyp")],
        }],
        target_label: "polyp".into(),
    };
    let out = propagate(&prompt, &HttpTracker::new(url)).await.unwrap();
    assert_eq!(out.tracklet.masks.len(), 4);
    assert_eq!(out.gaps.iter().map(|g| g.frame).collect::<Vec<_>>(), vec![3]);
}

struct Solid;

impl FrameProvider for Solid {
    fn frame(&self, index: u64) -> Option<Vec<u8>> {
        Some(index.to_le_bytes().to_vec())
    }
}

fn boxed_window(id: &str, start: u64) -> AnnotatedWindow {
    let mut w = AnnotatedWindow::new(VideoWindow::new(id, "seq", start, start + 4));
    w.boxes.push(BoxAnnotation::new(start, 1.0, 1.0, 3.0, 3.0, "polyp"));
    w
}

#[tokio::test]
async fn review_api_leases_and_decisions() {
    let queue = Arc::new(ReviewQueue::new());
    queue.enqueue(&[boxed_window("w1", 0), boxed_window("w2", 100)]).unwrap();
    let state = ServerState::new(queue.clone())
        .with_token("s3cret")
        .with_frames("seq", Arc::new(Solid));
    let base = spawn(router(state, None)).await;
    let http = reqwest::Client::new();

    let denied = http.get(format!("{base}/api/review/next")).send().await.unwrap();
    assert_eq!(denied.status(), StatusCode::UNAUTHORIZED);

    let next = |who: &'static str| {
        let http = http.clone();
        let base = base.clone();
        async move {
            let r = http
                .get(format!("{base}/api/review/next"))
                .bearer_auth("s3cret")
                .header("x-reviewer", who)
                .send()
                .await
                .unwrap();
            (r.status(), r.text().await.unwrap())
        }
    };
    // two reviewers at once never get the same window
    let ((sa, a), (sb, b)) = tokio::join!(next("ana"), next("ben"));
    assert_eq!((sa, sb), (StatusCode::OK, StatusCode::OK));
    let id = |s: &str| serde_json::from_str::<Value>(s).unwrap()["window_id"].as_str().unwrap().to_string();
    let (ia, ib) = (id(&a), id(&b));
    assert_ne!(ia, ib);
    assert_eq!(next("cy").await.0, StatusCode::NO_CONTENT);

    // ben cannot decide ana's leased window
    let post = |who: &'static str, window: String, body: Value| {
        let http = http.clone();
        let base = base.clone();
        async move {
            http.post(format!("{base}/api/review/{window}/decision"))
                .bearer_auth("s3cret")
                .header("x-reviewer", who)
                .json(&body)
                .send()
                .await
                .unwrap()
                .status()
        }
    };
    let accept = json!({"decision": Decision::Accept});
    assert_eq!(post("ben", ia.clone(), accept.clone()).await, StatusCode::CONFLICT);
    assert_eq!(post("ana", ia.clone(), accept.clone()).await, StatusCode::OK);
    // identical resubmission is a no-op, a conflicting one is refused
    assert_eq!(post("ana", ia.clone(), accept).await, StatusCode::OK);
    let reject = json!({"decision": "reject", "note": "artifact"});
    assert_eq!(post("ana", ia.clone(), reject.clone()).await, StatusCode::CONFLICT);
    assert_eq!(post("ben", ib.clone(), reject).await, StatusCode::OK);
    assert_eq!(post("ben", "nope".into(), json!({"decision": "accept"})).await, StatusCode::NOT_FOUND);

    let frame = http
        .get(format!("{base}/api/review/w2/frames/102"))
        .bearer_auth("s3cret")
        .send()
        .await
        .unwrap();
    assert_eq!(frame.status(), StatusCode::OK);
    assert_eq!(frame.bytes().await.unwrap().as_ref(), 102u64.to_le_bytes());
    let outside = http
        .get(format!("{base}/api/review/w2/frames/3"))
        .bearer_auth("s3cret")
        .send()
        .await
        .unwrap();
    assert_eq!(outside.status(), StatusCode::NOT_FOUND);

    let stats: Value = http
        .get(format!("{base}/api/review/stats"))
        .bearer_auth("s3cret")
        .send()
        .await
        .unwrap()
        .json()
        .await
        .unwrap();
    assert_eq!((stats["accepted"].as_u64(), stats["rejected"].as_u64()), (Some(1), Some(1)));
    assert_eq!(queue.verdicts().len(), 2);
}
