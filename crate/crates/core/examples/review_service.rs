//! Serve the review API on a local port and walk one reviewer through the queue.

use std::sync::Arc;

use lesion_funnel::model::{BoxAnnotation, VideoWindow};
use lesion_funnel::pipeline::AnnotatedWindow;
use lesion_funnel::review::{router, ReviewQueue, ServerState};
use serde_json::{json, Value};

#[tokio::main]
async fn main() -> Result<(), Box<dyn std::error::Error>> {
    let queue = Arc::new(ReviewQueue::new());
    let windows: Vec<AnnotatedWindow> = (0..3)
        .map(|i| {
            let mut w = AnnotatedWindow::new(VideoWindow::new(format!("w{i}"), "seq", i * 50, i * 50 + 20));
            w.boxes.push(BoxAnnotation::new(i * 50, 5.0, 5.0, 12.0, 9.0, "polyp"));
            w
        })
        .collect();
    queue.enqueue(&windows)?;

    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await?;
    let base = format!("http://{}", listener.local_addr()?);
    tokio::spawn(async move { axum::serve(listener, router(ServerState::new(queue), None)).await });
    println!("review API on {base}");

    let http = reqwest::Client::new();
    loop {
        let resp = http.get(format!("{base}/api/review/next")).header("x-reviewer", "dr-a").send().await?;
        if resp.status() == reqwest::StatusCode::NO_CONTENT {
            break;
        }
        let item: Value = resp.json().await?;
        let id = item["window_id"].as_str().unwrap_or_default().to_string();
        // reject the last window, accept the rest
        let body = if id == "w2" {
            json!({"decision": "reject", "note": "bubble, not a lesion"})
        } else {
            json!({"decision": "accept"})
        };
        let status = http
            .post(format!("{base}/api/review/{id}/decision"))
            .header("x-reviewer", "dr-a")
            .json(&body)
            .send()
            .await?
            .status();
        println!("{id}: {} -> {status}", body["decision"]);
    }
    let stats: Value = http.get(format!("{base}/api/review/stats")).send().await?.json().await?;
    println!("stats: {stats}");
    Ok(())
}
