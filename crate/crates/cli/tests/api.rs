use std::sync::OnceLock;
use std::time::{Duration, Instant};

use axum::body::Body;
use axum::http::{Request, StatusCode};
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

use semmap_cli::server::{router, AppState, Clock, Shared};
use semmap_core::base::{BaseStation, Decision};
use semmap_core::pipeline::{simulate, Mission};
use semmap_core::{RunConfig, Source};

fn mission() -> Mission {
    static M: OnceLock<Mission> = OnceLock::new();
    M.get_or_init(|| {
        let mut cfg = RunConfig::load("prelim").unwrap();
        cfg.scenario.duration_s = 300.0;
        cfg.scenario.n_objects = 4;
        simulate(&cfg, 5, None, None).unwrap()
    })
    .clone()
}

fn loaded() -> Shared {
    let m = mission();
    let base = m.base_station();
    let at = m.close_at();
    AppState::new(m, base, Clock::new(at, 1.0), None, None)
}

async fn call(state: &Shared, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Vec<u8>) {
    let req = Request::builder().method(method).uri(uri).header("content-type", "application/json");
    let req = req.body(body.map_or_else(Body::empty, |b| Body::from(b.to_string()))).unwrap();
    let res = router(state.clone()).oneshot(req).await.unwrap();
    let status = res.status();
    (status, res.into_body().collect().await.unwrap().to_bytes().to_vec())
}

async fn call_json(state: &Shared, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let (s, b) = call(state, method, uri, body).await;
    (s, serde_json::from_slice(&b).unwrap_or(Value::Null))
}

#[tokio::test]
async fn lists_clusters_in_rank_order() {
    let st = loaded();
    let (s, v) = call_json(&st, "GET", "/v1/clusters", None).await;
    assert_eq!(s, StatusCode::OK);
    let clusters = v["clusters"].as_array().unwrap();
    assert!(!clusters.is_empty());
    let g: Vec<f64> = clusters.iter().map(|c| c["scorability"].as_f64().unwrap()).collect();
    assert!(g.windows(2).all(|w| w[0] >= w[1]));
    for (i, c) in clusters.iter().enumerate() {
        assert_eq!(c["rank"].as_u64().unwrap() as usize, i);
    }

    let (_, high) = call_json(&st, "GET", "/v1/clusters?band=low&state=unreviewed", None).await;
    assert!(high["clusters"].as_array().unwrap().iter().all(|c| c["band"] == "low"));
    let (_, created) = call_json(&st, "GET", "/v1/clusters?order=created", None).await;
    let ids: Vec<u64> = created["clusters"].as_array().unwrap().iter().map(|c| c["id"].as_u64().unwrap()).collect();
    assert!(ids.windows(2).all(|w| w[0] < w[1]));
}

#[tokio::test]
async fn detail_and_errors() {
    let st = loaded();
    let id = st.base().clusters()[0].id;
    let (s, v) = call_json(&st, "GET", &format!("/v1/clusters/{id}"), None).await;
    assert_eq!(s, StatusCode::OK);
    assert!(v["images"].as_array().unwrap().len() <= 4 * v["reports"].as_array().unwrap().len());
    assert!(!v["detections"].as_array().unwrap().is_empty());

    let (s, v) = call_json(&st, "GET", "/v1/clusters/999999", None).await;
    assert_eq!(s, StatusCode::NOT_FOUND);
    assert_eq!(v["error"], "not_found");

    let uri = format!("/v1/clusters/{id}/decision");
    let (s, _) = call_json(&st, "POST", &uri, Some(json!({"decision": "reject"}))).await;
    assert_eq!(s, StatusCode::OK);
    let (s, v) = call_json(&st, "POST", &uri, Some(json!({"decision": "accept"}))).await;
    assert_eq!(s, StatusCode::CONFLICT);
    assert_eq!(v["error"], "invalid_transition");
    let (s, v) = call_json(&st, "POST", &format!("/v1/clusters/{id}/undo"), None).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v["state"], "unreviewed");
    let (s, _) = call_json(&st, "POST", "/v1/clusters/999999/decision", Some(json!({"decision": "accept"}))).await;
    assert_eq!(s, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn submission_limit_is_enforced() {
    let m = mission();
    let mut cfg = m.config.pipeline.clone();
    cfg.s_max = 2;
    let mut base = BaseStation::new(&cfg);
    for d in &m.link.deliveries {
        base.ingest(m.report(d.report_id).unwrap().clone(), d.arrived_at);
    }
    assert!(base.clusters().len() >= 3);
    let ids: Vec<u64> = base.clusters().iter().take(3).map(|c| c.id).collect();
    let st = AppState::new(m, base, Clock::new(0.0, 1.0), None, None);
    for id in &ids {
        call(&st, "POST", &format!("/v1/clusters/{id}/decision"), Some(json!({"decision": "accept"}))).await;
    }
    let (s, v) = call_json(&st, "POST", "/v1/submit", None).await;
    assert_eq!(s, StatusCode::CONFLICT);
    assert_eq!(v["error"], "submission_budget");
    call(&st, "POST", &format!("/v1/clusters/{}/undo", ids[2]), None).await;
    let (s, v) = call_json(&st, "POST", "/v1/submit", None).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v["entries"].as_array().unwrap().len(), 2);
}

#[tokio::test]
async fn perfect_review_reaches_full_operator_precision() {
    let st = loaded();
    let sources = st.mission.cluster_sources(&st.base());
    let mut adjusted = None;
    for (id, source) in &sources {
        let truth = matches!(source, Source::Truth(_));
        let mut body = json!({"decision": if truth { "accept" } else { "reject" }});
        if truth && adjusted.is_none() {
            adjusted = Some(*id);
            body["position"] = json!({"x": 1.5, "y": 2.5, "z": 0.25});
        }
        let (s, _) = call(&st, "POST", &format!("/v1/clusters/{id}/decision"), Some(body)).await;
        assert_eq!(s, StatusCode::OK);
    }
    let adjusted = adjusted.expect("at least one true cluster");
    let (s, v) = call_json(&st, "POST", "/v1/submit", None).await;
    assert_eq!(s, StatusCode::OK);
    let entry = v["entries"].as_array().unwrap().iter().find(|e| e["cluster"] == adjusted).unwrap().clone();
    assert_eq!(entry["position"], json!({"x": 1.5, "y": 2.5, "z": 0.25}));

    let (_, m) = call_json(&st, "GET", "/v1/metrics", None).await;
    let object = m["stages"]["object"].as_array().unwrap();
    assert_eq!(object[3]["stage"], "operator_output");
    assert_eq!(object[3]["precision"].as_f64(), Some(1.0));
    assert_eq!(object[3]["recall"], object[2]["recall"]);
    let (_, sub) = call_json(&st, "GET", "/v1/submission", None).await;
    assert_eq!(sub["entries"], v["entries"]);
}

#[tokio::test]
async fn long_poll_returns_backlog_then_waits() {
    let st = loaded();
    let (_, v) = call_json(&st, "GET", "/v1/updates?since=0", None).await;
    let seq = v["seq"].as_u64().unwrap();
    assert_eq!(v["updates"].as_array().unwrap().len() as u64, seq);

    let t = Instant::now();
    let (_, v) = call_json(&st, "GET", &format!("/v1/updates?since={seq}&timeout_ms=100"), None).await;
    assert!(t.elapsed() >= Duration::from_millis(90));
    assert!(v["updates"].as_array().unwrap().is_empty());

    let id = st.base().clusters()[0].id;
    let writer = st.clone();
    tokio::spawn(async move {
        tokio::time::sleep(Duration::from_millis(50)).await;
        writer.mutate(|b, at| b.decide(id, Decision::Accept, None, at)).unwrap();
    });
    let t = Instant::now();
    let (_, v) = call_json(&st, "GET", &format!("/v1/updates?since={seq}&timeout_ms=10000"), None).await;
    assert!(t.elapsed() < Duration::from_secs(5));
    let ups = v["updates"].as_array().unwrap();
    assert_eq!(ups.len(), 1);
    assert_eq!(ups[0]["kind"], "decided");
    assert_eq!(ups[0]["cluster"], id);
}

#[tokio::test]
async fn paced_feed_delivers_everything() {
    let m = mission();
    let total = m.link.deliveries.len();
    let last = m.link.deliveries.last().unwrap().arrived_at;
    let base = BaseStation::new(&m.config.pipeline);
    let st = AppState::new(m, base, Clock::new(0.0, last / 0.3), None, None);
    let (_, v) = call_json(&st, "GET", "/v1/status", None).await;
    assert_eq!(v["reports_received"], 0);
    semmap_cli::server::feed(st.clone()).await;
    let (_, v) = call_json(&st, "GET", "/v1/status", None).await;
    assert_eq!(v["reports_received"].as_u64().unwrap() as usize, total);
    assert_eq!(v["api_version"], "v1");
}

#[tokio::test]
async fn images_are_png() {
    let st = loaded();
    let image_ref = st.mission.report(st.mission.link.deliveries[0].report_id).unwrap().images[0].image_ref.clone();
    let (s, body) = call(&st, "GET", &format!("/v1/images/{image_ref}.png"), None).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(&body[..8], b"\x89PNG\r\n\x1a\n");
    let (s, _) = call(&st, "GET", "/v1/images/r9-c0-f1", None).await;
    assert_eq!(s, StatusCode::NOT_FOUND);
    let (s, _) = call(&st, "GET", "/v1/images/nonsense", None).await;
    assert_eq!(s, StatusCode::NOT_FOUND);
}
