use std::sync::Arc;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use serde_json::{json, Value};
use sisd_cli::api::{router, AppState};
use tower::ServiceExt;

fn app() -> Router {
    router(AppState::new(None))
}

async fn call(app: &Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let req = Request::builder().method(method).uri(uri);
    let req = match body {
        Some(b) => req.header("content-type", "application/json").body(Body::from(b.to_string())),
        None => req.body(Body::empty()),
    }
    .unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    let value = if bytes.is_empty() { Value::Null } else { serde_json::from_slice(&bytes).unwrap() };
    (status, value)
}

fn small() -> Value {
    json!({ "kind": "location", "params": { "beam_width": 20, "max_depth": 2 }, "direction": { "restarts": 4 } })
}

async fn synthetic_session(app: &Router) -> String {
    let (status, body) = call(app, "POST", "/sessions", Some(json!({ "synthetic": { "seed": 0 } }))).await;
    assert_eq!(status, StatusCode::CREATED, "{body}");
    body["id"].as_str().unwrap().to_string()
}

#[tokio::test]
async fn create_and_fetch() {
    let app = app();
    let id = synthetic_session(&app).await;
    let (status, body) = call(&app, "GET", &format!("/sessions/{id}"), None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["n"], 620);
    assert_eq!(body["targets"], json!(["t1", "t2"]));
    assert_eq!(body["iteration"], 0);
    assert_eq!(body["model"]["blocks"].as_array().unwrap().len(), 1);
    let (status, _) = call(&app, "GET", "/sessions/nope", None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn bad_create_requests() {
    let app = app();
    let (status, body) = call(&app, "POST", "/sessions", Some(json!({}))).await;
    assert_eq!(status, StatusCode::BAD_REQUEST, "{body}");
    let (status, _) = call(&app, "POST", "/sessions", Some(json!({ "data": "/no/such.csv", "targets": ["x"] }))).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    let (status, _) = call(&app, "POST", "/sessions", Some(json!({ "synthetic": { "seed": 0 }, "gamma": -1.0 }))).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn mine_assimilate_protocol() {
    let app = app();
    let id = synthetic_session(&app).await;
    let (status, body) = call(&app, "POST", &format!("/sessions/{id}/mine"), Some(small())).await;
    assert_eq!(status, StatusCode::OK, "{body}");
    let cands = body["candidates"].as_array().unwrap();
    assert!(!cands.is_empty());
    let sis: Vec<f64> = cands.iter().map(|c| c["score"]["si"].as_f64().unwrap()).collect();
    assert!(sis.windows(2).all(|w| w[0] >= w[1]));
    let top = cands[0]["id"].as_str().unwrap().to_string();

    let (status, detail) = call(&app, "GET", &format!("/sessions/{id}/patterns/{top}"), None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(detail["attributes"].as_array().unwrap().len(), 2);

    let uri = format!("/sessions/{id}/assimilate");
    let (status, body) = call(&app, "POST", &uri, Some(json!({ "pattern_id": top }))).await;
    assert_eq!(status, StatusCode::OK, "{body}");
    assert_eq!(body["iteration"], 1);
    assert_eq!(body["spread_available"], true);

    // the candidate list was consumed
    let (status, _) = call(&app, "POST", &uri, Some(json!({ "pattern_id": top }))).await;
    assert_eq!(status, StatusCode::CONFLICT);

    let mut spread = small();
    spread["kind"] = json!("spread");
    let (status, body) = call(&app, "POST", &format!("/sessions/{id}/mine"), Some(spread.clone())).await;
    assert_eq!(status, StatusCode::OK, "{body}");
    let sp = body["candidates"][0]["id"].as_str().unwrap().to_string();
    let (status, detail) = call(&app, "GET", &format!("/sessions/{id}/patterns/{sp}"), None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(detail["spread"]["grid"].as_array().unwrap().len(), 201);
    let (status, _) = call(&app, "POST", &uri, Some(json!({ "pattern_id": sp }))).await;
    assert_eq!(status, StatusCode::OK);
    let (status, _) = call(&app, "POST", &format!("/sessions/{id}/mine"), Some(spread)).await;
    assert_eq!(status, StatusCode::CONFLICT);

    let (status, body) = call(&app, "GET", &format!("/sessions/{id}/timings"), None).await;
    assert_eq!(status, StatusCode::OK);
    let t = body.as_array().unwrap();
    assert_eq!(t.len(), 2);
    assert_eq!(t[0]["kind"], "location");
    assert_eq!(t[1]["kind"], "spread");

    // accepted patterns stay inspectable
    let (status, _) = call(&app, "GET", &format!("/sessions/{id}/patterns/{top}"), None).await;
    assert_eq!(status, StatusCode::OK);
    let (status, _) = call(&app, "GET", &format!("/sessions/{id}/patterns/ffff"), None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);

    let (status, body) = call(&app, "POST", &format!("/sessions/{id}/reset"), None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["iteration"], 0);
    assert_eq!(body["model"]["blocks"].as_array().unwrap().len(), 1);
}

#[tokio::test]
async fn mine_defaults_and_bad_params() {
    let app = app();
    let id = synthetic_session(&app).await;
    let (status, body) = call(
        &app,
        "POST",
        &format!("/sessions/{id}/mine"),
        Some(json!({ "params": { "beam_width": 0 } })),
    )
    .await;
    assert_eq!(status, StatusCode::BAD_REQUEST, "{body}");
    let (status, body) = call(&app, "POST", &format!("/sessions/{id}/mine"), Some(json!({ "kind": "spread" }))).await;
    assert_eq!(status, StatusCode::CONFLICT, "{body}");
}

#[tokio::test]
async fn concurrent_writers_conflict() {
    let state = AppState::new(None);
    let app = router(Arc::clone(&state));
    let id = synthetic_session(&app).await;
    let uri = format!("/sessions/{id}/mine");
    let body = json!({ "params": { "beam_width": 40, "max_depth": 4 } });
    let (a, b) = tokio::join!(call(&app, "POST", &uri, Some(body.clone())), async {
        // give the first request time to take the write lock
        tokio::time::sleep(std::time::Duration::from_millis(20)).await;
        let read = call(&app, "GET", &format!("/sessions/{id}"), None).await;
        (read, call(&app, "POST", &uri, Some(body.clone())).await)
    });
    assert_eq!(a.0, StatusCode::OK);
    let (read, second) = b;
    assert_eq!(read.0, StatusCode::OK);
    assert!(second.0 == StatusCode::CONFLICT || second.0 == StatusCode::OK);
}

#[tokio::test]
async fn api_matches_batch_mode() {
    let app = app();
    let id = synthetic_session(&app).await;
    for _ in 0..2 {
        let (_, body) = call(&app, "POST", &format!("/sessions/{id}/mine"), Some(small())).await;
        let top = body["candidates"][0]["id"].clone();
        call(&app, "POST", &format!("/sessions/{id}/assimilate"), Some(json!({ "pattern_id": top }))).await;
        let mut spread = small();
        spread["kind"] = json!("spread");
        let (_, body) = call(&app, "POST", &format!("/sessions/{id}/mine"), Some(spread)).await;
        let top = body["candidates"][0]["id"].clone();
        call(&app, "POST", &format!("/sessions/{id}/assimilate"), Some(json!({ "pattern_id": top }))).await;
    }
    let (_, body) = call(&app, "GET", &format!("/sessions/{id}"), None).await;

    let mut batch = sisd::Session::new(sisd::data::generate_synthetic(0), sisd::DlParams::default()).unwrap();
    let request: sisd::session::MineRequest = serde_json::from_value(json!({
        "search": { "beam_width": 20, "max_depth": 2 },
        "direction": { "restarts": 4 }
    }))
    .unwrap();
    for _ in 0..2 {
        batch.auto_step(&request, true).unwrap();
    }
    let expected: Value = serde_json::from_str(&batch.model().to_json().unwrap()).unwrap();
    assert_eq!(body["model"], expected);
}
