//! Endpoint contract exercised through the router without a socket.

use std::sync::Arc;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use futures::StreamExt;
use levipick::config::Config;
use levipick::experiments::{picking, Setup};
use levipick_service::api::{router, AppState};
use serde_json::{json, Value};
use tower::ServiceExt;

fn app() -> Router {
    router(AppState::new(Config::default()))
}

async fn call(app: &Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let req = Request::builder().method(method).uri(uri);
    let req = match body {
        Some(v) => req.header("content-type", "application/json").body(Body::from(v.to_string())),
        None => req.body(Body::empty()),
    }
    .unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = axum::body::to_bytes(resp.into_body(), usize::MAX).await.unwrap();
    let v = if bytes.is_empty() { Value::Null } else { serde_json::from_slice(&bytes).unwrap() };
    (status, v)
}

async fn new_session(app: &Router) -> String {
    let (s, v) = call(app, "POST", "/sessions", None).await;
    assert_eq!(s, StatusCode::CREATED);
    v["id"].as_str().unwrap().to_string()
}

#[tokio::test]
async fn session_lifecycle_and_device_snapshot() {
    let app = app();
    let id = new_session(&app).await;
    let (s, v) = call(&app, "POST", &format!("/sessions/{id}/command"), Some(json!({"line": "COMMIT"}))).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v["commit_counter"], 1);
    assert_eq!(v["reply"], "COMMITTED 1");
    let (_, p) = call(&app, "GET", &format!("/sessions/{id}/particle"), None).await;
    assert_eq!(p["position"], json!([0.0, 0.0, 0.001]));

    call(&app, "POST", &format!("/sessions/{id}/command"), Some(json!({"line": "SET 3 625"}))).await;
    let (_, d) = call(&app, "GET", &format!("/sessions/{id}/device"), None).await;
    assert_eq!(d["staged_phases"][3], 625);
    assert_eq!(d["live"]["phases"][3], 0);

    let (s, _) = call(&app, "DELETE", &format!("/sessions/{id}"), None).await;
    assert_eq!(s, StatusCode::NO_CONTENT);
    let (s, v) = call(&app, "GET", &format!("/sessions/{id}/device"), None).await;
    assert_eq!(s, StatusCode::NOT_FOUND);
    assert_eq!(v["error"]["kind"], "not_found");
}

#[tokio::test]
async fn errors_are_structured() {
    let app = app();
    let id = new_session(&app).await;
    let (s, v) = call(&app, "POST", &format!("/sessions/{id}/command"), Some(json!({"line": "INC 3 x"}))).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    assert_eq!(v["error"]["kind"], "parse");
    assert!(v["error"]["column"].as_u64().is_some());
    let (_, v) = call(&app, "POST", &format!("/sessions/{id}/command"), Some(json!({"line": "SET 60 0"}))).await;
    assert_eq!(v["error"]["kind"], "range");
    let (s, v) = call(&app, "POST", "/sessions", None).await;
    assert_eq!(s, StatusCode::CREATED);
    assert!(v["config_hash"].as_str().unwrap().len() == 64);
}

#[tokio::test]
async fn bad_config_is_rejected() {
    let app = app();
    let req = Request::post("/sessions").body(Body::from("schema = \"arrayspec v0\"")).unwrap();
    let resp = app.oneshot(req).await.unwrap();
    assert_eq!(resp.status(), StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn profile_with_rings_off_is_zero() {
    let app = app();
    let id = new_session(&app).await;
    let (s, v) = call(&app, "GET", &format!("/sessions/{id}/profile?z_min=0.001&z_max=0.05&n=11"), None).await;
    assert_eq!(s, StatusCode::OK);
    let pts = v.as_array().unwrap();
    assert_eq!(pts.len(), 11);
    assert!(pts.iter().all(|p| p["U"] == 0.0 && p["Fz"] == 0.0));
}

#[tokio::test]
async fn step_settle_moves_the_particle_in_a_live_field() {
    let app = app();
    let id = new_session(&app).await;
    for line in ["RING 1 ON", "RING 2 ON", "COMMIT"] {
        call(&app, "POST", &format!("/sessions/{id}/command"), Some(json!({ "line": line }))).await;
    }
    let (_, p) = call(&app, "GET", &format!("/sessions/{id}/particle"), None).await;
    let z = p["position"][2].as_f64().unwrap();
    assert!(z > 0.005 && z < 0.012, "settled at {z}");
    let (s, p) = call(&app, "POST", &format!("/sessions/{id}/settle"), Some(json!({"steps": 5}))).await;
    assert_eq!(s, StatusCode::OK);
    assert!((p["position"][2].as_f64().unwrap() - z).abs() < 1e-4);
}

#[tokio::test(flavor = "multi_thread")]
async fn picking_script_lifts_particle_and_pushes_monotone_events() {
    let app = app();
    let id = new_session(&app).await;
    let sse = app
        .clone()
        .oneshot(Request::get(format!("/sessions/{id}/events")).body(Body::empty()).unwrap())
        .await
        .unwrap();
    assert_eq!(sse.status(), StatusCode::OK);
    let mut stream = sse.into_body().into_data_stream();

    let setup = Arc::new(Setup::default());
    let schedule = tokio::task::spawn_blocking(move || picking(&setup).unwrap().schedule).await.unwrap();
    let script = schedule.to_script();
    let commits = schedule.commit_count() as u64;
    for line in script.lines() {
        let (s, _) = call(&app, "POST", &format!("/sessions/{id}/command"), Some(json!({ "line": line }))).await;
        assert_eq!(s, StatusCode::OK, "{line}");
    }

    let mut last = 0;
    let mut buffer = String::new();
    let mut final_z = 0.0;
    while last < commits {
        let chunk = stream.next().await.unwrap().unwrap();
        buffer.push_str(std::str::from_utf8(&chunk).unwrap());
        while let Some(end) = buffer.find("\n\n") {
            let frame: String = buffer.drain(..end + 2).collect();
            let Some(data) = frame.lines().find_map(|l| l.strip_prefix("data: ")) else {
                continue;
            };
            let e: Value = serde_json::from_str(data).unwrap();
            let n = e["commit_counter"].as_u64().unwrap();
            assert!(n > last, "events out of order: {n} after {last}");
            last = n;
            final_z = e["position"][2].as_f64().unwrap();
        }
    }
    assert!(final_z >= 0.045, "final height {final_z}");
    let (_, p) = call(&app, "GET", &format!("/sessions/{id}/particle"), None).await;
    assert_eq!(p["position"][2].as_f64().unwrap(), final_z);
}

#[tokio::test(flavor = "multi_thread")]
async fn basin_is_cached_by_config_hash() {
    let app = app();
    let id = new_session(&app).await;
    let (s, first) = call(&app, "GET", &format!("/sessions/{id}/basin"), None).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(first["cached"], false);
    let other = new_session(&app).await;
    let (_, second) = call(&app, "GET", &format!("/sessions/{other}/basin"), None).await;
    assert_eq!(second["cached"], true);
    assert_eq!(first["map"], second["map"]);
}
