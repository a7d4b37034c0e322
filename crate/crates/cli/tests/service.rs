use std::path::Path;
use std::time::{Duration, Instant};

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use crowdmpm::scenario::{run, Scenario};
use crowdmpm_cli::server::{router, AppState, API_SCHEMA_VERSION};
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

const SMALL: &str = r#"{
    "domain": {"width": 60, "height": 40},
    "dx": 4,
    "walls": [{"type": "circle", "center": [45, 20], "radius": 4}],
    "exits": [{"a": [60, 14], "b": [60, 26]}],
    "spawns": [{"region": {"min": [6, 6], "max": [30, 34]}, "count": 20, "r_a": 2, "r_b": 3.5}],
    "body_force": {"kind": "goal", "goal": [66, 20], "speed": 0.6},
    "dt": 0.5,
    "steps": 10,
    "seed": 3
}"#;

async fn call(app: &Router, method: &str, uri: &str, body: Option<&str>) -> (StatusCode, Value) {
    let req = Request::builder()
        .method(method)
        .uri(uri)
        .header("content-type", "application/json")
        .body(body.map_or_else(Body::empty, |b| Body::from(b.to_string())))
        .unwrap();
    let res = app.clone().oneshot(req).await.unwrap();
    let status = res.status();
    let bytes = res.into_body().collect().await.unwrap().to_bytes();
    let value = serde_json::from_slice(&bytes).unwrap_or(Value::String(String::from_utf8_lossy(&bytes).into()));
    if value.is_object() {
        assert_eq!(value["schema_version"], json!(API_SCHEMA_VERSION), "{method} {uri}: {value}");
    }
    (status, value)
}

fn app(root: &Path, workers: usize) -> Router {
    router(AppState::open(root, workers, None).unwrap())
}

async fn store(app: &Router, scenario: &str) -> String {
    let (s, v) = call(app, "POST", "/api/scenarios", Some(scenario)).await;
    assert_eq!(s, StatusCode::CREATED, "{v}");
    v["id"].as_str().unwrap().to_string()
}

async fn submit(app: &Router, scenario_id: &str, overrides: Value) -> String {
    let req = json!({ "scenario_id": scenario_id, "overrides": overrides }).to_string();
    let (s, v) = call(app, "POST", "/api/jobs", Some(&req)).await;
    assert_eq!(s, StatusCode::ACCEPTED, "{v}");
    v["job_id"].as_str().unwrap().to_string()
}

async fn wait(app: &Router, id: &str) -> Value {
    let start = Instant::now();
    loop {
        let (s, v) = call(app, "GET", &format!("/api/jobs/{id}"), None).await;
        assert_eq!(s, StatusCode::OK);
        let status = v["job"]["status"].as_str().unwrap().to_string();
        if status == "done" || status == "failed" {
            return v["job"].clone();
        }
        assert!(start.elapsed() < Duration::from_secs(60), "job {id} stuck at {status}");
        tokio::time::sleep(Duration::from_millis(20)).await;
    }
}

fn dir_bytes(root: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push((p.strip_prefix(root).unwrap().display().to_string(), std::fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

#[tokio::test(flavor = "multi_thread")]
async fn malformed_scenarios_get_field_errors() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(dir.path(), 2);
    let bad = SMALL.replace(r#""count": 20"#, r#""count": 0"#).replace(r#""dx": 4"#, r#""dx": -1"#);
    let (s, v) = call(&app, "POST", "/api/scenarios", Some(&bad)).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    let fields: Vec<&str> = v["fields"].as_array().unwrap().iter().map(|f| f["field"].as_str().unwrap()).collect();
    assert!(fields.contains(&"dx") && fields.contains(&"spawns[0].count"), "{v}");

    let (s, v) = call(&app, "POST", "/api/scenarios", Some(r#"{"domain": {"width": "wide"}}"#)).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    assert_eq!(v["fields"][0]["field"], "domain.width");

    let (s, _) = call(&app, "POST", "/api/scenarios", Some("{not json")).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);

    let empty = SMALL
        .replace(r#""count": 20"#, r#""count": 1"#)
        .replace(r#""min": [6, 6], "max": [30, 34]"#, r#""min": [44, 19], "max": [46, 21]"#);
    let (s, v) = call(&app, "POST", "/api/scenarios", Some(&empty)).await;
    assert_eq!(s, StatusCode::BAD_REQUEST, "{v}");
}

#[tokio::test(flavor = "multi_thread")]
async fn frames_have_one_entry_per_node() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(dir.path(), 2);
    let sid = store(&app, SMALL).await;
    let (s, v) = call(&app, "GET", &format!("/api/scenarios/{sid}"), None).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v["scenario"], serde_json::from_str::<Value>(SMALL).unwrap());

    let id = submit(&app, &sid, json!({})).await;
    let job = wait(&app, &id).await;
    assert_eq!(job["status"], "done", "{job}");
    assert_eq!(job["frames_total"], 11);
    let (s, v) =
        call(&app, "GET", &format!("/api/jobs/{id}/frames/9?layers=velocity,stress,curl,divergence,particles"), None)
            .await;
    assert_eq!(s, StatusCode::OK);
    let nodes = (v["grid"]["nx"].as_u64().unwrap() * v["grid"]["ny"].as_u64().unwrap()) as usize;
    for layer in ["velocity", "stress", "curl", "divergence"] {
        assert_eq!(v["layers"][layer].as_array().unwrap().len(), nodes, "{layer}");
    }
    assert_eq!(v["layers"]["particles"].as_array().unwrap().len(), v["count"].as_u64().unwrap() as usize);

    let (s, v) = call(&app, "GET", &format!("/api/jobs/{id}/frames/3?layers=stress"), None).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v["layers"].as_object().unwrap().len(), 1);
    let (s, _) = call(&app, "GET", &format!("/api/jobs/{id}/frames/3?layers=pressure"), None).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    let (s, _) = call(&app, "GET", &format!("/api/jobs/{id}/frames/11"), None).await;
    assert_eq!(s, StatusCode::NOT_FOUND);

    let (s, v) = call(&app, "GET", &format!("/api/jobs/{id}/report"), None).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v["report"]["frames"].as_array().unwrap().len(), 11);
}

#[tokio::test(flavor = "multi_thread")]
async fn concurrent_jobs_match_solo_runs() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(dir.path(), 2);
    let sid = store(&app, SMALL).await;
    let overrides = [json!({"steps": 30, "seed": 1}), json!({"steps": 30, "seed": 2, "walls": []})];
    let (a, b) = tokio::join!(submit(&app, &sid, overrides[0].clone()), submit(&app, &sid, overrides[1].clone()));
    let (ja, jb) = tokio::join!(wait(&app, &a), wait(&app, &b));
    for (job, id, patch) in [(ja, &a, &overrides[0]), (jb, &b, &overrides[1])] {
        assert_eq!(job["status"], "done", "{job}");
        let solo = tempfile::tempdir().unwrap();
        let sc = Scenario::from_json(SMALL).unwrap().with_overrides(patch).unwrap();
        run(&sc, solo.path(), solo.path(), &mut |_| true).unwrap();
        let served = dir.path().join("jobs").join(id).join("run");
        assert!(dir_bytes(&served) == dir_bytes(solo.path()), "job {id} differs from its solo run");
    }
}

#[tokio::test(flavor = "multi_thread")]
async fn unknown_ids_are_404() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(dir.path(), 1);
    assert_eq!(call(&app, "GET", "/api/jobs/nope", None).await.0, StatusCode::NOT_FOUND);
    assert_eq!(call(&app, "GET", "/api/jobs/nope/frames/0", None).await.0, StatusCode::NOT_FOUND);
    assert_eq!(call(&app, "DELETE", "/api/jobs/nope", None).await.0, StatusCode::NOT_FOUND);
    assert_eq!(call(&app, "GET", "/api/scenarios/../../etc", None).await.0, StatusCode::NOT_FOUND);
    let (s, _) = call(&app, "POST", "/api/jobs", Some(r#"{"scenario_id": "missing"}"#)).await;
    assert_eq!(s, StatusCode::NOT_FOUND);
    assert_eq!(call(&app, "GET", "/api/nothing", None).await.0, StatusCode::NOT_FOUND);
}

#[tokio::test(flavor = "multi_thread")]
async fn bad_overrides_are_400() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(dir.path(), 1);
    let sid = store(&app, SMALL).await;
    let req = json!({ "scenario_id": sid, "overrides": {"gamma": 3} }).to_string();
    let (s, v) = call(&app, "POST", "/api/jobs", Some(&req)).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    assert_eq!(v["fields"][0]["field"], "gamma");
    let (s, _) = call(&app, "POST", "/api/jobs", Some(&json!({ "scenario_id": sid, "extra": 1 }).to_string())).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
}

#[tokio::test(flavor = "multi_thread")]
async fn frames_ahead_of_a_running_job_conflict() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(dir.path(), 1);
    let sid = store(&app, SMALL).await;
    let id = submit(&app, &sid, json!({"steps": 200000, "snapshot_every": 1000})).await;
    let (s, v) = call(&app, "GET", &format!("/api/jobs/{id}/frames/150"), None).await;
    assert_eq!(s, StatusCode::CONFLICT, "{v}");
    let (s, _) = call(&app, "GET", &format!("/api/jobs/{id}/report"), None).await;
    assert_eq!(s, StatusCode::CONFLICT);
    let (s, _) = call(&app, "DELETE", &format!("/api/jobs/{id}"), None).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(call(&app, "GET", &format!("/api/jobs/{id}"), None).await.0, StatusCode::NOT_FOUND);
    let job_dir = dir.path().join("jobs").join(&id);
    let start = Instant::now();
    while job_dir.exists() {
        assert!(start.elapsed() < Duration::from_secs(30), "cancelled job left its directory");
        tokio::time::sleep(Duration::from_millis(20)).await;
    }
}

#[tokio::test(flavor = "multi_thread")]
async fn unstable_jobs_fail_with_422_detail() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(dir.path(), 1);
    let fast = SMALL.replace(r#""r_b": 3.5}"#, r#""r_b": 3.5, "v0": [60, 0]}"#);
    let sid = store(&app, &fast).await;
    let id = submit(&app, &sid, json!({})).await;
    let job = wait(&app, &id).await;
    assert_eq!(job["status"], "failed");
    assert_eq!(job["error"]["kind"], "unstable", "{job}");
    let (s, v) = call(&app, "GET", &format!("/api/jobs/{id}/frames/5"), None).await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);
    assert!(v["detail"]["message"].as_str().unwrap().contains("stability"), "{v}");
    // The initial frame was written before the blow-up.
    assert_eq!(call(&app, "GET", &format!("/api/jobs/{id}/frames/0?layers=particles"), None).await.0, StatusCode::OK);
}

#[tokio::test(flavor = "multi_thread")]
async fn completed_jobs_survive_a_restart() {
    let dir = tempfile::tempdir().unwrap();
    let (id, before) = {
        let app = app(dir.path(), 1);
        let sid = store(&app, SMALL).await;
        let id = submit(&app, &sid, json!({})).await;
        wait(&app, &id).await;
        let (_, frame) = call(&app, "GET", &format!("/api/jobs/{id}/frames/10"), None).await;
        (id, frame)
    };
    let app = app(dir.path(), 1);
    let (s, v) = call(&app, "GET", &format!("/api/jobs/{id}"), None).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v["job"]["status"], "done");
    let (s, after) = call(&app, "GET", &format!("/api/jobs/{id}/frames/10"), None).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(after, before);
    let (s, v) = call(&app, "GET", "/api/jobs", None).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v["jobs"].as_array().unwrap().len(), 1);
}

#[tokio::test(flavor = "multi_thread")]
async fn root_serves_the_static_bundle() {
    let dir = tempfile::tempdir().unwrap();
    let web = tempfile::tempdir().unwrap();
    std::fs::write(web.path().join("index.html"), "<!doctype html><title>studio</title>").unwrap();
    let app = router(AppState::open(dir.path(), 1, Some(web.path().to_path_buf())).unwrap());
    let (s, v) = call(&app, "GET", "/", None).await;
    assert_eq!(s, StatusCode::OK);
    assert!(v.as_str().unwrap().contains("studio"));
    let bare = router(AppState::open(dir.path(), 1, None).unwrap());
    assert_eq!(call(&bare, "GET", "/", None).await.0, StatusCode::NOT_FOUND);
}
