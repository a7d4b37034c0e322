//! JSON-over-HTTP job service for the what-if studio.
//!
//! Scenarios are validated and stored immutably; jobs copy their effective
//! scenario, run on a bounded worker pool and write an ordinary run
//! directory. Everything a GET needs lives on disk, so completed jobs
//! survive a restart.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};

use axum::body::Bytes;
use axum::extract::{Path as UrlPath, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{any, get, post};
use axum::{Json, Router};
use crowdmpm::analyze::{curl_map, divergence_map};
use crowdmpm::field_io::{read_field, AnyField};
use crowdmpm::scenario::{self, frame_steps, Scenario};
use crowdmpm::snapshot::read_snapshot;
use crowdmpm::{Error, FieldError};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use tokio::sync::Semaphore;
use tower_http::services::ServeDir;

use crate::commands::is_instability;

pub const API_SCHEMA_VERSION: u32 = 1;
pub const DATA_DIR_ENV: &str = "CROWDMPM_DATA_DIR";
pub const LAYERS: [&str; 5] = ["velocity", "stress", "curl", "divergence", "particles"];

const JOB_FILE: &str = "job.json";
const JOB_SCENARIO: &str = "scenario.json";
const RUN_DIR: &str = "run";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JobStatus {
    Queued,
    Running,
    Done,
    Failed,
}

impl JobStatus {
    fn rank(self) -> u8 {
        match self {
            JobStatus::Queued => 0,
            JobStatus::Running => 1,
            JobStatus::Done | JobStatus::Failed => 2,
        }
    }

    /// Transitions only move forward: queued, running, then done or failed.
    pub fn can_become(self, next: JobStatus) -> bool {
        next.rank() > self.rank()
    }

    pub fn is_finished(self) -> bool {
        self.rank() == 2
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JobError {
    /// `unstable` for runtime blow-ups, `interrupted` for jobs cut short
    /// by a restart, `error` otherwise.
    pub kind: String,
    pub message: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Job {
    pub id: String,
    pub scenario_id: String,
    pub status: JobStatus,
    /// Fraction of steps completed.
    pub progress: f64,
    pub step: usize,
    pub steps: usize,
    /// Frames fully written and readable.
    pub frames_ready: usize,
    pub frames_total: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<JobError>,
}

struct Entry {
    job: Job,
    cancel: Arc<AtomicBool>,
}

struct Inner {
    root: PathBuf,
    jobs: Mutex<HashMap<String, Entry>>,
    permits: Arc<Semaphore>,
    static_dir: Option<PathBuf>,
}

/// Shared service state.
#[derive(Clone)]
pub struct AppState(Arc<Inner>);

fn scenarios_dir(root: &Path) -> PathBuf {
    root.join("scenarios")
}

fn jobs_dir(root: &Path) -> PathBuf {
    root.join("jobs")
}

fn valid_id(id: &str) -> bool {
    !id.is_empty() && id.len() <= 64 && id.chars().all(|c| c.is_ascii_alphanumeric() || c == '-')
}

fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, bytes)?;
    std::fs::rename(tmp, path)
}

impl AppState {
    /// Opens (or creates) a job store under `root`. Jobs left queued or
    /// running by a previous process are marked failed.
    pub fn open(root: &Path, workers: usize, static_dir: Option<PathBuf>) -> std::io::Result<Self> {
        std::fs::create_dir_all(scenarios_dir(root))?;
        std::fs::create_dir_all(jobs_dir(root))?;
        let mut jobs = HashMap::new();
        for e in std::fs::read_dir(jobs_dir(root))? {
            let path = e?.path().join(JOB_FILE);
            let Ok(bytes) = std::fs::read(&path) else { continue };
            let Ok(mut job) = serde_json::from_slice::<Job>(&bytes) else {
                log::warn!("skipping unreadable job record {}", path.display());
                continue;
            };
            if !job.status.is_finished() {
                job.status = JobStatus::Failed;
                job.error =
                    Some(JobError { kind: "interrupted".into(), message: "the service restarted mid-run".into() });
                write_atomic(&path, &serde_json::to_vec_pretty(&job)?)?;
            }
            jobs.insert(job.id.clone(), Entry { job, cancel: Arc::new(AtomicBool::new(false)) });
        }
        Ok(AppState(Arc::new(Inner {
            root: root.to_path_buf(),
            jobs: Mutex::new(jobs),
            permits: Arc::new(Semaphore::new(workers.max(1))),
            static_dir,
        })))
    }

    /// Job store root from `CROWDMPM_DATA_DIR`, defaulting to
    /// `./crowdmpm-data`.
    pub fn data_dir_from_env() -> PathBuf {
        std::env::var_os(DATA_DIR_ENV).map(PathBuf::from).unwrap_or_else(|| PathBuf::from("crowdmpm-data"))
    }

    fn job_dir(&self, id: &str) -> PathBuf {
        jobs_dir(&self.0.root).join(id)
    }

    fn scenario_path(&self, id: &str) -> PathBuf {
        scenarios_dir(&self.0.root).join(format!("{id}.json"))
    }

    pub fn job(&self, id: &str) -> Option<Job> {
        self.0.jobs.lock().unwrap().get(id).map(|e| e.job.clone())
    }

    fn persist(&self, job: &Job) {
        let path = self.job_dir(&job.id).join(JOB_FILE);
        if let Err(e) =
            serde_json::to_vec_pretty(job).map_err(std::io::Error::other).and_then(|b| write_atomic(&path, &b))
        {
            log::error!("could not persist job {}: {e}", job.id);
        }
    }

    /// Applies `f` to a job record under the lock; persists it when the
    /// status changed. Backward status changes are refused.
    fn update(&self, id: &str, f: impl FnOnce(&mut Job)) -> Option<Job> {
        let mut jobs = self.0.jobs.lock().unwrap();
        let entry = jobs.get_mut(id)?;
        let before = entry.job.clone();
        f(&mut entry.job);
        if entry.job.status != before.status && !before.status.can_become(entry.job.status) {
            entry.job.status = before.status;
        }
        let job = entry.job.clone();
        drop(jobs);
        if job.status != before.status {
            self.persist(&job);
        }
        Some(job)
    }

    fn spawn_job(&self, id: String, sc: Scenario, cancel: Arc<AtomicBool>) {
        let state = self.clone();
        tokio::spawn(async move {
            let Ok(_permit) = state.0.permits.clone().acquire_owned().await else { return };
            if cancel.load(Ordering::SeqCst) {
                state.discard(&id);
                return;
            }
            state.update(&id, |j| j.status = JobStatus::Running);
            let dir = state.job_dir(&id);
            let worker = state.clone();
            let (wid, wcancel) = (id.clone(), cancel.clone());
            let result = tokio::task::spawn_blocking(move || {
                scenario::run(&sc, &dir, &dir.join(RUN_DIR), &mut |p| {
                    worker.update(&wid, |j| {
                        j.step = p.step;
                        j.frames_ready = p.frames;
                        j.progress = if p.steps == 0 { 1.0 } else { p.step as f64 / p.steps as f64 };
                    });
                    !wcancel.load(Ordering::SeqCst)
                })
            })
            .await;
            if cancel.load(Ordering::SeqCst) {
                state.discard(&id);
                return;
            }
            let failure = |kind: &str, message: String| Some(JobError { kind: kind.into(), message });
            state.update(&id, |j| match result {
                Ok(Ok(summary)) => {
                    j.status = JobStatus::Done;
                    j.progress = 1.0;
                    j.frames_ready = summary.frames;
                    j.frames_total = summary.frames;
                }
                Ok(Err(e)) => {
                    j.status = JobStatus::Failed;
                    j.error = failure(if is_instability(&e) { "unstable" } else { "error" }, e.to_string());
                }
                Err(e) => {
                    j.status = JobStatus::Failed;
                    j.error = failure("error", format!("worker crashed: {e}"));
                }
            });
        });
    }

    fn discard(&self, id: &str) {
        let _ = std::fs::remove_dir_all(self.job_dir(id));
    }
}

fn body(status: StatusCode, mut value: Value) -> Response {
    if let Value::Object(m) = &mut value {
        m.insert("schema_version".into(), json!(API_SCHEMA_VERSION));
    }
    (status, Json(value)).into_response()
}

fn error(status: StatusCode, message: impl Into<String>) -> Response {
    body(status, json!({ "error": message.into() }))
}

fn invalid(fields: &[FieldError]) -> Response {
    body(StatusCode::BAD_REQUEST, json!({ "error": "invalid scenario", "fields": fields }))
}

fn not_found(what: &str, id: &str) -> Response {
    error(StatusCode::NOT_FOUND, format!("unknown {what} {id:?}"))
}

fn parse_json(bytes: &Bytes) -> Result<Value, Response> {
    serde_json::from_slice(bytes).map_err(|e| invalid(&[FieldError::new("$", e.to_string())]))
}

/// Full validation including particle placement.
fn check_scenario(value: Value) -> Result<Scenario, Response> {
    let sc = Scenario::from_value(value).map_err(|f| invalid(&f))?;
    match sc.particles() {
        Ok(_) => Ok(sc),
        Err(Error::InvalidScenario(f)) => Err(invalid(&f)),
        Err(e) => Err(invalid(&[FieldError::new("$", e.to_string())])),
    }
}

async fn post_scenario(State(state): State<AppState>, bytes: Bytes) -> Response {
    let value = match parse_json(&bytes) {
        Ok(v) => v,
        Err(r) => return r,
    };
    if let Err(r) = check_scenario(value.clone()) {
        return r;
    }
    let id = uuid::Uuid::new_v4().to_string();
    let text = serde_json::to_vec_pretty(&value).expect("json value serializes");
    if let Err(e) = write_atomic(&state.scenario_path(&id), &text) {
        return error(StatusCode::INTERNAL_SERVER_ERROR, e.to_string());
    }
    body(StatusCode::CREATED, json!({ "id": id }))
}

fn load_scenario(state: &AppState, id: &str) -> Option<Value> {
    if !valid_id(id) {
        return None;
    }
    serde_json::from_slice(&std::fs::read(state.scenario_path(id)).ok()?).ok()
}

async fn get_scenario(State(state): State<AppState>, UrlPath(id): UrlPath<String>) -> Response {
    match load_scenario(&state, &id) {
        Some(v) => body(StatusCode::OK, json!({ "id": id, "scenario": v })),
        None => not_found("scenario", &id),
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct JobRequest {
    scenario_id: String,
    #[serde(default)]
    overrides: Option<Value>,
}

async fn post_job(State(state): State<AppState>, bytes: Bytes) -> Response {
    let req: JobRequest = match serde_json::from_slice(&bytes) {
        Ok(r) => r,
        Err(e) => {
            return body(
                StatusCode::BAD_REQUEST,
                json!({ "error": "invalid job request", "fields": [FieldError::new("$", e.to_string())] }),
            )
        }
    };
    let Some(mut value) = load_scenario(&state, &req.scenario_id) else {
        return not_found("scenario", &req.scenario_id);
    };
    if let Some(patch) = &req.overrides {
        if !patch.is_object() {
            return invalid(&[FieldError::new("overrides", "must be a JSON object")]);
        }
        scenario::merge(&mut value, patch);
    }
    let sc = match check_scenario(value) {
        Ok(s) => s,
        Err(r) => return r,
    };
    let id = uuid::Uuid::new_v4().to_string();
    let dir = state.job_dir(&id);
    let job = Job {
        id: id.clone(),
        scenario_id: req.scenario_id,
        status: JobStatus::Queued,
        progress: 0.0,
        step: 0,
        steps: sc.steps,
        frames_ready: 0,
        frames_total: frame_steps(sc.steps, sc.snapshot_every).len(),
        error: None,
    };
    let written = std::fs::create_dir_all(&dir)
        .and_then(|_| {
            write_atomic(&dir.join(JOB_SCENARIO), &serde_json::to_vec_pretty(&sc).expect("scenario serializes"))
        })
        .and_then(|_| write_atomic(&dir.join(JOB_FILE), &serde_json::to_vec_pretty(&job).expect("job serializes")));
    if let Err(e) = written {
        return error(StatusCode::INTERNAL_SERVER_ERROR, e.to_string());
    }
    let cancel = Arc::new(AtomicBool::new(false));
    state.0.jobs.lock().unwrap().insert(id.clone(), Entry { job, cancel: cancel.clone() });
    state.spawn_job(id.clone(), sc, cancel);
    body(StatusCode::ACCEPTED, json!({ "job_id": id }))
}

async fn list_jobs(State(state): State<AppState>) -> Response {
    let mut jobs: Vec<Job> = state.0.jobs.lock().unwrap().values().map(|e| e.job.clone()).collect();
    jobs.sort_by(|a, b| a.id.cmp(&b.id));
    body(StatusCode::OK, json!({ "jobs": jobs }))
}

async fn get_job(State(state): State<AppState>, UrlPath(id): UrlPath<String>) -> Response {
    match state.job(&id) {
        Some(job) => body(StatusCode::OK, json!({ "job": job })),
        None => not_found("job", &id),
    }
}

/// Refusal for data the job has not produced: 409 while it may still
/// arrive, 422 when the job failed before getting there.
fn not_ready(job: &Job, what: &str) -> Response {
    match job.status {
        JobStatus::Failed => body(
            StatusCode::UNPROCESSABLE_ENTITY,
            json!({ "error": format!("job failed before producing {what}"), "detail": job.error, "frames_ready": job.frames_ready }),
        ),
        _ => body(
            StatusCode::CONFLICT,
            json!({ "error": format!("{what} not ready yet"), "status": job.status, "frames_ready": job.frames_ready }),
        ),
    }
}

async fn get_report(State(state): State<AppState>, UrlPath(id): UrlPath<String>) -> Response {
    let Some(job) = state.job(&id) else { return not_found("job", &id) };
    if job.status != JobStatus::Done {
        return not_ready(&job, "the report");
    }
    let path = state.job_dir(&id).join(RUN_DIR).join(scenario::REPORT_FILE);
    match std::fs::read(&path)
        .map_err(|e| e.to_string())
        .and_then(|b| serde_json::from_slice::<Value>(&b).map_err(|e| e.to_string()))
    {
        Ok(report) => body(StatusCode::OK, json!({ "job_id": id, "report": report })),
        Err(e) => error(StatusCode::INTERNAL_SERVER_ERROR, e),
    }
}

#[derive(Deserialize)]
struct FrameQuery {
    layers: Option<String>,
}

fn frame_layers(run: &Path, n: usize, layers: &[String]) -> crowdmpm::Result<Value> {
    let (manifest, state) = read_snapshot(&scenario::snapshot_path(run, n))?;
    let velocity = match read_field(&scenario::velocity_path(run, n))? {
        AnyField::Vector(v) => v,
        AnyField::Scalar(_) => return Err(Error::Invalid("velocity dump holds a scalar field".into())),
    };
    let spec = velocity.spec;
    let mut out = serde_json::Map::new();
    for layer in layers {
        let v = match layer.as_str() {
            "velocity" => json!(velocity.values.iter().map(|v| [v.x, v.y]).collect::<Vec<_>>()),
            "stress" => match read_field(&scenario::stress_path(run, n))? {
                AnyField::Scalar(s) => json!(s.values),
                AnyField::Vector(_) => return Err(Error::Invalid("stress dump holds a vector field".into())),
            },
            "curl" => json!(curl_map(&velocity, false)?.values),
            "divergence" => json!(divergence_map(&velocity, false)?.values),
            "particles" => json!(state
                .particles
                .iter()
                .map(|p| json!({ "x": p.x.x, "y": p.x.y, "vx": p.v.x, "vy": p.v.y, "r_a": p.r_a, "r_b": p.r_b, "j": p.j() }))
                .collect::<Vec<_>>()),
            _ => unreachable!("layers are checked before reading"),
        };
        out.insert(layer.clone(), v);
    }
    Ok(json!({
        "frame": n,
        "step": manifest.step,
        "time": manifest.time,
        "count": manifest.count,
        "exited": manifest.exited,
        "grid": { "nx": spec.nx, "ny": spec.ny, "dx": spec.dx, "origin": [spec.origin.x, spec.origin.y] },
        "layers": out,
    }))
}

async fn get_frame(
    State(state): State<AppState>,
    UrlPath((id, n)): UrlPath<(String, usize)>,
    Query(q): Query<FrameQuery>,
) -> Response {
    let layers: Vec<String> = match q.layers.as_deref() {
        None | Some("") => LAYERS.iter().map(|s| s.to_string()).collect(),
        Some(s) => s.split(',').map(|l| l.trim().to_string()).filter(|l| !l.is_empty()).collect(),
    };
    if let Some(bad) = layers.iter().find(|l| !LAYERS.contains(&l.as_str())) {
        return error(StatusCode::BAD_REQUEST, format!("unknown layer {bad:?}; expected some of {}", LAYERS.join(",")));
    }
    let Some(job) = state.job(&id) else { return not_found("job", &id) };
    if n >= job.frames_total {
        return error(
            StatusCode::NOT_FOUND,
            format!("frame {n} is beyond the {} frames of job {id}", job.frames_total),
        );
    }
    if n >= job.frames_ready {
        return not_ready(&job, &format!("frame {n}"));
    }
    let run = state.job_dir(&id).join(RUN_DIR);
    match tokio::task::spawn_blocking(move || frame_layers(&run, n, &layers)).await {
        Ok(Ok(mut v)) => {
            v["job_id"] = json!(id);
            body(StatusCode::OK, v)
        }
        Ok(Err(e)) => error(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()),
        Err(e) => error(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()),
    }
}

async fn delete_job(State(state): State<AppState>, UrlPath(id): UrlPath<String>) -> Response {
    let Some(entry) = state.0.jobs.lock().unwrap().remove(&id) else {
        return not_found("job", &id);
    };
    if entry.job.status.is_finished() {
        state.discard(&id);
    } else {
        // The worker removes the directory once it notices.
        entry.cancel.store(true, Ordering::SeqCst);
    }
    body(StatusCode::OK, json!({ "deleted": id }))
}

async fn api_not_found() -> Response {
    error(StatusCode::NOT_FOUND, "no such endpoint")
}

pub fn router(state: AppState) -> Router {
    let api = Router::new()
        .route("/api/scenarios", post(post_scenario))
        .route("/api/scenarios/{id}", get(get_scenario))
        .route("/api/jobs", post(post_job).get(list_jobs))
        .route("/api/jobs/{id}", get(get_job).delete(delete_job))
        .route("/api/jobs/{id}/report", get(get_report))
        .route("/api/jobs/{id}/frames/{n}", get(get_frame))
        .route("/api", any(api_not_found))
        .route("/api/{*rest}", any(api_not_found));
    let api = match &state.0.static_dir {
        Some(dir) => api.fallback_service(ServeDir::new(dir)),
        None => api.fallback(|| async { error(StatusCode::NOT_FOUND, "no studio bundle is configured") }),
    };
    api.with_state(state)
}

/// Serves until the process is stopped.
pub async fn serve(addr: std::net::SocketAddr, state: AppState) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    log::info!("listening on http://{}", listener.local_addr()?);
    axum::serve(listener, router(state)).await
}
