//! The review API over one base station.
//!
//! Handlers lock the station only for the duration of one call, so every
//! request sees a consistent snapshot and mutations are serialized in
//! arrival order. Each mutation bumps the station's sequence number, which
//! wakes long-polling `/v1/updates` clients.

use std::path::PathBuf;
use std::sync::{Arc, Mutex, MutexGuard};
use std::time::{Duration, Instant};

use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::json;
use tokio::sync::watch;

use semmap_core::base::{Band, BaseStation, ClusterFilter, ClusterOrder, ClusterSummary, Decision, ReviewState, Update};
use semmap_core::pipeline::{LinkSummary, Mission, StageSummary};
use semmap_core::sim::{encode_png, DirImageStore, ImageStore};
use semmap_core::{Error, Label, Position3};

pub const API_VERSION: &str = "v1";
const DEFAULT_POLL_MS: u64 = 25_000;
const MAX_POLL_MS: u64 = 60_000;

/// Maps wall-clock time since start to mission time.
#[derive(Debug, Clone, Copy)]
pub struct Clock {
    start: Instant,
    origin: f64,
    rate: f64,
}

impl Clock {
    pub fn new(origin: f64, rate: f64) -> Self {
        Clock { start: Instant::now(), origin, rate }
    }

    pub fn now(&self) -> f64 {
        self.origin + self.start.elapsed().as_secs_f64() * self.rate
    }
}

pub struct AppState {
    pub mission: Mission,
    base: Mutex<BaseStation>,
    seq: watch::Sender<u64>,
    clock: Clock,
    frames: Option<DirImageStore>,
    out: Option<PathBuf>,
}

pub type Shared = Arc<AppState>;

impl AppState {
    /// `base` is the station to serve; `out` receives `submission.json` and
    /// `audit.jsonl` after every successful submit.
    pub fn new(mission: Mission, base: BaseStation, clock: Clock, frames: Option<DirImageStore>, out: Option<PathBuf>) -> Shared {
        let (seq, _) = watch::channel(base.seq());
        Arc::new(AppState { mission, base: Mutex::new(base), seq, clock, frames, out })
    }

    pub fn base(&self) -> MutexGuard<'_, BaseStation> {
        self.base.lock().unwrap_or_else(|e| e.into_inner())
    }

    /// Applies `f` to the station and wakes pollers if anything changed.
    pub fn mutate<T>(&self, f: impl FnOnce(&mut BaseStation, f64) -> T) -> T {
        let at = self.clock.now();
        let (value, seq) = {
            let mut base = self.base();
            let value = f(&mut base, at);
            (value, base.seq())
        };
        self.seq.send_if_modified(|s| {
            let changed = *s != seq;
            *s = seq;
            changed
        });
        value
    }

    fn store(&self) -> &dyn ImageStore {
        match &self.frames {
            Some(d) => d,
            None => &self.mission.scene,
        }
    }
}

/// Feeds deliveries into the station at their arrival times scaled by the
/// clock rate. Returns when the last delivery is in.
pub async fn feed(state: Shared) {
    let deliveries = state.mission.link.deliveries.clone();
    for d in deliveries {
        let wait = (d.arrived_at - state.clock.now()) / state.clock.rate;
        if wait > 0.0 {
            tokio::time::sleep(Duration::from_secs_f64(wait)).await;
        }
        let report = state.mission.report(d.report_id).expect("delivered report exists").clone();
        state.mutate(|b, _| b.ingest(report, d.arrived_at));
    }
}

pub struct ApiError(Error);

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        ApiError(e)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let (status, kind) = match &self.0 {
            Error::UnknownCluster(_) => (StatusCode::NOT_FOUND, "not_found"),
            Error::Transition { .. } => (StatusCode::CONFLICT, "invalid_transition"),
            Error::SubmissionBudget { .. } => (StatusCode::CONFLICT, "submission_budget"),
            Error::Io(_) => (StatusCode::NOT_FOUND, "not_found"),
            _ => (StatusCode::INTERNAL_SERVER_ERROR, "internal"),
        };
        (status, Json(json!({ "error": kind, "message": self.0.to_string() }))).into_response()
    }
}

type ApiResult<T> = Result<Json<T>, ApiError>;

pub fn router(state: Shared) -> Router {
    Router::new()
        .route("/v1/status", get(status))
        .route("/v1/clusters", get(list_clusters))
        .route("/v1/clusters/{id}", get(get_cluster))
        .route("/v1/clusters/{id}/decision", post(decide))
        .route("/v1/clusters/{id}/undo", post(undo))
        .route("/v1/submit", post(submit))
        .route("/v1/submission", get(submission))
        .route("/v1/metrics", get(metrics))
        .route("/v1/updates", get(updates))
        .route("/v1/images/{image_ref}", get(image))
        .with_state(state)
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Status {
    pub api_version: String,
    pub scenario: String,
    pub seed: u64,
    pub seq: u64,
    pub mission_time: f64,
    pub reports_received: usize,
    pub reports_total: usize,
    pub clusters: usize,
    pub s_max: usize,
    pub submitted: usize,
}

async fn status(State(st): State<Shared>) -> Json<Status> {
    let base = st.base();
    Json(Status {
        api_version: API_VERSION.into(),
        scenario: st.mission.config.scenario.name.clone(),
        seed: st.mission.seed(),
        seq: base.seq(),
        mission_time: st.clock.now(),
        reports_received: base.reports_received(),
        reports_total: st.mission.link.deliveries.len(),
        clusters: base.clusters().len(),
        s_max: base.config().s_max,
        submitted: base.submission().len(),
    })
}

#[derive(Debug, Default, Deserialize)]
pub struct ListQuery {
    pub band: Option<Band>,
    pub label: Option<String>,
    pub state: Option<ReviewState>,
    pub order: Option<ClusterOrder>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ClusterList {
    pub seq: u64,
    pub clusters: Vec<ClusterSummary>,
}

async fn list_clusters(State(st): State<Shared>, Query(q): Query<ListQuery>) -> Json<ClusterList> {
    let filter = ClusterFilter { band: q.band, label: q.label.map(Label::from), state: q.state };
    let base = st.base();
    Json(ClusterList { seq: base.seq(), clusters: base.list(&filter, q.order.unwrap_or_default()) })
}

async fn get_cluster(State(st): State<Shared>, Path(id): Path<u64>) -> Response {
    match st.base().get(id) {
        Ok(d) => Json(d).into_response(),
        Err(e) => ApiError(e).into_response(),
    }
}

#[derive(Debug, Serialize, Deserialize)]
pub struct DecisionRequest {
    pub decision: Decision,
    #[serde(default)]
    pub position: Option<Position3>,
}

async fn decide(State(st): State<Shared>, Path(id): Path<u64>, Json(req): Json<DecisionRequest>) -> ApiResult<ClusterSummary> {
    Ok(Json(st.mutate(|b, at| b.decide(id, req.decision, req.position, at))?))
}

async fn undo(State(st): State<Shared>, Path(id): Path<u64>) -> ApiResult<ClusterSummary> {
    Ok(Json(st.mutate(|b, at| b.undo(id, at))?))
}

#[derive(Debug, Serialize, Deserialize)]
pub struct SubmissionBody {
    pub entries: Vec<semmap_core::SubmissionEntry>,
}

async fn submit(State(st): State<Shared>) -> ApiResult<SubmissionBody> {
    let (entries, audit) = st.mutate(|b, at| b.submit(at).map(|e| (e, b.audit().to_vec())))?;
    if let Some(dir) = &st.out {
        if let Err(e) = persist(dir, &entries, &audit) {
            log::warn!("could not write submission to {}: {e}", dir.display());
        }
    }
    Ok(Json(SubmissionBody { entries }))
}

fn persist(
    dir: &std::path::Path,
    entries: &[semmap_core::SubmissionEntry],
    audit: &[semmap_core::base::AuditEntry],
) -> std::io::Result<()> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join("submission.json"), serde_json::to_vec_pretty(entries)?)?;
    let mut lines = Vec::new();
    for a in audit {
        serde_json::to_writer(&mut lines, a)?;
        lines.push(b'\n');
    }
    std::fs::write(dir.join("audit.jsonl"), lines)
}

async fn submission(State(st): State<Shared>) -> Json<SubmissionBody> {
    Json(SubmissionBody { entries: st.base().submission().to_vec() })
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Metrics {
    pub seq: u64,
    pub stages: StageSummary,
    pub link: LinkSummary,
    pub reports_received: usize,
    pub clusters: usize,
    pub submitted: usize,
}

async fn metrics(State(st): State<Shared>) -> Json<Metrics> {
    let base = st.base();
    Json(Metrics {
        seq: base.seq(),
        stages: st.mission.stage_summary(&base, base.submission()),
        link: st.mission.link_summary(),
        reports_received: base.reports_received(),
        clusters: base.clusters().len(),
        submitted: base.submission().len(),
    })
}

#[derive(Debug, Default, Deserialize)]
pub struct UpdatesQuery {
    #[serde(default)]
    pub since: u64,
    pub timeout_ms: Option<u64>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct UpdateBatch {
    pub seq: u64,
    pub updates: Vec<Update>,
}

/// Long poll: answers at once when there are updates after `since`,
/// otherwise waits for the next mutation or the timeout.
async fn updates(State(st): State<Shared>, Query(q): Query<UpdatesQuery>) -> Json<UpdateBatch> {
    let mut rx = st.seq.subscribe();
    let pending = |st: &AppState| {
        let base = st.base();
        UpdateBatch { seq: base.seq(), updates: base.updates_since(q.since).to_vec() }
    };
    let now = pending(&st);
    if !now.updates.is_empty() {
        return Json(now);
    }
    let wait = Duration::from_millis(q.timeout_ms.unwrap_or(DEFAULT_POLL_MS).min(MAX_POLL_MS));
    let since = q.since;
    let _ = tokio::time::timeout(wait, rx.wait_for(|&s| s > since)).await;
    Json(pending(&st))
}

async fn image(State(st): State<Shared>, Path(image_ref): Path<String>) -> Response {
    let name = image_ref.strip_suffix(".png").unwrap_or(&image_ref).to_string();
    let rendered = tokio::task::spawn_blocking(move || st.store().image(&name).and_then(|img| encode_png(&img))).await;
    match rendered {
        Ok(Ok(png)) => ([(header::CONTENT_TYPE, "image/png")], png).into_response(),
        Ok(Err(e)) => ApiError(e).into_response(),
        Err(e) => ApiError(Error::Io(e.to_string())).into_response(),
    }
}
