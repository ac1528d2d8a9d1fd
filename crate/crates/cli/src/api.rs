//! HTTP/JSON service over [`Session`].
//!
//! Each session keeps its current state behind an `Arc` snapshot. Readers
//! clone the snapshot and never wait on a running mine; writers hold the
//! session's write lock, work on a private copy off the async runtime and
//! publish it when done. A second writer arriving meanwhile gets 409.

use std::collections::HashMap;
use std::path::PathBuf;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, RwLock};

use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use sisd::search::SearchParams;
use sisd::session::{Candidate, MineKind, MineRequest, PatternDetail, SessionError, TimingRecord};
use sisd::spreadopt::{DirectionOptions, SpreadOptError};
use sisd::{BackgroundModel, DlParams, Session};

use crate::source::DataSource;

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    message: String,
}

impl ApiError {
    fn new(status: StatusCode, message: impl Into<String>) -> Self {
        Self { status, message: message.into() }
    }

    fn not_found(what: &str, id: &str) -> Self {
        Self::new(StatusCode::NOT_FOUND, format!("unknown {what} {id}"))
    }
}

impl From<SessionError> for ApiError {
    fn from(e: SessionError) -> Self {
        let status = match &e {
            SessionError::StaleId(_) | SessionError::SpreadWithoutLocation => StatusCode::CONFLICT,
            SessionError::SpreadOpt(SpreadOptError::NoLocation) => StatusCode::CONFLICT,
            SessionError::Data(_) | SessionError::BadParams(_) | SessionError::Json(_) => StatusCode::BAD_REQUEST,
            SessionError::SpreadOpt(_) => StatusCode::UNPROCESSABLE_ENTITY,
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        };
        Self::new(status, e.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(serde_json::json!({ "error": self.message }))).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

struct Entry {
    current: RwLock<Arc<Session>>,
    writer: tokio::sync::Mutex<()>,
}

impl Entry {
    fn snapshot(&self) -> Arc<Session> {
        self.current.read().expect("snapshot lock").clone()
    }
}

pub struct AppState {
    sessions: RwLock<HashMap<String, Arc<Entry>>>,
    data_dir: Option<PathBuf>,
    next_id: AtomicU64,
}

impl AppState {
    pub fn new(data_dir: Option<PathBuf>) -> Arc<Self> {
        Arc::new(Self { sessions: RwLock::default(), data_dir, next_id: AtomicU64::new(1) })
    }

    fn entry(&self, id: &str) -> ApiResult<Arc<Entry>> {
        self.sessions
            .read()
            .expect("session table lock")
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::not_found("session", id))
    }
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/sessions", post(create_session))
        .route("/sessions/{id}", get(get_session))
        .route("/sessions/{id}/mine", post(mine))
        .route("/sessions/{id}/assimilate", post(assimilate))
        .route("/sessions/{id}/patterns/{pid}", get(pattern_detail))
        .route("/sessions/{id}/reset", post(reset))
        .route("/sessions/{id}/timings", get(timings))
        .with_state(state)
}

#[derive(Debug, Deserialize)]
pub struct CreateSession {
    #[serde(flatten)]
    pub source: DataSource,
    pub gamma: Option<f64>,
    pub eta: Option<f64>,
}

#[derive(Debug, Serialize)]
pub struct SessionSummary {
    pub id: String,
    pub n: usize,
    pub targets: Vec<String>,
    pub iteration: usize,
    pub assimilated: Vec<String>,
    pub spread_available: bool,
    pub dl: DlParams,
    pub model: BackgroundModel,
}

fn summary(id: &str, s: &Session) -> SessionSummary {
    SessionSummary {
        id: id.to_string(),
        n: s.dataset().n(),
        targets: s.dataset().target_names(),
        iteration: s.iteration(),
        assimilated: s.assimilated().to_vec(),
        spread_available: s.spread_available(),
        dl: *s.dl_params(),
        model: s.model().clone(),
    }
}

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> ApiResult<T> + Send + 'static) -> ApiResult<T> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))?
}

async fn create_session(
    State(state): State<Arc<AppState>>,
    Json(body): Json<CreateSession>,
) -> ApiResult<(StatusCode, Json<SessionSummary>)> {
    let defaults = DlParams::default();
    let dl = DlParams { gamma: body.gamma.unwrap_or(defaults.gamma), eta: body.eta.unwrap_or(defaults.eta) };
    dl.validate().map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, e.to_string()))?;
    let dir = state.data_dir.clone();
    let session = blocking(move || {
        let ds = body.source.load(dir.as_deref()).map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, format!("{e:#}")))?;
        Ok(Session::new(ds, dl)?)
    })
    .await?;
    let id = format!("s{}", state.next_id.fetch_add(1, Ordering::Relaxed));
    let out = summary(&id, &session);
    let entry = Entry { current: RwLock::new(Arc::new(session)), writer: tokio::sync::Mutex::new(()) };
    state.sessions.write().expect("session table lock").insert(id, Arc::new(entry));
    Ok((StatusCode::CREATED, Json(out)))
}

async fn get_session(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> ApiResult<Json<SessionSummary>> {
    let s = state.entry(&id)?.snapshot();
    Ok(Json(summary(&id, &s)))
}

/// Runs `f` on a private copy of the session and publishes the result.
async fn write<T: Send + 'static>(
    entry: Arc<Entry>,
    f: impl FnOnce(&mut Session) -> ApiResult<T> + Send + 'static,
) -> ApiResult<T> {
    let Ok(guard) = entry.writer.try_lock() else {
        return Err(ApiError::new(StatusCode::CONFLICT, "another request is modifying this session"));
    };
    let mut work = (*entry.snapshot()).clone();
    let (work, out) = blocking(move || {
        let out = f(&mut work)?;
        Ok((work, out))
    })
    .await?;
    *entry.current.write().expect("snapshot lock") = Arc::new(work);
    drop(guard);
    Ok(out)
}

#[derive(Debug, Default, Deserialize)]
#[serde(default)]
pub struct MineBody {
    pub kind: Option<MineKind>,
    pub params: SearchParams,
    pub direction: DirectionOptions,
    pub sparse: bool,
}

#[derive(Debug, Serialize)]
pub struct MineResponse {
    pub iteration: usize,
    pub kind: MineKind,
    pub candidates: Vec<Candidate>,
}

async fn mine(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    body: Option<Json<MineBody>>,
) -> ApiResult<Json<MineResponse>> {
    let body = body.map(|Json(b)| b).unwrap_or_default();
    let request = MineRequest {
        kind: body.kind.unwrap_or(MineKind::Location),
        search: body.params,
        direction: body.direction,
        sparse: body.sparse,
    };
    let out = write(state.entry(&id)?, move |s| {
        let candidates = s.mine_next(&request)?.to_vec();
        Ok(MineResponse { iteration: s.iteration(), kind: request.kind, candidates })
    })
    .await?;
    Ok(Json(out))
}

#[derive(Debug, Deserialize)]
pub struct AssimilateBody {
    pub pattern_id: String,
}

#[derive(Debug, Serialize)]
pub struct AssimilateResponse {
    pub iteration: usize,
    pub spread_available: bool,
    pub timing: TimingRecord,
}

async fn assimilate(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    Json(body): Json<AssimilateBody>,
) -> ApiResult<Json<AssimilateResponse>> {
    let out = write(state.entry(&id)?, move |s| {
        let timing = s.assimilate_choice(&body.pattern_id)?.clone();
        Ok(AssimilateResponse { iteration: s.iteration(), spread_available: s.spread_available(), timing })
    })
    .await?;
    Ok(Json(out))
}

async fn pattern_detail(
    State(state): State<Arc<AppState>>,
    Path((id, pid)): Path<(String, String)>,
) -> ApiResult<Json<PatternDetail>> {
    let s = state.entry(&id)?.snapshot();
    match s.pattern_detail(&pid) {
        Ok(d) => Ok(Json(d)),
        Err(SessionError::StaleId(_)) => Err(ApiError::not_found("pattern", &pid)),
        Err(e) => Err(e.into()),
    }
}

async fn reset(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> ApiResult<Json<SessionSummary>> {
    let sid = id.clone();
    let out = write(state.entry(&id)?, move |s| {
        s.reset();
        Ok(summary(&sid, s))
    })
    .await?;
    Ok(Json(out))
}

async fn timings(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> ApiResult<Json<Vec<TimingRecord>>> {
    let s = state.entry(&id)?.snapshot();
    Ok(Json(s.timings().to_vec()))
}
