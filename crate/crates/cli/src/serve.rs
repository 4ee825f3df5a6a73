//! HTTP oracle for one interactive active-learning session.
//!
//! Reads run concurrently; every mutation takes the session's write lock, so
//! label batches and control actions are applied one at a time.

use std::path::PathBuf;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::State;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use magnitude::active::{IterationRecord, SubmitError};
use magnitude::harness::project_2d;
use magnitude::{ALConfig, ALSession};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use tokio::sync::RwLock;

/// Version of every request and response body.
pub const API_VERSION: u32 = 1;

struct Slot {
    session: ALSession,
    paused: bool,
}

pub struct AppState {
    slot: Arc<RwLock<Slot>>,
    projection: Vec<[f64; 2]>,
    checkpoint: Option<PathBuf>,
}

impl AppState {
    /// Wraps `session`, computing its first query batch and the display projection.
    pub fn new(mut session: ALSession, checkpoint: Option<PathBuf>) -> Arc<AppState> {
        session.next_queries();
        let projection = project_2d(session.pool());
        Arc::new(AppState { slot: Arc::new(RwLock::new(Slot { session, paused: false })), projection, checkpoint })
    }

    /// A copy of the current session.
    pub async fn session(&self) -> ALSession {
        self.slot.read().await.session.clone()
    }

    /// Writes the session to the configured checkpoint path, if any.
    pub async fn save_checkpoint(&self) -> Result<Option<PathBuf>, ApiError> {
        let Some(path) = &self.checkpoint else { return Ok(None) };
        let text = self.slot.read().await.session.to_checkpoint().map_err(ApiError::internal)?;
        tokio::fs::write(path, text).await.map_err(ApiError::internal)?;
        Ok(Some(path.clone()))
    }
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/v1/session", get(get_session))
        .route("/v1/queries", get(get_queries))
        .route("/v1/labels", post(post_labels))
        .route("/v1/points", get(get_points))
        .route("/v1/control", post(post_control))
        .fallback(|| async { ApiError::new(StatusCode::NOT_FOUND, "not_found", "no such endpoint") })
        .with_state(state)
}

#[derive(Debug, Serialize)]
pub struct ErrorDetail {
    pub kind: &'static str,
    pub message: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub path: Option<String>,
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    detail: ErrorDetail,
}

impl ApiError {
    fn new(status: StatusCode, kind: &'static str, message: impl Into<String>) -> ApiError {
        ApiError { status, detail: ErrorDetail { kind, message: message.into(), path: None } }
    }

    fn internal(e: impl std::fmt::Display) -> ApiError {
        ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string())
    }
}

impl From<SubmitError> for ApiError {
    fn from(e: SubmitError) -> ApiError {
        let (status, kind) = match &e {
            SubmitError::NothingPending => (StatusCode::CONFLICT, "nothing_pending"),
            SubmitError::NotQueried(_) => (StatusCode::CONFLICT, "not_queried"),
            SubmitError::Duplicate(_) => (StatusCode::BAD_REQUEST, "duplicate"),
            SubmitError::UnknownLabel { .. } => (StatusCode::BAD_REQUEST, "unknown_label"),
            SubmitError::Incomplete(_) => (StatusCode::UNPROCESSABLE_ENTITY, "incomplete"),
            SubmitError::Model(_) => (StatusCode::INTERNAL_SERVER_ERROR, "model"),
        };
        ApiError::new(status, kind, e.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        #[derive(Serialize)]
        struct Body {
            version: u32,
            error: ErrorDetail,
        }
        (self.status, Json(Body { version: API_VERSION, error: self.detail })).into_response()
    }
}

/// Parses a JSON body, reporting the failing field path on error.
fn parse_body<T: DeserializeOwned>(bytes: &[u8]) -> Result<T, ApiError> {
    let mut de = serde_json::Deserializer::from_slice(bytes);
    serde_path_to_error::deserialize(&mut de).map_err(|e| {
        let path = e.path().to_string();
        let mut err = ApiError::new(StatusCode::BAD_REQUEST, "malformed", e.inner().to_string());
        err.detail.path = Some(if path == "." { String::new() } else { path });
        err
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectionInfo {
    pub method: String,
    pub components: usize,
    pub computed: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionView {
    pub version: u32,
    pub iteration: usize,
    pub labeled: usize,
    pub unlabeled: usize,
    pub pool_size: usize,
    pub dim: usize,
    pub spent: usize,
    pub remaining_budget: usize,
    pub done: bool,
    pub paused: bool,
    pub label_names: Vec<String>,
    pub pending: Vec<usize>,
    pub config: ALConfig,
    pub history: Vec<IterationRecord>,
    pub projection: ProjectionInfo,
}

fn session_view(slot: &Slot) -> SessionView {
    let s = &slot.session;
    SessionView {
        version: API_VERSION,
        iteration: s.iteration(),
        labeled: s.labeled_count(),
        unlabeled: s.pool().len() - s.labeled_count(),
        pool_size: s.pool().len(),
        dim: s.pool().dim(),
        spent: s.spent(),
        remaining_budget: s.remaining_budget(),
        done: s.is_done(),
        paused: slot.paused,
        label_names: s.label_names().to_vec(),
        pending: s.pending().to_vec(),
        config: s.config().clone(),
        history: s.history().to_vec(),
        projection: ProjectionInfo {
            method: "pca".into(),
            components: 2,
            computed: "once at session start, from the pool features".into(),
        },
    }
}

async fn get_session(State(state): State<Arc<AppState>>) -> Json<SessionView> {
    Json(session_view(&*state.slot.read().await))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryPoint {
    pub index: usize,
    pub features: Vec<f64>,
    pub projection: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueriesView {
    pub version: u32,
    pub iteration: usize,
    pub done: bool,
    pub paused: bool,
    pub queries: Vec<QueryPoint>,
}

async fn get_queries(State(state): State<Arc<AppState>>) -> Json<QueriesView> {
    let slot = state.slot.read().await;
    let s = &slot.session;
    let queries = s
        .pending()
        .iter()
        .map(|&i| QueryPoint { index: i, features: s.pool().point(i).to_vec(), projection: state.projection[i] })
        .collect();
    Json(QueriesView { version: API_VERSION, iteration: s.iteration(), done: s.is_done(), paused: slot.paused, queries })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LabelEntry {
    pub index: usize,
    pub label: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LabelsRequest {
    #[serde(default)]
    pub version: Option<u32>,
    pub labels: Vec<LabelEntry>,
}

fn check_version(v: Option<u32>) -> Result<(), ApiError> {
    match v {
        Some(v) if v != API_VERSION => Err(ApiError::new(
            StatusCode::BAD_REQUEST,
            "version",
            format!("body version {v} is not supported (expected {API_VERSION})"),
        )),
        _ => Ok(()),
    }
}

async fn post_labels(State(state): State<Arc<AppState>>, body: Bytes) -> Result<Json<SessionView>, ApiError> {
    let req: LabelsRequest = parse_body(&body)?;
    check_version(req.version)?;
    let mut slot = state.slot.clone().write_owned().await;
    if slot.paused {
        return Err(ApiError::new(StatusCode::CONFLICT, "paused", "session is paused"));
    }
    let pairs: Vec<(usize, usize)> = req.labels.iter().map(|e| (e.index, e.label)).collect();
    // Retraining is CPU-bound; the write guard travels with it.
    tokio::task::spawn_blocking(move || {
        slot.session.apply_labels(&pairs)?;
        slot.session.next_queries();
        Ok(Json(session_view(&slot)))
    })
    .await
    .map_err(ApiError::internal)?
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PointStatus {
    Labeled,
    Queried,
    Unlabeled,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointView {
    pub index: usize,
    pub features: Vec<f64>,
    pub projection: [f64; 2],
    pub label: Option<usize>,
    pub predicted: Option<usize>,
    pub status: PointStatus,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointsView {
    pub version: u32,
    pub iteration: usize,
    pub label_names: Vec<String>,
    pub points: Vec<PointView>,
}

async fn get_points(State(state): State<Arc<AppState>>) -> Json<PointsView> {
    let slot = state.slot.read().await;
    let s = &slot.session;
    let predicted = s.predictions();
    let points = (0..s.pool().len())
        .map(|i| {
            let label = s.revealed()[i];
            let status = if label.is_some() {
                PointStatus::Labeled
            } else if s.pending().contains(&i) {
                PointStatus::Queried
            } else {
                PointStatus::Unlabeled
            };
            PointView {
                index: i,
                features: s.pool().point(i).to_vec(),
                projection: state.projection[i],
                label,
                predicted: predicted.as_ref().map(|p| p[i]),
                status,
            }
        })
        .collect();
    Json(PointsView { version: API_VERSION, iteration: s.iteration(), label_names: s.label_names().to_vec(), points })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Action {
    Pause,
    Resume,
    Checkpoint,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControlRequest {
    #[serde(default)]
    pub version: Option<u32>,
    pub action: Action,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlView {
    pub version: u32,
    pub action: Action,
    pub paused: bool,
    pub checkpoint: Option<PathBuf>,
}

async fn post_control(State(state): State<Arc<AppState>>, body: Bytes) -> Result<Json<ControlView>, ApiError> {
    let req: ControlRequest = parse_body(&body)?;
    check_version(req.version)?;
    let mut checkpoint = None;
    let paused = match req.action {
        Action::Pause | Action::Resume => {
            let mut slot = state.slot.write().await;
            slot.paused = req.action == Action::Pause;
            slot.paused
        }
        Action::Checkpoint => {
            checkpoint = state.save_checkpoint().await?;
            if checkpoint.is_none() {
                return Err(ApiError::new(StatusCode::CONFLICT, "no_checkpoint_path", "server was started without --checkpoint"));
            }
            state.slot.read().await.paused
        }
    };
    Ok(Json(ControlView { version: API_VERSION, action: req.action, paused, checkpoint }))
}
