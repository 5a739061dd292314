use std::sync::Arc;

use axum::extract::rejection::{JsonRejection, QueryRejection};
use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};

use super::{
    CreateSession, NextQuery, Observation, ObservationSummary, SessionError, SessionState,
    SessionStatus, SessionStore, StoreError,
};
use crate::scoring::ScoreReport;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApiError {
    pub code: String,
    pub message: String,
}

pub struct Failure(StatusCode, ApiError);

impl Failure {
    fn new(status: StatusCode, code: &str, message: impl Into<String>) -> Self {
        Failure(
            status,
            ApiError {
                code: code.into(),
                message: message.into(),
            },
        )
    }
}

impl IntoResponse for Failure {
    fn into_response(self) -> Response {
        (self.0, Json(self.1)).into_response()
    }
}

impl From<StoreError> for Failure {
    fn from(e: StoreError) -> Self {
        let msg = e.to_string();
        match e {
            StoreError::NotFound(_) => Failure::new(StatusCode::NOT_FOUND, "not_found", msg),
            StoreError::Session(SessionError::Conflict(_)) => {
                Failure::new(StatusCode::CONFLICT, "conflict", msg)
            }
            StoreError::Session(SessionError::Invalid(inner)) if inner.is_validation() => {
                Failure::new(StatusCode::UNPROCESSABLE_ENTITY, "invalid", msg)
            }
            StoreError::Session(SessionError::Invalid(_)) | StoreError::Storage(_) => {
                Failure::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", msg)
            }
        }
    }
}

impl From<JsonRejection> for Failure {
    fn from(e: JsonRejection) -> Self {
        Failure::new(StatusCode::UNPROCESSABLE_ENTITY, "invalid", e.body_text())
    }
}

impl From<QueryRejection> for Failure {
    fn from(e: QueryRejection) -> Self {
        Failure::new(StatusCode::UNPROCESSABLE_ENTITY, "invalid", e.body_text())
    }
}

type Shared = Arc<SessionStore>;
type ApiResult<T> = Result<T, Failure>;

#[derive(Debug, Serialize)]
struct Created {
    id: String,
    status: SessionStatus,
    iteration: u64,
    model_error: f64,
}

#[derive(Debug, Default, Deserialize)]
struct NextQueryParams {
    #[serde(default)]
    redraw: bool,
}

#[derive(Debug, Default, Deserialize)]
struct ScoreParams {
    threshold: Option<f64>,
}

async fn healthz() -> Json<serde_json::Value> {
    Json(serde_json::json!({ "status": "ok" }))
}

async fn create(
    State(store): State<Shared>,
    body: Result<Json<CreateSession>, JsonRejection>,
) -> ApiResult<(StatusCode, Json<Created>)> {
    let Json(req) = body?;
    let s = store.create(&req)?;
    Ok((
        StatusCode::CREATED,
        Json(Created {
            id: s.id.clone(),
            status: s.status,
            iteration: s.iteration(),
            model_error: s.model_error(),
        }),
    ))
}

async fn next_query(
    State(store): State<Shared>,
    Path(id): Path<String>,
    params: Result<Query<NextQueryParams>, QueryRejection>,
) -> ApiResult<Json<NextQuery>> {
    let Query(params) = params?;
    let redraw = params.redraw;
    Ok(Json(store.update(&id, |s| s.next_query(redraw))?))
}

async fn observe(
    State(store): State<Shared>,
    Path(id): Path<String>,
    body: Result<Json<Observation>, JsonRejection>,
) -> ApiResult<Json<ObservationSummary>> {
    let Json(obs) = body?;
    Ok(Json(store.update(&id, |s| s.post_observation(&obs))?))
}

async fn state(
    State(store): State<Shared>,
    Path(id): Path<String>,
) -> ApiResult<Json<SessionState>> {
    let st = store.read(&id, |s| s.state())?.map_err(StoreError::from)?;
    Ok(Json(st))
}

async fn scores(
    State(store): State<Shared>,
    Path(id): Path<String>,
    params: Result<Query<ScoreParams>, QueryRejection>,
) -> ApiResult<Json<ScoreReport>> {
    let Query(ScoreParams { threshold }) = params?;
    let report = store
        .read(&id, |s| s.scores(threshold))?
        .map_err(StoreError::from)?;
    report.map(Json).ok_or_else(|| {
        Failure::new(
            StatusCode::UNPROCESSABLE_ENTITY,
            "invalid",
            "session has no reference",
        )
    })
}

/// The session HTTP API over `store`.
pub fn router(store: Arc<SessionStore>) -> Router {
    Router::new()
        .route("/healthz", get(healthz))
        .route("/sessions", post(create))
        .route("/sessions/{id}/next-query", get(next_query))
        .route("/sessions/{id}/observations", post(observe))
        .route("/sessions/{id}/state", get(state))
        .route("/sessions/{id}/scores", get(scores))
        .with_state(store)
}
