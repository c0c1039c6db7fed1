//! HTTP JSON API for the annotation UI.
//!
//! | Route | Success | Errors |
//! |---|---|---|
//! | `GET /healthz` | 200 `ok` | |
//! | `GET /tasks/next?annotator=A` | 200 task view | 400 unknown annotator, 404 none left |
//! | `POST /tasks/{id}/pass1` | 200 ack with every payload reference | 404 unknown task, 409 wrong state, 422 bad body |
//! | `POST /tasks/{id}/pass2` | 200 ack | same as pass 1 |
//! | `GET /export` | 200 JSON Lines | |
//!
//! Submission bodies are `{"annotator": "...", "judgment": "empathetic" | "neutral"}`.

use std::net::SocketAddr;
use std::sync::Arc;

use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use mmdl_core::Label;
use serde::{Deserialize, Serialize};

use crate::service::AnnotationService;
use crate::session::SessionError;

#[derive(Debug, Deserialize)]
pub struct NextQuery {
    pub annotator: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Submission {
    pub annotator: String,
    pub judgment: Label,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: String,
}

struct ApiError(SessionError);

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = match &self.0 {
            SessionError::UnknownAnnotator(_) => StatusCode::BAD_REQUEST,
            SessionError::NoTasksRemaining(_) | SessionError::UnknownTask(_) => StatusCode::NOT_FOUND,
            SessionError::WrongState { .. } => StatusCode::CONFLICT,
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        };
        if status.is_server_error() {
            log::error!("{}", self.0);
        }
        (status, Json(ErrorBody { error: self.0.to_string() })).into_response()
    }
}

pub fn router(service: Arc<AnnotationService>) -> Router {
    Router::new()
        .route("/healthz", get(|| async { "ok" }))
        .route("/tasks/next", get(next_task))
        .route("/tasks/{id}/pass1", post(pass1))
        .route("/tasks/{id}/pass2", post(pass2))
        .route("/export", get(export))
        .with_state(service)
}

async fn next_task(
    State(svc): State<Arc<AnnotationService>>,
    Query(q): Query<NextQuery>,
) -> Result<Response, ApiError> {
    Ok(Json(svc.issue_task(&q.annotator).map_err(ApiError)?).into_response())
}

async fn pass1(
    State(svc): State<Arc<AnnotationService>>,
    Path(id): Path<String>,
    Json(body): Json<Submission>,
) -> Result<Response, ApiError> {
    let ack = svc.submit_pass1(&id, &body.annotator, body.judgment).map_err(ApiError)?;
    Ok(Json(ack).into_response())
}

async fn pass2(
    State(svc): State<Arc<AnnotationService>>,
    Path(id): Path<String>,
    Json(body): Json<Submission>,
) -> Result<Response, ApiError> {
    let ack = svc.submit_pass2(&id, &body.annotator, body.judgment).map_err(ApiError)?;
    Ok(Json(ack).into_response())
}

async fn export(State(svc): State<Arc<AnnotationService>>) -> Response {
    ([(header::CONTENT_TYPE, "application/x-ndjson")], svc.export_jsonl()).into_response()
}

/// Serves until the process is stopped.
pub async fn serve(service: Arc<AnnotationService>, addr: SocketAddr) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    log::info!("annotation service listening on {}", listener.local_addr()?);
    axum::serve(listener, router(service)).await
}
