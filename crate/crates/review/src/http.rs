//! Routes. Reads run concurrently; verdicts are queued on a writer mutex and the
//! session is only write-locked for the final append.

use std::sync::{Arc, RwLock};

use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use tokio::net::TcpListener;

use opeinf_core::Analysis;

use crate::session::{ReviewError, ReviewSession, Verdict, VersionSummary};

#[derive(Clone)]
pub struct AppState {
    session: Arc<RwLock<ReviewSession>>,
    writer: Arc<tokio::sync::Mutex<()>>,
}

impl AppState {
    pub fn new(session: ReviewSession) -> Self {
        Self {
            session: Arc::new(RwLock::new(session)),
            writer: Arc::new(tokio::sync::Mutex::new(())),
        }
    }

    pub fn session(&self) -> Arc<RwLock<ReviewSession>> {
        self.session.clone()
    }
}

#[derive(Debug, Serialize)]
struct ErrorBody {
    error: String,
}

pub struct ApiError(ReviewError);

impl From<ReviewError> for ApiError {
    fn from(e: ReviewError) -> Self {
        Self(e)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = match &self.0 {
            ReviewError::UnknownVersion(_) | ReviewError::UnknownTransition(_) => {
                StatusCode::NOT_FOUND
            }
            ReviewError::NotFlagged { .. } => StatusCode::CONFLICT,
            ReviewError::InvalidVerdict(_) | ReviewError::Ope(_) => {
                StatusCode::UNPROCESSABLE_ENTITY
            }
        };
        (
            status,
            Json(ErrorBody {
                error: self.0.to_string(),
            }),
        )
            .into_response()
    }
}

type ApiResult<T> = Result<Json<T>, ApiError>;

#[derive(Debug, Deserialize)]
struct VersionQuery {
    version: Option<usize>,
}

#[derive(Debug, Serialize)]
struct Versions {
    latest: usize,
    versions: Vec<VersionSummary>,
}

fn read<T>(state: &AppState, f: impl FnOnce(&ReviewSession) -> T) -> T {
    let s = state.session.read().unwrap_or_else(|e| e.into_inner());
    f(&s)
}

async fn versions(State(state): State<AppState>) -> Json<Versions> {
    Json(read(&state, |s| Versions {
        latest: s.latest(),
        versions: s.versions().iter().map(|v| v.summary()).collect(),
    }))
}

async fn flags(
    State(state): State<AppState>,
    Query(q): Query<VersionQuery>,
) -> ApiResult<crate::session::FlagList> {
    Ok(Json(read(&state, |s| s.flags(q.version))?))
}

async fn status(
    State(state): State<AppState>,
    Query(q): Query<VersionQuery>,
) -> ApiResult<crate::session::Status> {
    Ok(Json(read(&state, |s| s.status(q.version))?))
}

async fn transition(
    State(state): State<AppState>,
    Path(id): Path<String>,
    Query(q): Query<VersionQuery>,
) -> ApiResult<crate::session::TransitionView> {
    Ok(Json(read(&state, |s| s.transition(&id, q.version))?))
}

async fn dataset(
    State(state): State<AppState>,
    Query(q): Query<VersionQuery>,
) -> Result<Response, ApiError> {
    let body = read(&state, |s| {
        s.version(q.version).map(|v| v.dataset.to_jsonl())
    })?;
    Ok(([(header::CONTENT_TYPE, "application/x-ndjson")], body).into_response())
}

async fn report(
    State(state): State<AppState>,
    Query(q): Query<VersionQuery>,
) -> ApiResult<Analysis> {
    Ok(Json(read(&state, |s| {
        s.version(q.version).map(|v| v.analysis.clone())
    })?))
}

async fn verdict(
    State(state): State<AppState>,
    Json(v): Json<Verdict>,
) -> ApiResult<crate::session::VerdictResponse> {
    let _turn = state.writer.lock().await;
    let session = state.session.clone();
    let result = tokio::task::spawn_blocking(move || {
        let prepared = {
            let s = session.read().unwrap_or_else(|e| e.into_inner());
            s.prepare(&v)?
        };
        let mut s = session.write().unwrap_or_else(|e| e.into_inner());
        let out = s.commit(prepared);
        log::info!(
            "verdict {} on `{}` (version {}): new version {:?}",
            out.seq,
            v.unit_id,
            out.version,
            out.new_version
        );
        Ok::<_, ReviewError>(out)
    })
    .await
    .expect("verdict task panicked")?;
    Ok(Json(result))
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/versions", get(versions))
        .route("/flags", get(flags))
        .route("/status", get(status))
        .route("/transition/{id}", get(transition))
        .route("/dataset", get(dataset))
        .route("/report", get(report))
        .route("/verdict", post(verdict))
        .with_state(state)
}

/// Serves `state` on an already bound listener until the task is dropped.
pub async fn serve_on(listener: TcpListener, state: AppState) -> std::io::Result<()> {
    axum::serve(listener, router(state)).await
}

/// Serves `session` on `listener` until interrupted.
pub async fn serve(listener: TcpListener, session: ReviewSession) -> std::io::Result<()> {
    log::info!(
        "review service listening on http://{}",
        listener.local_addr()?
    );
    axum::serve(listener, router(AppState::new(session)))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
