//! JSON-over-HTTP front end for [`StudyStore`].

use std::collections::HashMap;
use std::net::SocketAddr;
use std::sync::Arc;

use axum::extract::{Path, Query, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::Deserialize;
use serde_json::json;
use tower_http::cors::CorsLayer;

use crate::auth::{Authenticator, Credentials};
use crate::error::ServiceError;
use crate::store::{CreateStudy, StudyStore, Submission};

#[derive(Clone)]
pub struct AppState {
    pub store: Arc<StudyStore>,
    pub auth: Arc<dyn Authenticator>,
}

impl IntoResponse for ServiceError {
    fn into_response(self) -> Response {
        let status = match &self {
            ServiceError::NotFound(_) => StatusCode::NOT_FOUND,
            ServiceError::Unauthorized(_) => StatusCode::UNAUTHORIZED,
            ServiceError::InvalidResponse(_) => StatusCode::UNPROCESSABLE_ENTITY,
            ServiceError::BadRequest(_) => StatusCode::BAD_REQUEST,
            ServiceError::Io(_) => StatusCode::INTERNAL_SERVER_ERROR,
            ServiceError::Core(e) => match e.code() {
                "plan_infeasible" | "design_infeasible" | "invalid_response" => StatusCode::UNPROCESSABLE_ENTITY,
                "persistence" => StatusCode::INTERNAL_SERVER_ERROR,
                _ => StatusCode::BAD_REQUEST,
            },
            _ => StatusCode::CONFLICT,
        };
        (status, Json(json!({ "error": self.code(), "message": self.to_string() }))).into_response()
    }
}

type ApiResult<T> = std::result::Result<Json<T>, ServiceError>;

fn bearer(headers: &HeaderMap) -> Option<&str> {
    headers
        .get(header::AUTHORIZATION)?
        .to_str()
        .ok()?
        .strip_prefix("Bearer ")
        .map(str::trim)
}

fn token<'a>(headers: &'a HeaderMap, query: &'a HashMap<String, String>) -> Option<&'a str> {
    bearer(headers).or(query.get("token").map(String::as_str))
}

async fn blocking<T: Send + 'static>(
    f: impl FnOnce() -> Result<T, ServiceError> + Send + 'static,
) -> Result<T, ServiceError> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ServiceError::Io(std::io::Error::other(e)))?
}

async fn create_study(
    State(app): State<AppState>,
    headers: HeaderMap,
    Query(query): Query<HashMap<String, String>>,
    Json(req): Json<CreateStudy>,
) -> Result<(StatusCode, Json<crate::store::StudySummary>), ServiceError> {
    app.auth.admin(&Credentials { token: token(&headers, &query), labeler_id: None })?;
    let summary = blocking(move || app.store.create_study(&req)).await?;
    Ok((StatusCode::CREATED, Json(summary)))
}

async fn list_studies(State(app): State<AppState>) -> ApiResult<Vec<crate::store::StudySummary>> {
    Ok(Json(app.store.list()))
}

async fn get_study(State(app): State<AppState>, Path(id): Path<String>) -> ApiResult<crate::store::StudySummary> {
    Ok(Json(app.store.summary(&id)?))
}

async fn open_study(
    State(app): State<AppState>,
    Path(id): Path<String>,
    headers: HeaderMap,
    Query(query): Query<HashMap<String, String>>,
) -> ApiResult<crate::store::StudySummary> {
    app.auth.admin(&Credentials { token: token(&headers, &query), labeler_id: None })?;
    Ok(Json(blocking(move || app.store.open_study(&id)).await?))
}

#[derive(Debug, Deserialize)]
struct SessionRequest {
    #[serde(default)]
    labeler_id: Option<String>,
}

async fn create_session(
    State(app): State<AppState>,
    Path(id): Path<String>,
    headers: HeaderMap,
    Query(query): Query<HashMap<String, String>>,
    Json(req): Json<SessionRequest>,
) -> ApiResult<crate::store::Session> {
    let labeler = app
        .auth
        .labeler(&Credentials { token: token(&headers, &query), labeler_id: req.labeler_id.as_deref() })?;
    Ok(Json(blocking(move || app.store.assign(&id, &labeler)).await?))
}

/// Session calls must come from the session's labeler. Callers without any
/// credentials pass only under an authenticator that accepts them.
fn check_owner(app: &AppState, sid: &str, headers: &HeaderMap, query: &HashMap<String, String>) -> Result<(), ServiceError> {
    let session = app.store.session(sid)?;
    let creds = Credentials { token: token(headers, query), labeler_id: query.get("labeler_id").map(String::as_str) };
    if creds.token.is_none() && creds.labeler_id.is_none() && app.auth.admin(&creds).is_ok() {
        return Ok(());
    }
    let who = app.auth.labeler(&creds)?;
    if who != session.labeler_id {
        return Err(ServiceError::Unauthorized(format!("session `{sid}` belongs to another labeler")));
    }
    Ok(())
}

async fn next_set(
    State(app): State<AppState>,
    Path(sid): Path<String>,
    headers: HeaderMap,
    Query(query): Query<HashMap<String, String>>,
) -> ApiResult<crate::store::NextSet> {
    check_owner(&app, &sid, &headers, &query)?;
    Ok(Json(app.store.next_set(&sid)?))
}

async fn submit(
    State(app): State<AppState>,
    Path(sid): Path<String>,
    headers: HeaderMap,
    Query(query): Query<HashMap<String, String>>,
    Json(body): Json<Submission>,
) -> ApiResult<crate::store::Ack> {
    check_owner(&app, &sid, &headers, &query)?;
    Ok(Json(blocking(move || app.store.submit(&sid, body)).await?))
}

#[derive(Debug, Default, Deserialize)]
struct AggregateRequest {
    #[serde(default)]
    minimum_questionnaires: Option<usize>,
}

async fn aggregate(
    State(app): State<AppState>,
    Path(id): Path<String>,
    headers: HeaderMap,
    Query(query): Query<HashMap<String, String>>,
    body: Option<Json<AggregateRequest>>,
) -> ApiResult<crate::store::Manifest> {
    app.auth.admin(&Credentials { token: token(&headers, &query), labeler_id: None })?;
    let minimum = body.and_then(|Json(b)| b.minimum_questionnaires);
    Ok(Json(blocking(move || app.store.aggregate(&id, minimum)).await?))
}

async fn scores(State(app): State<AppState>, Path(id): Path<String>) -> ApiResult<choicescore_core::ScoreTable> {
    Ok(Json(app.store.scores(&id)?))
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/studies", post(create_study).get(list_studies))
        .route("/studies/{id}", get(get_study))
        .route("/studies/{id}/open", post(open_study))
        .route("/studies/{id}/sessions", post(create_session))
        .route("/studies/{id}/aggregate", post(aggregate))
        .route("/studies/{id}/scores", get(scores))
        .route("/sessions/{sid}/next", get(next_set))
        .route("/sessions/{sid}/responses", post(submit))
        .layer(CorsLayer::permissive())
        .with_state(state)
}

/// Binds `addr` and serves until `shutdown` resolves. Returns the bound
/// address through `on_bound` (useful with port 0).
pub async fn serve(
    state: AppState,
    addr: SocketAddr,
    on_bound: impl FnOnce(SocketAddr),
    shutdown: impl std::future::Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    on_bound(listener.local_addr()?);
    axum::serve(listener, router(state)).with_graceful_shutdown(shutdown).await
}
