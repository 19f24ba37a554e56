use std::sync::Arc;
use std::time::Instant;

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::Router;
use chrono::{SecondsFormat, Utc};
use serde::de::DeserializeOwned;
use serde::Deserialize;
use serde_json::json;
use whatif_core::api::{
    first_non_finite, rows_page, Analysis, DatasetSummary, SessionRequest, SyntheticRequest, SyntheticSummary,
};
use whatif_core::goalseek::{GoalSpec, RunLimits};
use whatif_core::sensitivity::{PerturbationSpec, SweepSpec};
use whatif_core::synth::generate_synthetic;
use whatif_core::{parse_csv, Error};

use crate::error::{json_response, ApiError};
use crate::store::Session;
use crate::AppState;

type Shared = State<Arc<AppState>>;
type ApiResult = Result<Response, ApiError>;

const DEFAULT_PAGE: usize = 50;
const MAX_PAGE: usize = 1000;

pub fn api() -> Router<Arc<AppState>> {
    Router::new()
        .route("/api/health", get(health))
        .route("/api/datasets", post(upload_dataset))
        .route("/api/datasets/synthetic", post(synthetic_dataset))
        .route("/api/datasets/{id}", get(get_dataset))
        .route("/api/datasets/{id}/rows", get(dataset_rows))
        .route("/api/sessions", post(create_session))
        .route("/api/sessions/{id}", get(get_session))
        .route("/api/sessions/{id}/sensitivity", post(sensitivity))
        .route("/api/sessions/{id}/comparison", post(comparison))
        .route("/api/sessions/{id}/rows/{idx}/sensitivity", post(row_sensitivity))
        .route("/api/sessions/{id}/goal", post(goal))
}

fn parse_body<T: DeserializeOwned>(body: &[u8]) -> Result<T, ApiError> {
    serde_json::from_slice(body).map_err(|e| Error::malformed_json(e).into())
}

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> T + Send + 'static) -> Result<T, ApiError> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::internal(format!("worker failed: {e}")))
}

fn io_error(e: std::io::Error) -> ApiError {
    ApiError::internal(format!("snapshot write failed: {e}"))
}

fn session_of(state: &AppState, id: &str) -> Result<Arc<Session>, ApiError> {
    state
        .store
        .session(id)
        .ok_or_else(|| ApiError::not_found("session", id))
}

async fn health() -> Response {
    json_response(StatusCode::OK, &json!({"status": "ok"}))
}

async fn upload_dataset(State(state): Shared, body: Bytes) -> ApiResult {
    let raw = body.clone();
    let ds = blocking(move || parse_csv(&raw)).await??;
    let ds = state.store.insert_dataset(ds, &body).map_err(io_error)?;
    Ok(json_response(StatusCode::CREATED, &DatasetSummary::from(ds.as_ref())))
}

async fn synthetic_dataset(State(state): Shared, body: Bytes) -> ApiResult {
    let req: SyntheticRequest = parse_body(&body)?;
    let s = blocking(move || generate_synthetic(req.use_case, req.n_rows, req.seed)).await??;
    let ds = state.store.insert_dataset(s.dataset, &s.csv).map_err(io_error)?;
    let summary = SyntheticSummary {
        dataset: DatasetSummary::from(ds.as_ref()),
        ground_truth: s.truth,
    };
    Ok(json_response(StatusCode::CREATED, &summary))
}

async fn get_dataset(State(state): Shared, Path(id): Path<String>) -> ApiResult {
    let ds = state
        .store
        .dataset(&id)
        .ok_or_else(|| ApiError::not_found("dataset", &id))?;
    Ok(json_response(StatusCode::OK, &DatasetSummary::from(ds.as_ref())))
}

#[derive(Deserialize)]
struct Page {
    offset: Option<usize>,
    limit: Option<usize>,
}

async fn dataset_rows(State(state): Shared, Path(id): Path<String>, Query(page): Query<Page>) -> ApiResult {
    let ds = state
        .store
        .dataset(&id)
        .ok_or_else(|| ApiError::not_found("dataset", &id))?;
    let limit = page.limit.unwrap_or(DEFAULT_PAGE).min(MAX_PAGE);
    Ok(json_response(
        StatusCode::OK,
        &rows_page(&ds, page.offset.unwrap_or(0), limit),
    ))
}

async fn create_session(State(state): Shared, body: Bytes) -> ApiResult {
    let req: SessionRequest = parse_body(&body)?;
    let ds = state
        .store
        .dataset(&req.dataset_id)
        .ok_or_else(|| ApiError::not_found("dataset", &req.dataset_id))?;
    let id = req.session_id();
    if let Some(existing) = state.store.session(&id) {
        return Ok(json_response(StatusCode::OK, &existing.summary()));
    }
    let train_req = req.clone();
    let analysis = blocking(move || Analysis::train(&ds, &train_req)).await??;
    let session = Session {
        id,
        created_at: Utc::now().to_rfc3339_opts(SecondsFormat::Secs, true),
        request: req,
        analysis,
    };
    let stored = state.store.insert_session(session).map_err(io_error)?;
    Ok(json_response(StatusCode::CREATED, &stored.summary()))
}

async fn get_session(State(state): Shared, Path(id): Path<String>) -> ApiResult {
    let session = session_of(&state, &id)?;
    Ok(json_response(StatusCode::OK, &session.view()))
}

async fn sensitivity(State(state): Shared, Path(id): Path<String>, body: Bytes) -> ApiResult {
    let session = session_of(&state, &id)?;
    let spec: PerturbationSpec = parse_body(&body)?;
    let r = blocking(move || session.analysis.sensitivity(&spec)).await??;
    Ok(json_response(StatusCode::OK, &r))
}

async fn comparison(State(state): Shared, Path(id): Path<String>, body: Bytes) -> ApiResult {
    let session = session_of(&state, &id)?;
    let sweep: SweepSpec = parse_body(&body)?;
    let r = blocking(move || session.analysis.comparison(&sweep)).await??;
    Ok(json_response(StatusCode::OK, &r))
}

async fn row_sensitivity(State(state): Shared, Path((id, idx)): Path<(String, String)>, body: Bytes) -> ApiResult {
    let session = session_of(&state, &id)?;
    let index: usize = idx.parse().map_err(|_| ApiError::not_found("row", &idx))?;
    let spec: PerturbationSpec = parse_body(&body)?;
    let r = blocking(move || session.analysis.row(index, &spec)).await??;
    Ok(json_response(StatusCode::OK, &r))
}

async fn goal(State(state): Shared, Path(id): Path<String>, body: Bytes) -> ApiResult {
    let session = session_of(&state, &id)?;
    let spec: GoalSpec = parse_body(&body)?;
    let _slot = state.store.claim_goal(&id).ok_or_else(|| ApiError::busy(&id))?;
    let limits = RunLimits {
        deadline: Some(Instant::now() + state.config.goal_timeout),
        max_budget: Some(state.config.budget_cap),
    };
    let r = blocking(move || session.analysis.goal(&spec, &limits)).await??;
    if r.completed {
        return Ok(json_response(StatusCode::OK, &r));
    }
    if let Some(path) = first_non_finite(&r) {
        return Err(Error::NonFinite(path).into());
    }
    let partial = serde_json::to_value(&r).map_err(|e| ApiError::internal(e.to_string()))?;
    Ok(ApiError::timeout(partial).into_response())
}
