//! HTTP API over [`Service`]. All bodies are JSON; failures use the envelope
//! `{"error": {"code", "message"}}`.

use crate::service::{
    AskRequest, ClassifyRequest, ClusterRequest, IngestRequest, SearchRequest, Service, ServiceError, TsneRequest,
};
use axum::extract::rejection::JsonRejection;
use axum::extract::State;
use axum::http::{header, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::Serialize;
use serde_json::json;
use std::net::SocketAddr;
use std::sync::Arc;

/// Seconds clients are asked to wait while the index is rebuilt.
pub const RETRY_AFTER_SECS: u64 = 5;

pub struct ApiError(ServiceError);

impl From<ServiceError> for ApiError {
    fn from(e: ServiceError) -> Self {
        ApiError(e)
    }
}

impl From<JsonRejection> for ApiError {
    fn from(e: JsonRejection) -> Self {
        ApiError(ServiceError::BadRequest(e.body_text()))
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = match &self.0 {
            ServiceError::BadRequest(_) => StatusCode::BAD_REQUEST,
            ServiceError::ModelMismatch(_)
            | ServiceError::ProviderUnavailable(_)
            | ServiceError::LlmUnavailable(_)
            | ServiceError::Reindexing => StatusCode::SERVICE_UNAVAILABLE,
            ServiceError::Internal(_) => StatusCode::INTERNAL_SERVER_ERROR,
        };
        if status.is_server_error() {
            log::warn!("{}: {}", self.0.code(), self.0);
        }
        let body = Json(json!({"error": {"code": self.0.code(), "message": self.0.to_string()}}));
        let mut resp = (status, body).into_response();
        if matches!(self.0, ServiceError::Reindexing) {
            resp.headers_mut()
                .insert(header::RETRY_AFTER, HeaderValue::from(RETRY_AFTER_SECS));
        }
        resp
    }
}

type ApiResult<T> = Result<Json<T>, ApiError>;

/// Runs `f` on the blocking pool; the core library is synchronous.
async fn blocking<T, F>(svc: Arc<Service>, f: F) -> ApiResult<T>
where
    T: Serialize + Send + 'static,
    F: FnOnce(&Service) -> Result<T, ServiceError> + Send + 'static,
{
    tokio::task::spawn_blocking(move || f(&svc))
        .await
        .map_err(|e| ServiceError::Internal(format!("worker failed: {e}")))?
        .map(Json)
        .map_err(ApiError)
}

async fn healthz(State(svc): State<Arc<Service>>) -> impl IntoResponse {
    Json(svc.health())
}

async fn search(
    State(svc): State<Arc<Service>>,
    body: Result<Json<SearchRequest>, JsonRejection>,
) -> ApiResult<crate::service::SearchResponse> {
    let Json(req) = body?;
    blocking(svc, move |s| s.search(&req)).await
}

async fn classify(
    State(svc): State<Arc<Service>>,
    body: Result<Json<ClassifyRequest>, JsonRejection>,
) -> ApiResult<crate::service::ClassifyResponse> {
    let Json(req) = body?;
    blocking(svc, move |s| s.classify(&req)).await
}

async fn cluster(
    State(svc): State<Arc<Service>>,
    body: Result<Json<ClusterRequest>, JsonRejection>,
) -> ApiResult<crate::service::ClusterResponse> {
    let Json(req) = body?;
    blocking(svc, move |s| s.cluster(&req)).await
}

async fn tsne(
    State(svc): State<Arc<Service>>,
    body: Result<Json<TsneRequest>, JsonRejection>,
) -> ApiResult<crate::service::TsneResponse> {
    let Json(req) = body?;
    blocking(svc, move |s| s.tsne(&req)).await
}

async fn ask(
    State(svc): State<Arc<Service>>,
    body: Result<Json<AskRequest>, JsonRejection>,
) -> ApiResult<crate::service::AskResponse> {
    let Json(req) = body?;
    blocking(svc, move |s| s.ask(&req)).await
}

async fn ingest(
    State(svc): State<Arc<Service>>,
    body: Result<Json<IngestRequest>, JsonRejection>,
) -> ApiResult<semlens_core::ingest::IngestReport> {
    let Json(req) = body?;
    blocking(svc, move |s| s.ingest(&req.path)).await
}

async fn not_found() -> Response {
    let body = Json(json!({"error": {"code": "not_found", "message": "no such endpoint"}}));
    (StatusCode::NOT_FOUND, body).into_response()
}

pub fn router(svc: Arc<Service>) -> Router {
    Router::new()
        .route("/healthz", get(healthz))
        .route("/search", post(search))
        .route("/classify", post(classify))
        .route("/cluster", post(cluster))
        .route("/tsne", post(tsne))
        .route("/ask", post(ask))
        .route("/ingest", post(ingest))
        .fallback(not_found)
        .with_state(svc)
}

/// Binds and serves until the process is stopped. The index is loaded
/// before the listener opens, so `/healthz` answering means the service is
/// ready.
pub async fn serve(svc: Arc<Service>, addr: SocketAddr) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    log::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(svc)).await
}
