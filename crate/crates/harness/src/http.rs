//! Axum routes over a [`Store`].

use std::net::SocketAddr;
use std::sync::Arc;

use axum::extract::rejection::JsonRejection;
use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::de::DeserializeOwned;
use tokio::net::TcpListener;

use crate::api::{AnswerRequest, ApiError, CreateSessionRequest, SceneRender, SessionView};
use crate::store::Store;

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = StatusCode::from_u16(self.code.status()).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
        (status, Json(self)).into_response()
    }
}

type ApiResult<T> = Result<Json<T>, ApiError>;

fn body<T: DeserializeOwned>(b: Result<Json<T>, JsonRejection>) -> Result<T, ApiError> {
    b.map(|Json(t)| t).map_err(|e| ApiError::bad_request(e.body_text()))
}

/// Store calls take per-session locks and may render a point cloud, so they run off the async workers.
async fn blocking<T: Send + 'static>(f: impl FnOnce() -> Result<T, ApiError> + Send + 'static) -> ApiResult<T> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::engine(format!("worker failed: {e}")))?
        .map(Json)
}

async fn healthz() -> Json<serde_json::Value> {
    Json(serde_json::json!({ "status": "ok" }))
}

async fn create_session(
    State(store): State<Arc<Store>>,
    b: Result<Json<CreateSessionRequest>, JsonRejection>,
) -> Result<(StatusCode, Json<SessionView>), ApiError> {
    let req = body(b)?;
    let view = blocking(move || store.create_session(req)).await?;
    Ok((StatusCode::CREATED, view))
}

async fn get_session(State(store): State<Arc<Store>>, Path(id): Path<String>) -> ApiResult<SessionView> {
    blocking(move || store.get_session(&id)).await
}

async fn answer(
    State(store): State<Arc<Store>>,
    Path(id): Path<String>,
    b: Result<Json<AnswerRequest>, JsonRejection>,
) -> ApiResult<SessionView> {
    // An unknown session is reported before a malformed body.
    store.check_session(&id)?;
    let req = body(b)?;
    blocking(move || store.answer(&id, req)).await
}

async fn finalize(State(store): State<Arc<Store>>, Path(id): Path<String>) -> ApiResult<SessionView> {
    blocking(move || store.finalize(&id)).await
}

async fn get_scene(
    State(store): State<Arc<Store>>,
    Path(id): Path<String>,
) -> ApiResult<intent_grasp::world::Scene> {
    store.scene(&id).map(|s| Json((*s).clone()))
}

async fn render_scene(State(store): State<Arc<Store>>, Path(id): Path<String>) -> ApiResult<SceneRender> {
    store.render_scene(&id).map(Json)
}

async fn delete_scene(State(store): State<Arc<Store>>, Path(id): Path<String>) -> Result<StatusCode, ApiError> {
    store.delete_scene(&id)?;
    Ok(StatusCode::NO_CONTENT)
}

async fn fallback() -> ApiError {
    ApiError::new(crate::api::ErrorCode::NotFound, "no such route")
}

pub fn router(store: Arc<Store>) -> Router {
    Router::new()
        .route("/healthz", get(healthz))
        .route("/sessions", post(create_session))
        .route("/sessions/{id}", get(get_session))
        .route("/sessions/{id}/answer", post(answer))
        .route("/sessions/{id}/finalize", post(finalize))
        .route("/scenes/{id}", get(get_scene).delete(delete_scene))
        .route("/scenes/{id}/render", get(render_scene))
        .fallback(fallback)
        .with_state(store)
}

/// Binds `addr` and returns the bound address with the server future.
pub async fn bind(
    store: Arc<Store>,
    addr: SocketAddr,
) -> std::io::Result<(SocketAddr, impl std::future::Future<Output = std::io::Result<()>>)> {
    let listener = TcpListener::bind(addr).await?;
    let local = listener.local_addr()?;
    let app = router(store);
    Ok((local, async move { axum::serve(listener, app).await }))
}
