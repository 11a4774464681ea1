use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;

use axum::extract::{Query, State};
use axum::routing::{get, post};
use axum::{Json, Router};
use blogrank::eval::Evaluation;
use serde::Deserialize;
use tower_http::services::ServeDir;

use crate::engine::{ClickAck, ClickRequest, SearchResponse, Service};
use crate::error::ServiceError;

#[derive(Debug, Deserialize)]
struct SearchParams {
    #[serde(default)]
    q: String,
    #[serde(default)]
    user: Option<String>,
}

// The service methods block on fsync, so they run off the async workers.
async fn blocking<T: Send + 'static>(
    f: impl FnOnce() -> Result<T, ServiceError> + Send + 'static,
) -> Result<Json<T>, ServiceError> {
    tokio::task::spawn_blocking(f).await.expect("service task panicked").map(Json)
}

async fn search(
    State(service): State<Arc<Service>>,
    Query(params): Query<SearchParams>,
) -> Result<Json<SearchResponse>, ServiceError> {
    let user = params.user.unwrap_or_else(|| "anonymous".into());
    blocking(move || service.search(&params.q, &user)).await
}

async fn click(State(service): State<Arc<Service>>, Json(req): Json<ClickRequest>) -> Result<Json<ClickAck>, ServiceError> {
    blocking(move || service.click(&req)).await
}

async fn metrics(State(service): State<Arc<Service>>) -> Result<Json<Evaluation>, ServiceError> {
    blocking(move || service.metrics()).await
}

/// API routes, plus the static UI bundle at `/` when a directory is given.
pub fn router(service: Arc<Service>, static_dir: Option<PathBuf>) -> Router {
    let api = Router::new()
        .route("/api/search", get(search))
        .route("/api/click", post(click))
        .route("/api/metrics", get(metrics))
        .with_state(service);
    match static_dir {
        Some(dir) => api.fallback_service(ServeDir::new(dir).append_index_html_on_directories(true)),
        None => api,
    }
}

/// Serves until Ctrl-C.
pub async fn serve(service: Arc<Service>, static_dir: Option<PathBuf>, addr: SocketAddr) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    tracing::info!(addr = %listener.local_addr()?, "listening");
    axum::serve(listener, router(service, static_dir))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
