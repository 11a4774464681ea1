use std::path::PathBuf;

use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;

#[derive(Debug, thiserror::Error)]
pub enum ServiceError {
    #[error("query has no searchable terms")]
    EmptyQuery,
    #[error("no search index is loaded")]
    IndexUnavailable,
    #[error("unknown query id {0}")]
    UnknownQuery(String),
    #[error("position {position} is outside the presented list of {presented}")]
    PositionOutOfRange { position: u32, presented: usize },
    #[error("cannot write {path}: {source}")]
    Log {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot restore state from {path}: {message}")]
    Restore { path: PathBuf, message: String },
    #[error(transparent)]
    Core(#[from] blogrank::Error),
}

impl ServiceError {
    pub fn status(&self) -> StatusCode {
        match self {
            ServiceError::EmptyQuery | ServiceError::PositionOutOfRange { .. } => StatusCode::BAD_REQUEST,
            ServiceError::Core(blogrank::Error::EmptyQuery) => StatusCode::BAD_REQUEST,
            ServiceError::IndexUnavailable => StatusCode::SERVICE_UNAVAILABLE,
            ServiceError::UnknownQuery(_) => StatusCode::NOT_FOUND,
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        }
    }
}

impl IntoResponse for ServiceError {
    fn into_response(self) -> Response {
        let status = self.status();
        if status.is_server_error() {
            tracing::error!(error = %self, "request failed");
        }
        (status, Json(serde_json::json!({ "error": self.to_string() }))).into_response()
    }
}
