use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use serde_json::json;
use skynav::dataset::DatasetError;
use skynav::overview::OverviewError;
use skynav::protocol::ProtocolError;
use skynav::raster::RasterError;
use skynav::synth::SynthError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error("unknown environment {0}")]
    UnknownEnvironment(String),
    #[error("unknown episode {0}")]
    UnknownEpisode(String),
    #[error("unknown session {0}")]
    UnknownSession(String),
    #[error("no observation for step {0}")]
    UnknownStep(String),
    #[error("bad request: {0}")]
    BadRequest(String),
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
    #[error(transparent)]
    Overview(#[from] OverviewError),
    #[error(transparent)]
    Raster(#[from] RasterError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Synth(#[from] SynthError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("worker failed: {0}")]
    Worker(String),
}

impl ServiceError {
    /// Stable identifier sent to clients.
    pub fn kind(&self) -> &'static str {
        match self {
            ServiceError::UnknownEnvironment(_) => "UnknownEnvironment",
            ServiceError::UnknownEpisode(_) => "UnknownEpisode",
            ServiceError::UnknownSession(_) => "UnknownSession",
            ServiceError::UnknownStep(_) => "UnknownStep",
            ServiceError::BadRequest(_) => "BadRequest",
            ServiceError::Protocol(ProtocolError::ProtocolViolation { .. }) => "ProtocolViolation",
            ServiceError::Protocol(ProtocolError::Malformed(_)) => "Malformed",
            ServiceError::Overview(OverviewError::IndexOutOfRange { .. }) => "IndexOutOfRange",
            ServiceError::Synth(_) => "SamplingFailed",
            _ => "Internal",
        }
    }

    pub fn status(&self) -> StatusCode {
        match self {
            ServiceError::UnknownEnvironment(_)
            | ServiceError::UnknownEpisode(_)
            | ServiceError::UnknownSession(_)
            | ServiceError::UnknownStep(_) => StatusCode::NOT_FOUND,
            ServiceError::BadRequest(_)
            | ServiceError::Protocol(ProtocolError::Malformed(_))
            | ServiceError::Overview(OverviewError::IndexOutOfRange { .. }) => StatusCode::BAD_REQUEST,
            ServiceError::Protocol(ProtocolError::ProtocolViolation { .. }) => StatusCode::CONFLICT,
            ServiceError::Synth(_) => StatusCode::UNPROCESSABLE_ENTITY,
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        }
    }

    pub fn to_json(&self) -> serde_json::Value {
        json!({ "error": self.kind(), "message": self.to_string() })
    }
}

impl IntoResponse for ServiceError {
    fn into_response(self) -> Response {
        if self.status().is_server_error() {
            tracing::error!("{self}");
        }
        (self.status(), Json(self.to_json())).into_response()
    }
}
