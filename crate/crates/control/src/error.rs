use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use gloss_core::pipeline::PipelineError;
use gloss_core::services::ServiceError;
use gloss_core::store::StoreError;
use gloss_sim::SimError;
use serde::Serialize;

use crate::factory::SpecError;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ErrorBody {
    pub error: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
    pub message: String,
}

#[derive(Debug, Clone)]
pub struct ApiError {
    pub status: StatusCode,
    pub body: ErrorBody,
}

impl ApiError {
    pub fn new(status: StatusCode, error: &str, message: impl Into<String>) -> Self {
        Self { status, body: ErrorBody { error: error.to_string(), reason: None, message: message.into() } }
    }

    pub fn with_reason(mut self, reason: &str) -> Self {
        self.body.reason = Some(reason.to_string());
        self
    }

    pub fn bad_parameter(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, "InvalidParameter", message)
    }

    pub fn not_found(error: &str, message: impl Into<String>) -> Self {
        Self::new(StatusCode::NOT_FOUND, error, message)
    }

    pub fn malformed_json(e: &serde_json::Error) -> Self {
        Self::new(StatusCode::BAD_REQUEST, "MalformedJson", e.to_string())
    }

    pub fn internal(message: impl Into<String>) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, "IoFailure", message)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self.body)).into_response()
    }
}

impl From<SpecError> for ApiError {
    fn from(e: SpecError) -> Self {
        ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "SpecInvalid", e.message).with_reason(e.reason)
    }
}

impl From<PipelineError> for ApiError {
    fn from(e: PipelineError) -> Self {
        match e {
            PipelineError::InvalidStateTransition { .. } => {
                ApiError::new(StatusCode::CONFLICT, "InvalidStateTransition", e.to_string())
            }
            PipelineError::StartFailed { .. } => {
                ApiError::new(StatusCode::CONFLICT, "InvalidStateTransition", e.to_string()).with_reason(e.code())
            }
            other => SpecError::from(other).into(),
        }
    }
}

impl From<ServiceError> for ApiError {
    fn from(e: ServiceError) -> Self {
        match &e {
            ServiceError::NoKnownLocation(_) | ServiceError::EmptyTrail => ApiError::not_found(e.code(), e.to_string()),
            ServiceError::InvalidParameter(_) => ApiError::bad_parameter(e.to_string()),
            ServiceError::Store(s) => s.clone().into(),
        }
    }
}

impl From<StoreError> for ApiError {
    fn from(e: StoreError) -> Self {
        match e {
            StoreError::InvalidRange { .. } => ApiError::new(StatusCode::BAD_REQUEST, e.code(), e.to_string()),
            other => ApiError::internal(other.to_string()),
        }
    }
}

impl From<SimError> for ApiError {
    fn from(e: SimError) -> Self {
        match e {
            SimError::TooLarge(_) => ApiError::new(StatusCode::PAYLOAD_TOO_LARGE, "TooLarge", e.to_string()),
            SimError::Io(_) => ApiError::internal(e.to_string()),
            other => ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "ValidationFailure", other.to_string())
                .with_reason(other.code()),
        }
    }
}
