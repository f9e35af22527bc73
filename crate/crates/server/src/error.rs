use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use serde_json::json;

use uclog_core::auth::AuthError;
use uclog_core::correlator::CorrelatorError;
use uclog_core::ingest::IngestError;
use uclog_core::query::QueryError;
use uclog_core::store::StoreError;

/// An HTTP status with a one-line reason, rendered as `{"error": ...}`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ApiError {
    pub status: StatusCode,
    pub message: String,
}

impl ApiError {
    pub fn new(status: StatusCode, message: impl Into<String>) -> Self {
        Self {
            status,
            message: message.into(),
        }
    }

    pub fn unauthenticated() -> Self {
        Self::new(StatusCode::UNAUTHORIZED, "authentication required")
    }

    pub fn forbidden() -> Self {
        Self::new(StatusCode::FORBIDDEN, "not permitted for this role")
    }

    pub fn not_found(what: impl Into<String>) -> Self {
        Self::new(StatusCode::NOT_FOUND, what)
    }

    pub fn invalid(reason: impl Into<String>) -> Self {
        Self::new(StatusCode::UNPROCESSABLE_ENTITY, reason)
    }

    pub fn internal(reason: impl Into<String>) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, reason)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(json!({ "error": self.message }))).into_response()
    }
}

impl From<StoreError> for ApiError {
    fn from(e: StoreError) -> Self {
        match e {
            StoreError::ConstraintViolation(_) | StoreError::ReferentialIntegrity(_) => Self::invalid(e.to_string()),
            StoreError::NotFound(_) => Self::not_found(e.to_string()),
            StoreError::Corrupt(_) | StoreError::Backend(_) | StoreError::Io(_) => Self::internal(e.to_string()),
        }
    }
}

impl From<QueryError> for ApiError {
    fn from(e: QueryError) -> Self {
        match e {
            QueryError::UnknownReport(_)
            | QueryError::UnknownType(_)
            | QueryError::UnknownHost(_)
            | QueryError::NoIncidents(_) => Self::not_found(e.to_string()),
            QueryError::MissingParam(_)
            | QueryError::BadParam { .. }
            | QueryError::QueryRejected(_)
            | QueryError::QueryFailed(_) => Self::invalid(e.to_string()),
            QueryError::Forbidden => Self::forbidden(),
            QueryError::Internal(_) => Self::internal(e.to_string()),
            QueryError::Store(s) => s.into(),
        }
    }
}

impl From<CorrelatorError> for ApiError {
    fn from(e: CorrelatorError) -> Self {
        match e {
            CorrelatorError::UnknownSource(_) | CorrelatorError::UnknownIncident(_) => Self::not_found(e.to_string()),
            CorrelatorError::InjectionRejected(_)
            | CorrelatorError::InvalidWindow(_)
            | CorrelatorError::UnresolvedHost(_) => Self::invalid(e.to_string()),
            CorrelatorError::Transport(_) => Self::new(StatusCode::BAD_GATEWAY, e.to_string()),
            CorrelatorError::Template(_) | CorrelatorError::Store(_) => Self::internal(e.to_string()),
        }
    }
}

impl From<IngestError> for ApiError {
    fn from(e: IngestError) -> Self {
        match e {
            IngestError::Parse(_) | IngestError::Unauthorized(_) | IngestError::OrphanDuplicate(_) => {
                Self::invalid(e.to_string())
            }
            IngestError::Busy(_) => Self::new(StatusCode::SERVICE_UNAVAILABLE, e.to_string()),
            IngestError::Store(s) => s.into(),
            IngestError::Io(_) => Self::internal(e.to_string()),
        }
    }
}

impl From<AuthError> for ApiError {
    fn from(e: AuthError) -> Self {
        match e {
            AuthError::AuthFailed => Self::new(StatusCode::UNAUTHORIZED, e.to_string()),
            AuthError::Store(s) => s.into(),
        }
    }
}
