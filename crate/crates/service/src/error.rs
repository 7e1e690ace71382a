use axum::extract::multipart::MultipartError;
use axum::extract::rejection::{JsonRejection, QueryRejection};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use ebrt_core::collision::CollisionError;
use ebrt_core::ct::CtError;
use ebrt_core::geometry::GeometryError;
use ebrt_core::linac::LinacError;
use ebrt_core::measure::{MeasureError, ScenarioError};
use ebrt_core::wire::ErrorBody;

#[derive(Debug)]
pub struct ApiError {
    pub status: StatusCode,
    pub code: &'static str,
    pub message: String,
    pub revision: Option<u64>,
}

impl ApiError {
    pub fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        Self {
            status,
            code,
            message: message.into(),
            revision: None,
        }
    }

    pub fn not_found(message: impl Into<String>) -> Self {
        Self::new(StatusCode::NOT_FOUND, "not_found", message)
    }

    pub fn unprocessable(message: impl Into<String>) -> Self {
        Self::new(StatusCode::UNPROCESSABLE_ENTITY, "unprocessable", message)
    }

    pub fn bad_request(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, "bad_request", message)
    }

    pub fn internal(message: impl Into<String>) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", message)
    }

    pub fn with_revision(mut self, revision: u64) -> Self {
        self.revision = Some(revision);
        self
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        if self.status.is_server_error() {
            tracing::error!(code = self.code, "{}", self.message);
        }
        let body = ErrorBody {
            error: self.code.to_string(),
            message: self.message,
            revision: self.revision,
        };
        (self.status, Json(body)).into_response()
    }
}

impl From<JsonRejection> for ApiError {
    fn from(e: JsonRejection) -> Self {
        Self::unprocessable(e.body_text())
    }
}

impl From<QueryRejection> for ApiError {
    fn from(e: QueryRejection) -> Self {
        Self::unprocessable(e.body_text())
    }
}

impl From<MultipartError> for ApiError {
    fn from(e: MultipartError) -> Self {
        let status = e.status();
        Self::new(status, "upload", e.body_text())
    }
}

impl From<LinacError> for ApiError {
    fn from(e: LinacError) -> Self {
        let msg = e.to_string();
        match e {
            LinacError::UnknownAttachment(_) | LinacError::AttachmentNotInstalled(_) => Self::not_found(msg),
            LinacError::DuplicateAttachment(_) => Self::new(StatusCode::CONFLICT, "conflict", msg),
            LinacError::Io(_) => Self::internal(msg),
            _ => Self::unprocessable(msg),
        }
    }
}

impl From<CtError> for ApiError {
    fn from(e: CtError) -> Self {
        match e {
            CtError::Io(_) => Self::internal(e.to_string()),
            _ => Self::unprocessable(e.to_string()),
        }
    }
}

impl From<GeometryError> for ApiError {
    fn from(e: GeometryError) -> Self {
        match e {
            GeometryError::Io(_) => Self::internal(e.to_string()),
            _ => Self::unprocessable(e.to_string()),
        }
    }
}

impl From<CollisionError> for ApiError {
    fn from(e: CollisionError) -> Self {
        Self::unprocessable(e.to_string())
    }
}

impl From<MeasureError> for ApiError {
    fn from(e: MeasureError) -> Self {
        Self::unprocessable(e.to_string())
    }
}

impl From<ScenarioError> for ApiError {
    fn from(e: ScenarioError) -> Self {
        match e {
            ScenarioError::Io { .. } => Self::internal(e.to_string()),
            _ => Self::unprocessable(e.to_string()),
        }
    }
}
