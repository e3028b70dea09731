use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use colotag_core::compare::CompareError;
use colotag_core::report::ReportError;
use colotag_core::store::StoreError;
use colotag_core::{Diagnostic, TimelineError};
use serde::Serialize;
use thiserror::Error;

/// Error returned by every endpoint, rendered as a JSON body
/// `{"error": <code>, "message": ..., "diagnostics": [...]}`.
#[derive(Debug, Error)]
pub enum ApiError {
    #[error("procedure {0} not found")]
    UnknownProcedure(String),
    #[error("{0}")]
    NotFound(String),
    #[error("procedure {0} already exists")]
    AlreadyExists(String),
    #[error("revision {expected} is stale, current revision is {current}")]
    RevisionConflict { expected: u64, current: u64 },
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error(transparent)]
    Timeline(#[from] TimelineError),
    #[error(transparent)]
    Report(#[from] ReportError),
    #[error(transparent)]
    Compare(#[from] CompareError),
    #[error(transparent)]
    Store(#[from] StoreError),
}

#[derive(Debug, Serialize)]
struct ErrorBody<'a> {
    error: &'static str,
    message: String,
    #[serde(skip_serializing_if = "<[_]>::is_empty")]
    diagnostics: &'a [Diagnostic],
}

impl ApiError {
    pub fn code(&self) -> &'static str {
        match self {
            ApiError::UnknownProcedure(_) | ApiError::NotFound(_) => "NotFound",
            ApiError::AlreadyExists(_) => "AlreadyExists",
            ApiError::RevisionConflict { .. } => "RevisionConflict",
            ApiError::InvalidRequest(_) => "InvalidRequest",
            ApiError::Timeline(e) => match e {
                TimelineError::OutOfBounds { .. } => "OutOfBounds",
                TimelineError::SegmentOverlap { .. } => "SegmentOverlap",
                TimelineError::EmptyTag => "EmptyTag",
                TimelineError::BadDistanceGranularity(_) => "BadDistanceGranularity",
                TimelineError::UnknownAnnotation(_) => "UnknownAnnotation",
                TimelineError::InvalidTimeline(_) => "InvalidTimeline",
            },
            ApiError::Report(e) => match e {
                ReportError::InvalidTimeline(_) => "InvalidTimeline",
                ReportError::AlreadyComplete => "AlreadyComplete",
                ReportError::MissingRecommendation => "MissingRecommendation",
                ReportError::UnlocatedFinding(_) => "UnlocatedFinding",
            },
            ApiError::Compare(e) => match e {
                CompareError::InvalidTimeline { .. } => "InvalidTimeline",
                CompareError::EmptyInput => "EmptyInput",
                CompareError::BadThreshold(_) => "BadThreshold",
            },
            ApiError::Store(e) => match e {
                StoreError::InvalidTimeline(_) => "InvalidTimeline",
                StoreError::IoFailure(_) => "IoFailure",
                StoreError::SchemaVersionUnsupported(_) => "SchemaVersionUnsupported",
                StoreError::CorruptFile(_) => "CorruptFile",
            },
        }
    }

    pub fn status(&self) -> StatusCode {
        match self.code() {
            "NotFound" | "UnknownAnnotation" => StatusCode::NOT_FOUND,
            "AlreadyExists" | "RevisionConflict" | "SegmentOverlap" | "AlreadyComplete" => {
                StatusCode::CONFLICT
            }
            "IoFailure" | "SchemaVersionUnsupported" | "CorruptFile" => {
                StatusCode::INTERNAL_SERVER_ERROR
            }
            _ => StatusCode::UNPROCESSABLE_ENTITY,
        }
    }

    fn diagnostics(&self) -> &[Diagnostic] {
        match self {
            ApiError::Timeline(TimelineError::InvalidTimeline(d))
            | ApiError::Report(ReportError::InvalidTimeline(d))
            | ApiError::Compare(CompareError::InvalidTimeline { diagnostics: d, .. })
            | ApiError::Store(StoreError::InvalidTimeline(d)) => d,
            _ => &[],
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = self.status();
        if status.is_server_error() {
            tracing::error!(error = %self, "request failed");
        }
        let body = ErrorBody {
            error: self.code(),
            message: self.to_string(),
            diagnostics: self.diagnostics(),
        };
        (status, Json(body)).into_response()
    }
}
