use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use storyweave_core::export::ExportError;
use storyweave_core::model::ModelError;
use storyweave_core::pipeline::PipelineError;
use storyweave_core::{GenerateError, RevisionError, StoreError};

/// The closed set of error codes. Clients match on these, never on
/// messages.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorCode {
    InvalidRequest,
    EmptySeed,
    EmptyInstruction,
    SuggestionNotFound,
    ProjectNotFound,
    ComponentNotFound,
    JobNotFound,
    AssetNotFound,
    NotFound,
    MethodNotAllowed,
    NotRevisable,
    SceneOutOfRange,
    NotGenerated,
    NameCollision,
    NothingToUndo,
    ProjectArchived,
    ValidationFailed,
    UnknownFormat,
    GenerationFailed,
    UnsupportedSchema,
    StorageError,
    Internal,
}

impl ErrorCode {
    pub const ALL: [ErrorCode; 22] = [
        ErrorCode::InvalidRequest,
        ErrorCode::EmptySeed,
        ErrorCode::EmptyInstruction,
        ErrorCode::SuggestionNotFound,
        ErrorCode::ProjectNotFound,
        ErrorCode::ComponentNotFound,
        ErrorCode::JobNotFound,
        ErrorCode::AssetNotFound,
        ErrorCode::NotFound,
        ErrorCode::MethodNotAllowed,
        ErrorCode::NotRevisable,
        ErrorCode::SceneOutOfRange,
        ErrorCode::NotGenerated,
        ErrorCode::NameCollision,
        ErrorCode::NothingToUndo,
        ErrorCode::ProjectArchived,
        ErrorCode::ValidationFailed,
        ErrorCode::UnknownFormat,
        ErrorCode::GenerationFailed,
        ErrorCode::UnsupportedSchema,
        ErrorCode::StorageError,
        ErrorCode::Internal,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ErrorCode::InvalidRequest => "invalid_request",
            ErrorCode::EmptySeed => "empty_seed",
            ErrorCode::EmptyInstruction => "empty_instruction",
            ErrorCode::SuggestionNotFound => "suggestion_not_found",
            ErrorCode::ProjectNotFound => "project_not_found",
            ErrorCode::ComponentNotFound => "component_not_found",
            ErrorCode::JobNotFound => "job_not_found",
            ErrorCode::AssetNotFound => "asset_not_found",
            ErrorCode::NotFound => "not_found",
            ErrorCode::MethodNotAllowed => "method_not_allowed",
            ErrorCode::NotRevisable => "not_revisable",
            ErrorCode::SceneOutOfRange => "scene_out_of_range",
            ErrorCode::NotGenerated => "not_generated",
            ErrorCode::NameCollision => "name_collision",
            ErrorCode::NothingToUndo => "nothing_to_undo",
            ErrorCode::ProjectArchived => "project_archived",
            ErrorCode::ValidationFailed => "validation_failed",
            ErrorCode::UnknownFormat => "unknown_format",
            ErrorCode::GenerationFailed => "generation_failed",
            ErrorCode::UnsupportedSchema => "unsupported_schema",
            ErrorCode::StorageError => "storage_error",
            ErrorCode::Internal => "internal",
        }
    }

    pub fn status(self) -> StatusCode {
        use ErrorCode::*;
        match self {
            InvalidRequest | EmptySeed | EmptyInstruction | NotRevisable | SceneOutOfRange | UnknownFormat => {
                StatusCode::BAD_REQUEST
            }
            SuggestionNotFound | ProjectNotFound | ComponentNotFound | JobNotFound | AssetNotFound | NotFound => {
                StatusCode::NOT_FOUND
            }
            MethodNotAllowed => StatusCode::METHOD_NOT_ALLOWED,
            NotGenerated | NameCollision | NothingToUndo | ProjectArchived | UnsupportedSchema => StatusCode::CONFLICT,
            ValidationFailed => StatusCode::UNPROCESSABLE_ENTITY,
            GenerationFailed => StatusCode::BAD_GATEWAY,
            StorageError | Internal => StatusCode::INTERNAL_SERVER_ERROR,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApiError {
    pub code: ErrorCode,
    pub message: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detail: Option<Value>,
}

impl ApiError {
    pub fn new(code: ErrorCode, message: impl Into<String>) -> Self {
        Self {
            code,
            message: message.into(),
            detail: None,
        }
    }

    pub fn with_detail(mut self, detail: Value) -> Self {
        self.detail = Some(detail);
        self
    }

    pub fn invalid(message: impl Into<String>) -> Self {
        Self::new(ErrorCode::InvalidRequest, message)
    }

    fn internal(what: &str, source: &dyn std::fmt::Display) -> Self {
        tracing::error!("{what}: {source}");
        Self::new(ErrorCode::Internal, format!("{what} failed"))
    }
}

impl std::fmt::Display for ApiError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.code.as_str(), self.message)
    }
}

impl std::error::Error for ApiError {}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.code.status(), Json(json!({ "error": self }))).into_response()
    }
}

fn generation_detail(e: &GenerateError) -> Value {
    match e {
        GenerateError::Exhausted { schema, attempts } => json!({ "schema": schema.as_str(), "attempts": attempts }),
        other => json!({ "attempts": other.attempts() }),
    }
}

impl From<StoreError> for ApiError {
    fn from(e: StoreError) -> Self {
        match &e {
            StoreError::NotFound(_) => Self::new(ErrorCode::ProjectNotFound, e.to_string()),
            StoreError::AssetNotFound(_) => Self::new(ErrorCode::AssetNotFound, e.to_string()),
            StoreError::Migration { .. } => Self::new(ErrorCode::UnsupportedSchema, e.to_string()),
            StoreError::Invalid(report) => {
                Self::new(ErrorCode::ValidationFailed, e.to_string()).with_detail(json!(report.violations))
            }
            StoreError::Corrupt { .. } | StoreError::MissingRecord(_) => {
                tracing::error!("{e}");
                Self::new(ErrorCode::StorageError, e.to_string())
            }
            StoreError::Io { .. } => {
                tracing::error!("{e}");
                Self::new(ErrorCode::StorageError, "project storage is unavailable")
            }
        }
    }
}

impl From<RevisionError> for ApiError {
    fn from(e: RevisionError) -> Self {
        let msg = e.to_string();
        match e {
            RevisionError::EmptyInstruction => Self::new(ErrorCode::EmptyInstruction, msg),
            RevisionError::UnknownComponent(_) => Self::new(ErrorCode::ComponentNotFound, msg),
            RevisionError::NotRevisable(_) => Self::new(ErrorCode::NotRevisable, msg),
            RevisionError::SceneOutOfRange(_) => Self::new(ErrorCode::SceneOutOfRange, msg),
            RevisionError::NotGenerated => Self::new(ErrorCode::NotGenerated, msg),
            RevisionError::NameCollision { name, existing } => {
                Self::new(ErrorCode::NameCollision, msg).with_detail(json!({ "name": name, "existing": existing }))
            }
            RevisionError::Invalid(report) => {
                Self::new(ErrorCode::ValidationFailed, msg).with_detail(json!(report.violations))
            }
            RevisionError::NothingToUndo => Self::new(ErrorCode::NothingToUndo, msg),
            RevisionError::Generation(g) => {
                Self::new(ErrorCode::GenerationFailed, msg).with_detail(generation_detail(&g))
            }
            RevisionError::Prompt(p) => Self::internal("prompt assembly", &p),
            RevisionError::Link(l) => Self::internal("link graph", &l),
        }
    }
}

impl From<PipelineError> for ApiError {
    fn from(e: PipelineError) -> Self {
        let msg = e.to_string();
        let stage = e.stage().to_string();
        match e {
            PipelineError::Generation { source, .. } => {
                let mut detail = generation_detail(&source);
                detail["stage"] = json!(stage);
                Self::new(ErrorCode::GenerationFailed, msg).with_detail(detail)
            }
            PipelineError::Prompt { source, .. } => Self::internal(&stage, &source),
            PipelineError::Invalid(report) => Self::new(ErrorCode::ValidationFailed, msg)
                .with_detail(json!({ "stage": stage, "violations": report.violations })),
        }
    }
}

impl From<ExportError> for ApiError {
    fn from(e: ExportError) -> Self {
        match e {
            ExportError::UnknownFormat { .. } => Self::new(ErrorCode::UnknownFormat, e.to_string()),
            ExportError::NotGenerated => Self::new(ErrorCode::NotGenerated, e.to_string()),
        }
    }
}

impl From<ModelError> for ApiError {
    fn from(e: ModelError) -> Self {
        match e {
            ModelError::EmptySeed => Self::new(ErrorCode::EmptySeed, e.to_string()),
            other => Self::invalid(other.to_string()),
        }
    }
}
