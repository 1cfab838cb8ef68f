use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use serde::{Deserialize, Serialize};

use stepwork_core::build::{BuildError, RunError};
use stepwork_core::codegen::CodegenError;
use stepwork_core::component::RegistryError;
use stepwork_core::persistence::PersistError;
use stepwork_core::steps::{FieldError, StepsError};

/// Machine codes carried by every error body. Closed set.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ErrorCode {
    MalformedRequest,
    NotFound,
    RevisionConflict,
    FieldErrors,
    ToolchainMissing,
    Internal,
    // Engine errors, one code each.
    EmptyTargetSet,
    UnknownTarget,
    EmptyGoalName,
    DuplicateGoalName,
    GoalNotFound,
    AnchorNotFound,
    AnchorNotContainer,
    InteractionNotFound,
    HasDependents,
    UnknownComponent,
    UnknownCategory,
    RootComponentNotApplicable,
    NoRootComponent,
    BindingsMismatch,
    NoTemplateForTarget,
    TargetNotInProject,
    NoGoals,
    MalformedFile,
    UnsupportedFormatVersion,
    MissingPack,
    CorruptLedger,
    ProjectIdMismatch,
    SpawnFailure,
}

impl ErrorCode {
    pub fn status(self) -> StatusCode {
        use ErrorCode::*;
        match self {
            MalformedRequest | MalformedFile => StatusCode::BAD_REQUEST,
            NotFound | GoalNotFound | AnchorNotFound | InteractionNotFound | UnknownComponent | UnknownCategory => {
                StatusCode::NOT_FOUND
            }
            RevisionConflict | DuplicateGoalName | HasDependents => StatusCode::CONFLICT,
            FieldErrors
            | EmptyTargetSet
            | UnknownTarget
            | EmptyGoalName
            | AnchorNotContainer
            | RootComponentNotApplicable
            | BindingsMismatch
            | NoTemplateForTarget
            | TargetNotInProject
            | NoGoals
            | UnsupportedFormatVersion
            | CorruptLedger
            | ProjectIdMismatch => StatusCode::UNPROCESSABLE_ENTITY,
            ToolchainMissing | NoRootComponent | MissingPack | SpawnFailure => StatusCode::FAILED_DEPENDENCY,
            Internal => StatusCode::INTERNAL_SERVER_ERROR,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ApiError {
    pub code: ErrorCode,
    pub message: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub field_errors: Option<Vec<FieldError>>,
    /// Set on revision conflicts.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub current_revision: Option<u64>,
    /// Interaction ids blocking a non-cascading delete.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dependents: Option<Vec<String>>,
}

impl ApiError {
    pub fn new(code: ErrorCode, message: impl Into<String>) -> Self {
        ApiError {
            code,
            message: message.into(),
            field_errors: None,
            current_revision: None,
            dependents: None,
        }
    }

    pub fn malformed(message: impl Into<String>) -> Self {
        ApiError::new(ErrorCode::MalformedRequest, message)
    }

    pub fn not_found(message: impl Into<String>) -> Self {
        ApiError::new(ErrorCode::NotFound, message)
    }

    pub fn conflict(current: u64, expected: u64) -> Self {
        ApiError {
            current_revision: Some(current),
            ..ApiError::new(
                ErrorCode::RevisionConflict,
                format!("expected revision {expected}, project is at {current}"),
            )
        }
    }

    pub fn internal(message: impl Into<String>) -> Self {
        ApiError::new(ErrorCode::Internal, message)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.code.status(), Json(self)).into_response()
    }
}

impl From<StepsError> for ApiError {
    fn from(e: StepsError) -> Self {
        let message = e.to_string();
        let code = match e {
            StepsError::EmptyTargetSet => ErrorCode::EmptyTargetSet,
            StepsError::UnknownTarget(_) => ErrorCode::UnknownTarget,
            StepsError::EmptyGoalName => ErrorCode::EmptyGoalName,
            StepsError::DuplicateGoalName(_) => ErrorCode::DuplicateGoalName,
            StepsError::GoalNotFound(_) => ErrorCode::GoalNotFound,
            StepsError::AnchorNotFound(_) => ErrorCode::AnchorNotFound,
            StepsError::AnchorNotContainer(_) => ErrorCode::AnchorNotContainer,
            StepsError::InteractionNotFound(_) => ErrorCode::InteractionNotFound,
            StepsError::HasDependents(deps) => {
                return ApiError {
                    dependents: Some(deps),
                    ..ApiError::new(ErrorCode::HasDependents, message)
                }
            }
            StepsError::FieldErrors(errs) => {
                return ApiError {
                    field_errors: Some(errs),
                    ..ApiError::new(ErrorCode::FieldErrors, message)
                }
            }
            StepsError::UnknownComponent(_) => ErrorCode::UnknownComponent,
            StepsError::RootComponentNotApplicable(_) => ErrorCode::RootComponentNotApplicable,
            StepsError::NoRootComponent => ErrorCode::NoRootComponent,
            StepsError::BindingsMismatch(_) => ErrorCode::BindingsMismatch,
            StepsError::Mask(_) => ErrorCode::Internal,
        };
        ApiError::new(code, message)
    }
}

impl From<CodegenError> for ApiError {
    fn from(e: CodegenError) -> Self {
        let code = match e {
            CodegenError::NoTemplateForTarget { .. } => ErrorCode::NoTemplateForTarget,
            CodegenError::UnknownTarget(_) => ErrorCode::UnknownTarget,
            CodegenError::TargetNotInProject(_) => ErrorCode::TargetNotInProject,
            CodegenError::UnknownComponent(_) => ErrorCode::UnknownComponent,
            CodegenError::NoRootComponent => ErrorCode::NoRootComponent,
            CodegenError::NoGoals => ErrorCode::NoGoals,
            CodegenError::Mask { .. } => ErrorCode::Internal,
        };
        ApiError::new(code, e.to_string())
    }
}

impl From<RegistryError> for ApiError {
    fn from(e: RegistryError) -> Self {
        let code = match e {
            RegistryError::UnknownCategory(_) => ErrorCode::UnknownCategory,
            RegistryError::NoTemplateForTarget { .. } => ErrorCode::NoTemplateForTarget,
            _ => ErrorCode::Internal,
        };
        ApiError::new(code, e.to_string())
    }
}

impl From<PersistError> for ApiError {
    fn from(e: PersistError) -> Self {
        let code = match e {
            PersistError::MalformedFile(_) => ErrorCode::MalformedFile,
            PersistError::UnsupportedFormatVersion(_) => ErrorCode::UnsupportedFormatVersion,
            PersistError::MissingPack(_) => ErrorCode::MissingPack,
            PersistError::CorruptLedger { .. } => ErrorCode::CorruptLedger,
        };
        ApiError::new(code, e.to_string())
    }
}

impl From<BuildError> for ApiError {
    fn from(e: BuildError) -> Self {
        let code = match e {
            BuildError::ToolchainMissing { .. } => ErrorCode::ToolchainMissing,
            _ => ErrorCode::Internal,
        };
        ApiError::new(code, e.to_string())
    }
}

impl From<RunError> for ApiError {
    fn from(e: RunError) -> Self {
        let code = match e {
            RunError::SpawnFailure { .. } => ErrorCode::SpawnFailure,
            _ => ErrorCode::Internal,
        };
        ApiError::new(code, e.to_string())
    }
}
