use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use curate_core::dataset::DatasetError;
use curate_core::model::ModelError;
use curate_core::neighbors::NeighborError;
use curate_core::projection::ProjectionError;
use curate_core::sampling::SamplingError;
use curate_core::session::SessionError;
use curate_core::typing::TypingError;

/// Error body returned by every endpoint. `code` values are stable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, thiserror::Error)]
#[error("{code}: {message}")]
pub struct ApiError {
    #[serde(skip)]
    pub status: u16,
    pub code: String,
    pub message: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub details: Option<Value>,
}

impl ApiError {
    pub fn new(status: StatusCode, code: &str, message: impl ToString) -> Self {
        Self {
            status: status.as_u16(),
            code: code.to_string(),
            message: message.to_string(),
            details: None,
        }
    }

    pub fn with_details(mut self, details: Value) -> Self {
        self.details = Some(details);
        self
    }

    pub fn not_found(what: &str, id: &str) -> Self {
        Self::new(StatusCode::NOT_FOUND, &format!("unknown_{what}"), format!("no {what} with id `{id}`"))
    }

    pub fn bad_request(code: &str, message: impl ToString) -> Self {
        Self::new(StatusCode::BAD_REQUEST, code, message)
    }

    pub fn internal(message: impl ToString) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", message)
    }

    pub fn status_code(&self) -> StatusCode {
        StatusCode::from_u16(self.status).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status_code(), Json(self)).into_response()
    }
}

const BAD: StatusCode = StatusCode::BAD_REQUEST;
const UNPROCESSABLE: StatusCode = StatusCode::UNPROCESSABLE_ENTITY;

fn typing_code(e: &TypingError) -> (StatusCode, &'static str) {
    match e {
        TypingError::KOutOfRange(_) => (BAD, "k_out_of_range"),
        TypingError::KTooLarge { .. } => (BAD, "k_too_large"),
        TypingError::LabelCountMismatch { .. } => (BAD, "label_count_mismatch"),
    }
}

fn neighbor_code(e: &NeighborError) -> (StatusCode, &'static str) {
    match e {
        NeighborError::TooFewPoints(_) => (UNPROCESSABLE, "too_few_points"),
        NeighborError::IdCountMismatch { .. } => (BAD, "id_count_mismatch"),
        NeighborError::DimensionMismatch { .. } => (BAD, "dimension_mismatch"),
    }
}

fn sampling_code(e: &SamplingError) -> (StatusCode, &'static str) {
    match e {
        SamplingError::EmptyScope => (BAD, "empty_scope"),
        SamplingError::NoIncludedTypes => (BAD, "no_included_types"),
        SamplingError::TooFewParents { .. } => (BAD, "too_few_parents"),
        SamplingError::InvalidThreshold(_) => (BAD, "invalid_threshold"),
        SamplingError::InvalidK => (BAD, "invalid_k"),
        SamplingError::InvalidSeeds => (BAD, "invalid_seeds"),
        SamplingError::InvalidEpsilon(_) => (BAD, "invalid_epsilon"),
        SamplingError::NonPositiveTotal => (BAD, "non_positive_total"),
        SamplingError::UnknownClass(_) => (BAD, "unknown_class"),
        SamplingError::ClassOutOfScope(_) => (BAD, "class_out_of_scope"),
        SamplingError::UnknownId(_) => (BAD, "unknown_suggestion_id"),
        SamplingError::UnknownIndex(_) => (BAD, "unknown_suggestion_index"),
        SamplingError::UnresolvedFilter => (BAD, "unresolved_filter"),
        SamplingError::Typing(e) => typing_code(e),
        SamplingError::Neighbor(e) => neighbor_code(e),
    }
}

fn model_code(e: &ModelError) -> (StatusCode, &'static str) {
    match e {
        ModelError::DegenerateTraining { .. } => (UNPROCESSABLE, "degenerate_training"),
        ModelError::TooFewForFolds { .. } => (UNPROCESSABLE, "too_few_for_folds"),
        ModelError::InvalidConfig(_) => (BAD, "invalid_model_config"),
        ModelError::DimensionMismatch { .. } => (BAD, "dimension_mismatch"),
        ModelError::Cancelled => (StatusCode::CONFLICT, "cancelled"),
        ModelError::Metrics(_) => (StatusCode::INTERNAL_SERVER_ERROR, "metrics"),
    }
}

fn projection_code(e: &ProjectionError) -> (StatusCode, &'static str) {
    match e {
        ProjectionError::TooFewInstances { .. } => (UNPROCESSABLE, "too_few_for_projection"),
        ProjectionError::NeighborsTooLarge { .. } => (BAD, "projection_neighbors_too_large"),
        ProjectionError::InvalidMinDist(_) => (BAD, "invalid_min_dist"),
        ProjectionError::EmptySweep => (BAD, "empty_min_dist_sweep"),
        ProjectionError::IdCountMismatch { .. } => (BAD, "id_count_mismatch"),
        ProjectionError::NonFinite => (StatusCode::INTERNAL_SERVER_ERROR, "projection_non_finite"),
    }
}

/// Status and stable code of a session error (the innermost one for
/// replay step failures).
pub fn session_code(e: &SessionError) -> (StatusCode, &'static str) {
    match e {
        SessionError::Dataset(_) => (BAD, "invalid_dataset"),
        SessionError::Typing(e) => typing_code(e),
        SessionError::Neighbor(e) => neighbor_code(e),
        SessionError::Sampling(e) => sampling_code(e),
        SessionError::Model(e) => model_code(e),
        SessionError::Projection(e) => projection_code(e),
        SessionError::StaleSuggestion { .. } => (StatusCode::CONFLICT, "stale_suggestion"),
        SessionError::UnknownProjection(_) => (BAD, "unknown_projection"),
        SessionError::ActionMismatch { .. } => (BAD, "action_mismatch"),
        SessionError::SchemaVersion { .. } => (BAD, "schema_version"),
        SessionError::Schema { .. } => (BAD, "invalid_schema"),
        SessionError::DatasetMismatch { .. } => (BAD, "dataset_mismatch"),
        SessionError::ReplayMismatch { .. } => (UNPROCESSABLE, "replay_mismatch"),
        SessionError::Step { source, .. } => session_code(source),
    }
}

impl From<SessionError> for ApiError {
    fn from(e: SessionError) -> Self {
        let (status, code) = session_code(&e);
        let mut err = ApiError::new(status, code, &e);
        match &e {
            SessionError::StaleSuggestion { current, .. } => {
                err = err.with_details(json!({ "current_version": current }));
            }
            SessionError::Step { index, .. } => {
                err = err.with_details(json!({ "step": index }));
            }
            SessionError::Schema { path, .. } => {
                err = err.with_details(json!({ "field": path }));
            }
            _ => {}
        }
        err
    }
}

impl From<SamplingError> for ApiError {
    fn from(e: SamplingError) -> Self {
        SessionError::from(e).into()
    }
}

impl From<DatasetError> for ApiError {
    fn from(e: DatasetError) -> Self {
        ApiError::bad_request("invalid_dataset", e)
    }
}
