use std::collections::BTreeSet;
use std::sync::Arc;

use axum::extract::rejection::JsonRejection;
use axum::extract::{Multipart, Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use curate_core::dataset::InstanceId;
use curate_core::model::ModelReport;
use curate_core::projection::ProjectionCandidate;
use curate_core::sampling::{Acceptance, SamplingRequest, SamplingSuggestion};
use curate_core::session::{
    sankey, PerformanceDelta, Session, SessionConfig, SessionError, SessionFile, SessionStep,
    StepMetrics, TestConfusionOverlay,
};
use curate_core::typing::{InstanceType, TypeDistribution};

use crate::error::ApiError;
use crate::state::{AppState, DatasetInfo, Job, SessionSlot};

type AppResult<T> = Result<T, ApiError>;

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/health", get(|| async { Json(json!({ "status": "ok" })) }))
        .route("/datasets", get(list_datasets).post(upload_dataset))
        .route("/datasets/{id}", get(get_dataset))
        .route("/sessions", post(create_session))
        .route("/sessions/{id}", get(get_session))
        .route("/sessions/{id}/projections", get(get_projections))
        .route("/sessions/{id}/projection", post(select_projection))
        .route("/sessions/{id}/types", get(get_types).post(toggle_types))
        .route("/sessions/{id}/propose", post(propose))
        .route("/sessions/{id}/confirm", post(confirm))
        .route("/sessions/{id}/train", post(retrain))
        .route("/sessions/{id}/report", get(get_report))
        .route("/sessions/{id}/steps", get(get_steps))
        .route("/sessions/{id}/overlay", get(get_overlay))
        .route("/sessions/{id}/export", get(export_session))
        .route("/sessions/{id}/import", post(import_session))
        .route("/jobs/{id}", get(get_job))
        .with_state(state)
}

fn body<T>(payload: Result<Json<T>, JsonRejection>) -> AppResult<T> {
    payload
        .map(|Json(v)| v)
        .map_err(|e| ApiError::bad_request("invalid_request", e.body_text()))
}

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> AppResult<T> + Send + 'static) -> AppResult<T> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::internal(format!("worker failed: {e}")))?
}

fn to_value<T: Serialize>(v: &T) -> AppResult<Value> {
    serde_json::to_value(v).map_err(ApiError::internal)
}

async fn list_datasets(State(state): State<Arc<AppState>>) -> Json<Vec<DatasetInfo>> {
    Json(state.datasets().iter().map(|d| d.info()).collect())
}

async fn get_dataset(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> AppResult<Json<DatasetInfo>> {
    Ok(Json(state.dataset(&id)?.info()))
}

/// Multipart upload: a `file` part with the CSV and an optional
/// `label_column` part (defaults to the last column).
async fn upload_dataset(
    State(state): State<Arc<AppState>>,
    mut multipart: Multipart,
) -> AppResult<(StatusCode, Json<DatasetInfo>)> {
    let mut csv_text = None;
    let mut name = None;
    let mut label_column = None;
    while let Some(field) = multipart
        .next_field()
        .await
        .map_err(|e| ApiError::bad_request("invalid_upload", e.body_text()))?
    {
        match field.name() {
            Some("file") => {
                name = field.file_name().map(str::to_string);
                csv_text = Some(
                    field
                        .text()
                        .await
                        .map_err(|e| ApiError::bad_request("invalid_upload", e.body_text()))?,
                );
            }
            Some("label_column") => {
                let text = field
                    .text()
                    .await
                    .map_err(|e| ApiError::bad_request("invalid_upload", e.body_text()))?;
                if !text.trim().is_empty() {
                    label_column = Some(text.trim().to_string());
                }
            }
            _ => {}
        }
    }
    let csv_text = csv_text.ok_or_else(|| ApiError::bad_request("invalid_upload", "missing `file` part"))?;
    let name = name.unwrap_or_else(|| "upload.csv".to_string());
    let entry = blocking({
        let state = state.clone();
        move || state.add_dataset(&name, &csv_text, label_column.as_deref())
    })
    .await?;
    Ok((StatusCode::CREATED, Json(entry.info())))
}

#[derive(Debug, Deserialize)]
struct CreateSession {
    dataset_id: String,
    #[serde(default)]
    config: Option<SessionConfig>,
}

#[derive(Debug, Serialize)]
struct SessionSummary {
    session_id: String,
    dataset_id: String,
    version: u64,
    k: usize,
    train_size: usize,
    class_counts: Vec<usize>,
    metrics: StepMetrics,
    report: ModelReport,
}

fn summary(slot: &SessionSlot, s: &Session) -> SessionSummary {
    SessionSummary {
        session_id: slot.id.clone(),
        dataset_id: slot.dataset_id.clone(),
        version: s.version(),
        k: s.k(),
        train_size: s.view().len(),
        class_counts: s.view().class_counts(),
        metrics: StepMetrics::from_report(s.report()),
        report: s.report().clone(),
    }
}

async fn create_session(
    State(state): State<Arc<AppState>>,
    payload: Result<Json<CreateSession>, JsonRejection>,
) -> AppResult<(StatusCode, Json<SessionSummary>)> {
    let req = body(payload)?;
    let entry = state.dataset(&req.dataset_id)?;
    let config = req.config.unwrap_or_else(|| state.defaults.clone());
    let session = blocking(move || {
        let mut s = Session::start(entry.dataset.clone(), &entry.label_column, config)?;
        s.set_record_time(true);
        Ok(s)
    })
    .await?;
    let slot = state.add_session(&req.dataset_id, session);
    let snap = slot.snapshot();
    Ok((StatusCode::CREATED, Json(summary(&slot, &snap))))
}

async fn get_session(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> AppResult<Json<SessionSummary>> {
    let slot = state.session(&id)?;
    let snap = slot.snapshot();
    Ok(Json(summary(&slot, &snap)))
}

#[derive(Debug, Serialize)]
struct ProjectionsView<'a> {
    version: u64,
    selected: usize,
    candidates: &'a [ProjectionCandidate],
}

async fn get_projections(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> AppResult<Response> {
    let snap = state.session(&id)?.snapshot();
    Ok(Json(ProjectionsView {
        version: snap.version(),
        selected: snap.selected_projection().n_neighbors,
        candidates: snap.grid(),
    })
    .into_response())
}

#[derive(Debug, Serialize)]
struct TypedInstance {
    id: InstanceId,
    class: usize,
    #[serde(rename = "type")]
    instance_type: InstanceType,
    same_class_count: usize,
    position: [f64; 2],
}

#[derive(Debug, Serialize)]
struct TypesView {
    version: u64,
    k: usize,
    active_types: BTreeSet<InstanceType>,
    distribution: TypeDistribution,
    instances: Vec<TypedInstance>,
}

fn types_view(s: &Session) -> TypesView {
    let positions = s.train_positions();
    let view = s.view();
    TypesView {
        version: s.version(),
        k: s.k(),
        active_types: s.active_types().clone(),
        distribution: s.type_distribution(),
        instances: view
            .assignments
            .iter()
            .zip(&view.labels)
            .map(|(a, &class)| TypedInstance {
                id: a.id,
                class,
                instance_type: a.instance_type,
                same_class_count: a.same_class_count,
                position: positions[&a.id],
            })
            .collect(),
    }
}

async fn get_types(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> AppResult<Json<TypesView>> {
    let snap = state.session(&id)?.snapshot();
    Ok(Json(types_view(&snap)))
}

/// Runs a short write on a copy of the session and swaps it in.
async fn write<F>(slot: Arc<SessionSlot>, f: F) -> AppResult<Arc<Session>>
where
    F: FnOnce(&mut Session) -> Result<(), SessionError> + Send + 'static,
{
    let _guard = slot.writer.lock().await;
    let base = slot.snapshot();
    let updated = blocking(move || {
        let mut s = (*base).clone();
        f(&mut s)?;
        Ok(s)
    })
    .await?;
    slot.replace(updated);
    Ok(slot.snapshot())
}

#[derive(Debug, Deserialize)]
struct SelectProjection {
    n_neighbors: usize,
}

async fn select_projection(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    payload: Result<Json<SelectProjection>, JsonRejection>,
) -> AppResult<Json<TypesView>> {
    let req = body(payload)?;
    let slot = state.session(&id)?;
    let snap = write(slot, move |s| s.select_projection(req.n_neighbors).map(|_| ())).await?;
    Ok(Json(types_view(&snap)))
}

#[derive(Debug, Deserialize)]
struct ToggleTypes {
    types: BTreeSet<InstanceType>,
}

async fn toggle_types(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    payload: Result<Json<ToggleTypes>, JsonRejection>,
) -> AppResult<Json<TypesView>> {
    let req = body(payload)?;
    let slot = state.session(&id)?;
    let snap = write(slot, move |s| s.toggle_types(req.types).map(|_| ())).await?;
    Ok(Json(types_view(&snap)))
}

#[derive(Debug, Serialize)]
struct ProposalView {
    proposal_id: String,
    version: u64,
    request: SamplingRequest,
    suggestion: SamplingSuggestion,
}

async fn propose(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    payload: Result<Json<SamplingRequest>, JsonRejection>,
) -> AppResult<Json<ProposalView>> {
    let request = body(payload)?;
    let slot = state.session(&id)?;
    let snap = slot.snapshot();
    let proposal = blocking(move || Ok(snap.propose(&request)?)).await?;
    let proposal_id = state.proposal_id();
    slot.store_proposal(proposal_id.clone(), proposal.clone());
    Ok(Json(ProposalView {
        proposal_id,
        version: proposal.version,
        request: proposal.request,
        suggestion: proposal.suggestion,
    }))
}

#[derive(Debug, Deserialize)]
struct ConfirmRequest {
    proposal_id: String,
    #[serde(default = "accept_all")]
    acceptance: Acceptance,
}

fn accept_all() -> Acceptance {
    Acceptance::All
}

#[derive(Debug, Default, Deserialize)]
struct WaitQuery {
    #[serde(default)]
    wait: bool,
}

#[derive(Debug, Serialize)]
struct JobAccepted {
    job_id: String,
    status_url: String,
}

/// Starts a training job. With `wait` the response is the job result (or
/// its error) instead of the job handle.
async fn spawn_training<F>(state: &AppState, slot: Arc<SessionSlot>, kind: &str, wait: bool, f: F) -> AppResult<Response>
where
    F: FnOnce(&mut Session, &curate_core::model::TrainControl) -> Result<SessionStep, SessionError> + Send + 'static,
{
    let job = state.add_job(kind, &slot.id);
    let task = tokio::spawn(run_job(job.clone(), slot, f));
    if wait {
        task.await.map_err(|e| ApiError::internal(format!("job failed: {e}")))?;
        let view = job.view();
        return match (view.result, view.error) {
            (Some(v), _) => Ok((StatusCode::CREATED, Json(v)).into_response()),
            (None, Some(e)) => Err(e),
            (None, None) => Err(ApiError::internal("job finished without a result")),
        };
    }
    Ok((
        StatusCode::ACCEPTED,
        Json(JobAccepted {
            status_url: format!("/jobs/{}", job.id),
            job_id: job.id.clone(),
        }),
    )
        .into_response())
}

async fn run_job<F>(job: Arc<Job>, slot: Arc<SessionSlot>, f: F)
where
    F: FnOnce(&mut Session, &curate_core::model::TrainControl) -> Result<SessionStep, SessionError> + Send + 'static,
{
    let _guard = slot.writer.lock().await;
    let base = slot.snapshot();
    let control = job.control.clone();
    let outcome = blocking(move || {
        let mut s = (*base).clone();
        let step = f(&mut s, &control)?;
        Ok((s, step))
    })
    .await;
    let result = outcome.and_then(|(s, step)| {
        slot.replace(s);
        to_value(&step)
    });
    if let Err(e) = &result {
        log::warn!("job {} failed: {}", job.id, e);
    }
    job.finish(result);
}

async fn confirm(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    Query(q): Query<WaitQuery>,
    payload: Result<Json<ConfirmRequest>, JsonRejection>,
) -> AppResult<Response> {
    let req = body(payload)?;
    let slot = state.session(&id)?;
    let proposal = slot
        .proposal(&req.proposal_id)
        .ok_or_else(|| ApiError::not_found("proposal", &req.proposal_id))?;
    let current = slot.snapshot().version();
    if proposal.version != current {
        return Err(SessionError::StaleSuggestion {
            proposed: proposal.version,
            current,
        }
        .into());
    }
    spawn_training(&state, slot, "confirm", q.wait, move |s, control| {
        s.confirm_with_control(&proposal, &req.acceptance, control).cloned()
    })
    .await
}

async fn retrain(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    Query(q): Query<WaitQuery>,
) -> AppResult<Response> {
    let slot = state.session(&id)?;
    spawn_training(&state, slot, "train", q.wait, |s, _| s.retrain().cloned()).await
}

#[derive(Debug, Serialize)]
struct ReportView<'a> {
    version: u64,
    feature_names: &'a [String],
    class_names: &'a [String],
    feature_importance_order: Vec<usize>,
    report: &'a ModelReport,
}

async fn get_report(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> AppResult<Response> {
    let snap = state.session(&id)?.snapshot();
    Ok(Json(ReportView {
        version: snap.version(),
        feature_names: snap.dataset().feature_names(),
        class_names: snap.dataset().class_names(),
        feature_importance_order: snap.feature_importance_order(),
        report: snap.report(),
    })
    .into_response())
}

#[derive(Debug, Serialize)]
struct StepsView<'a> {
    version: u64,
    original_train_count: usize,
    train_size: usize,
    us_total: usize,
    os_total: usize,
    steps: &'a [SessionStep],
    deltas: Vec<PerformanceDelta>,
}

async fn get_steps(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> AppResult<Response> {
    let snap = state.session(&id)?.snapshot();
    let flows: Vec<_> = snap.steps().iter().flat_map(|s| s.sankey.iter().copied()).collect();
    let (us_total, os_total) = sankey::bin_totals(&flows);
    Ok(Json(StepsView {
        version: snap.version(),
        original_train_count: snap.original_train_count(),
        train_size: snap.view().len(),
        us_total,
        os_total,
        steps: snap.steps(),
        deltas: snap.deltas(),
    })
    .into_response())
}

async fn get_overlay(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
) -> AppResult<Json<TestConfusionOverlay>> {
    let snap = state.session(&id)?.snapshot();
    Ok(Json(blocking(move || Ok(snap.overlay_test())).await?))
}

async fn export_session(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> AppResult<Response> {
    let snap = state.session(&id)?.snapshot();
    Ok(([(header::CONTENT_TYPE, "application/json")], snap.export_json()).into_response())
}

/// Replaces the session with the replay of an exported session file.
async fn import_session(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    text: String,
) -> AppResult<Json<SessionSummary>> {
    let slot = state.session(&id)?;
    let entry = state.dataset(&slot.dataset_id)?;
    let _guard = slot.writer.lock().await;
    let session = blocking(move || {
        let file = SessionFile::parse(&text)?;
        let mut s = file.replay(entry.dataset.clone(), None)?;
        s.set_record_time(true);
        Ok(s)
    })
    .await?;
    slot.replace(session);
    slot.clear_proposals();
    let snap = slot.snapshot();
    Ok(Json(summary(&slot, &snap)))
}

async fn get_job(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> AppResult<Response> {
    Ok(Json(state.job(&id)?.view()).into_response())
}
