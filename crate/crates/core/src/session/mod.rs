//! The curation workflow: typed training set, projection grid, the
//! proposal/confirmation loop and its step history.

pub mod export;
pub mod overlay;
pub mod sankey;

use std::collections::{BTreeMap, BTreeSet};
use std::time::{SystemTime, UNIX_EPOCH};

use ndarray::Array2;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{
    stratified_split, DatasetError, DistanceSpace, InstanceId, LabeledDataset, NormalizationStats,
    SplitAssignment, SyntheticRow,
};
use crate::model::{self, GbdtModel, ModelConfig, ModelError, ModelReport, PartitionData, TrainControl};
use crate::neighbors::{NeighborError, NeighborIndex};
use crate::projection::{self, ProjectionCandidate, ProjectionConfig, ProjectionError, UmapEmbedder};
use crate::sampling::{
    self, Acceptance, Addition, Mode, Removal, SamplingError, SamplingRequest, SamplingSuggestion,
    TrainView,
};
use crate::typing::{self, BandRule, InstanceType, TypeAssignment, TypeDistribution, TypingError};

pub use export::{DatasetRef, SessionFile, SCHEMA_VERSION};
pub use overlay::{OverlayPoint, TestConfusionOverlay};
pub use sankey::{SankeyFlow, SankeyTarget};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SessionError {
    #[error("dataset: {0}")]
    Dataset(String),
    #[error(transparent)]
    Typing(#[from] TypingError),
    #[error(transparent)]
    Neighbor(#[from] NeighborError),
    #[error(transparent)]
    Sampling(#[from] SamplingError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Projection(#[from] ProjectionError),
    #[error("suggestion was made for version {proposed}, the session is at version {current}")]
    StaleSuggestion { proposed: u64, current: u64 },
    #[error("no projection with n_neighbors = {0}")]
    UnknownProjection(usize),
    #[error("{action} cannot run {algorithm}")]
    ActionMismatch { action: String, algorithm: String },
    #[error("unsupported schema version {found}, expected {expected}")]
    SchemaVersion { found: u32, expected: u32 },
    #[error("session file is invalid at {path}: {message}")]
    Schema { path: String, message: String },
    #[error("dataset hash {found} does not match the session's {expected}")]
    DatasetMismatch { expected: String, found: String },
    #[error("replayed step {step} does not reproduce the recorded metrics")]
    ReplayMismatch { step: usize },
    #[error("step {index}: {source}")]
    Step {
        index: usize,
        #[source]
        source: Box<SessionError>,
    },
}

impl From<DatasetError> for SessionError {
    fn from(e: DatasetError) -> Self {
        SessionError::Dataset(e.to_string())
    }
}

impl SessionError {
    /// The innermost error, past any step wrapper.
    pub fn root(&self) -> &SessionError {
        match self {
            SessionError::Step { source, .. } => source.root(),
            e => e,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SessionConfig {
    pub train_fraction: f64,
    pub split_seed: u64,
    pub model: ModelConfig,
    pub projection: ProjectionConfig,
    pub band_rule: BandRule,
    pub distance_space: DistanceSpace,
    pub initial_k: usize,
}

impl Default for SessionConfig {
    fn default() -> Self {
        Self {
            train_fraction: 0.75,
            split_seed: 0,
            model: ModelConfig::default(),
            projection: ProjectionConfig::default(),
            band_rule: BandRule::default(),
            distance_space: DistanceSpace::default(),
            initial_k: typing::DEFAULT_K,
        }
    }
}

impl SessionConfig {
    /// Replaces every seed (split, model, projection).
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.split_seed = seed;
        self.model.seed = seed;
        self.projection.seed = seed;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricPair {
    pub balanced_accuracy: f64,
    pub f1_macro: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepMetrics {
    pub train: MetricPair,
    pub test: MetricPair,
}

impl StepMetrics {
    pub fn from_report(r: &ModelReport) -> Self {
        Self {
            train: MetricPair {
                balanced_accuracy: r.train.balanced_accuracy,
                f1_macro: r.train.f1_macro,
            },
            test: MetricPair {
                balanced_accuracy: r.test.balanced_accuracy,
                f1_macro: r.test.f1_macro,
            },
        }
    }
}

/// What a step did. Serialized with a `kind` tag.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StepAction {
    Train,
    SelectProjection { n_neighbors: usize },
    ToggleTypes { types: BTreeSet<InstanceType> },
    Undersample { request: SamplingRequest },
    Oversample { request: SamplingRequest },
}

pub const STEP_KINDS: [&str; 5] = ["train", "select_projection", "toggle_types", "undersample", "oversample"];

impl StepAction {
    pub fn kind(&self) -> &'static str {
        match self {
            StepAction::Train => STEP_KINDS[0],
            StepAction::SelectProjection { .. } => STEP_KINDS[1],
            StepAction::ToggleTypes { .. } => STEP_KINDS[2],
            StepAction::Undersample { .. } => STEP_KINDS[3],
            StepAction::Oversample { .. } => STEP_KINDS[4],
        }
    }

    pub fn sampling(request: SamplingRequest) -> Self {
        match request.algorithm.mode() {
            Mode::Under => StepAction::Undersample { request },
            Mode::Over => StepAction::Oversample { request },
        }
    }
}

/// A synthetic row as confirmed, with the id it received.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfirmedAddition {
    pub id: InstanceId,
    #[serde(flatten)]
    pub addition: Addition,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionStep {
    pub index: usize,
    #[serde(flatten)]
    pub action: StepAction,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub acceptance: Option<Acceptance>,
    #[serde(default)]
    pub removals: Vec<Removal>,
    #[serde(default)]
    pub additions: Vec<ConfirmedAddition>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metrics_before: Option<StepMetrics>,
    pub metrics_after: StepMetrics,
    pub train_size: usize,
    pub class_counts: Vec<usize>,
    pub k: usize,
    pub sankey: Vec<SankeyFlow>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timestamp: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerformanceDelta {
    pub step_index: usize,
    pub delta_balanced_accuracy: f64,
    pub delta_f1: f64,
}

/// A suggestion bound to the session version it was computed against.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Proposal {
    pub version: u64,
    pub request: SamplingRequest,
    pub suggestion: SamplingSuggestion,
}

#[derive(Debug, Clone)]
pub struct Session {
    config: SessionConfig,
    label_column: String,
    dataset_hash: String,
    dataset: LabeledDataset,
    split: SplitAssignment,
    stats: NormalizationStats,
    grid: Vec<ProjectionCandidate>,
    grid_index: NeighborIndex,
    view: TrainView,
    active_types: BTreeSet<InstanceType>,
    model: GbdtModel,
    report: ModelReport,
    steps: Vec<SessionStep>,
    version: u64,
    original_train_count: usize,
    record_time: bool,
}

fn now() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

fn type_counts(view: &TrainView, rows: impl IntoIterator<Item = usize>) -> [usize; 4] {
    let mut c = [0; 4];
    for r in rows {
        c[view.instance_type(r).index()] += 1;
    }
    c
}

impl Session {
    /// Splits, types at the initial k, computes the projection grid and
    /// trains the baseline (step 0).
    pub fn start(
        dataset: LabeledDataset,
        label_column: impl Into<String>,
        config: SessionConfig,
    ) -> Result<Self, SessionError> {
        Self::start_with_control(dataset, label_column, config, &TrainControl::new())
    }

    pub fn start_with_control(
        dataset: LabeledDataset,
        label_column: impl Into<String>,
        config: SessionConfig,
        control: &TrainControl,
    ) -> Result<Self, SessionError> {
        config.model.validate()?;
        typing::check_k(config.initial_k, usize::MAX)?;
        let split = stratified_split(&dataset, config.train_fraction, config.split_seed)?;
        let stats = NormalizationStats::fit(&dataset, &split)?;
        let view = TrainView::build(
            &dataset,
            &split,
            &stats,
            config.distance_space,
            config.initial_k,
            config.band_rule,
        )?;
        let embedder = UmapEmbedder {
            n_epochs: config.projection.n_epochs,
            ..UmapEmbedder::default()
        };
        let grid = projection::projection_grid(&embedder, view.index.points(), &view.ids, &config.projection)?;
        let grid_index = view.index.clone();
        let (model, report) = Self::fit(&dataset, &split, &config.model, control)?;
        let mut session = Self {
            label_column: label_column.into(),
            dataset_hash: dataset.content_hash(),
            original_train_count: split.train_ids.len(),
            config,
            dataset,
            split,
            stats,
            grid,
            grid_index,
            view,
            active_types: InstanceType::ALL.into_iter().collect(),
            model,
            report,
            steps: Vec::new(),
            version: 0,
            record_time: false,
        };
        let all: Vec<usize> = (0..session.view.len()).collect();
        let baseline = SessionStep {
            index: 0,
            action: StepAction::Train,
            acceptance: None,
            removals: Vec::new(),
            additions: Vec::new(),
            metrics_before: None,
            metrics_after: StepMetrics::from_report(&session.report),
            train_size: session.view.len(),
            class_counts: session.view.class_counts(),
            k: session.view.k,
            sankey: sankey::step_flows(0, type_counts(&session.view, all), [0; 4], [0; 4]),
            timestamp: None,
        };
        session.steps.push(baseline);
        Ok(session)
    }

    fn fit(
        ds: &LabeledDataset,
        split: &SplitAssignment,
        config: &ModelConfig,
        control: &TrainControl,
    ) -> Result<(GbdtModel, ModelReport), SessionError> {
        let tr = split.train_rows(ds);
        let te = split.test_rows(ds);
        let pick = |rows: &[usize]| -> (Array2<f64>, Vec<usize>, Vec<InstanceId>) {
            (
                ds.select_rows(rows),
                rows.iter().map(|&r| ds.labels()[r]).collect(),
                rows.iter().map(|&r| ds.ids()[r]).collect(),
            )
        };
        let (trx, try_, tri) = pick(&tr);
        let (tex, tey, tei) = pick(&te);
        Ok(model::train(
            PartitionData {
                x: trx.view(),
                labels: &try_,
                ids: &tri,
            },
            PartitionData {
                x: tex.view(),
                labels: &tey,
                ids: &tei,
            },
            ds.class_names(),
            config,
            control,
        )?)
    }

    /// Stamp new steps with the wall-clock time (off by default so headless
    /// replays stay reproducible).
    pub fn set_record_time(&mut self, on: bool) {
        self.record_time = on;
    }

    pub fn config(&self) -> &SessionConfig {
        &self.config
    }

    pub fn label_column(&self) -> &str {
        &self.label_column
    }

    pub fn dataset_hash(&self) -> &str {
        &self.dataset_hash
    }

    pub fn dataset(&self) -> &LabeledDataset {
        &self.dataset
    }

    pub fn split(&self) -> &SplitAssignment {
        &self.split
    }

    pub fn stats(&self) -> &NormalizationStats {
        &self.stats
    }

    pub fn version(&self) -> u64 {
        self.version
    }

    pub fn k(&self) -> usize {
        self.view.k
    }

    pub fn view(&self) -> &TrainView {
        &self.view
    }

    pub fn grid(&self) -> &[ProjectionCandidate] {
        &self.grid
    }

    pub fn selected_projection(&self) -> &ProjectionCandidate {
        self.grid
            .iter()
            .find(|c| c.n_neighbors == self.view.k)
            .unwrap_or(&self.grid[0])
    }

    pub fn active_types(&self) -> &BTreeSet<InstanceType> {
        &self.active_types
    }

    pub fn model(&self) -> &GbdtModel {
        &self.model
    }

    pub fn report(&self) -> &ModelReport {
        &self.report
    }

    pub fn steps(&self) -> &[SessionStep] {
        &self.steps
    }

    pub fn original_train_count(&self) -> usize {
        self.original_train_count
    }

    pub fn assignments(&self) -> &[TypeAssignment] {
        &self.view.assignments
    }

    pub fn type_distribution(&self) -> TypeDistribution {
        typing::type_distribution(&self.view.assignments, &self.view.labels, self.view.n_classes())
    }

    pub fn feature_importance_order(&self) -> Vec<usize> {
        model::feature_importance_order(&self.report.feature_importance)
    }

    /// Test-set change of each step after the baseline.
    pub fn deltas(&self) -> Vec<PerformanceDelta> {
        self.steps
            .iter()
            .filter_map(|s| {
                s.metrics_before.map(|b| PerformanceDelta {
                    step_index: s.index,
                    delta_balanced_accuracy: s.metrics_after.test.balanced_accuracy
                        - b.test.balanced_accuracy,
                    delta_f1: s.metrics_after.test.f1_macro - b.test.f1_macro,
                })
            })
            .collect()
    }

    fn metrics(&self) -> StepMetrics {
        StepMetrics::from_report(&self.report)
    }

    fn push_step(
        &mut self,
        action: StepAction,
        acceptance: Option<Acceptance>,
        removals: Vec<Removal>,
        additions: Vec<ConfirmedAddition>,
        before: StepMetrics,
        flows: Vec<SankeyFlow>,
    ) -> &SessionStep {
        let index = self.steps.len();
        let step = SessionStep {
            index,
            action,
            acceptance,
            removals,
            additions,
            metrics_before: Some(before),
            metrics_after: self.metrics(),
            train_size: self.view.len(),
            class_counts: self.view.class_counts(),
            k: self.view.k,
            sankey: flows
                .into_iter()
                .map(|f| SankeyFlow { step_index: index, ..f })
                .collect(),
            timestamp: self.record_time.then(now),
        };
        self.steps.push(step);
        self.version += 1;
        self.steps.last().expect("just pushed")
    }

    fn unchanged_flows(&self) -> Vec<SankeyFlow> {
        let all = 0..self.view.len();
        sankey::step_flows(0, type_counts(&self.view, all), [0; 4], [0; 4])
    }

    /// Makes the candidate with this `n_neighbors` the active projection and
    /// its k the typing and sampling default. Reselecting is a no-op.
    pub fn select_projection(&mut self, n_neighbors: usize) -> Result<Option<&SessionStep>, SessionError> {
        if !self.grid.iter().any(|c| c.n_neighbors == n_neighbors) {
            return Err(SessionError::UnknownProjection(n_neighbors));
        }
        if n_neighbors == self.view.k {
            return Ok(None);
        }
        let before = self.metrics();
        self.view = TrainView::build(
            &self.dataset,
            &self.split,
            &self.stats,
            self.config.distance_space,
            n_neighbors,
            self.config.band_rule,
        )?;
        let flows = self.unchanged_flows();
        Ok(Some(self.push_step(
            StepAction::SelectProjection { n_neighbors },
            None,
            Vec::new(),
            Vec::new(),
            before,
            flows,
        )))
    }

    /// Sets the types sampling requests may touch; requests are intersected
    /// with this set.
    pub fn toggle_types(&mut self, types: BTreeSet<InstanceType>) -> Result<&SessionStep, SessionError> {
        if types.is_empty() {
            return Err(SamplingError::NoIncludedTypes.into());
        }
        let before = self.metrics();
        self.active_types = types.clone();
        let flows = self.unchanged_flows();
        Ok(self.push_step(StepAction::ToggleTypes { types }, None, Vec::new(), Vec::new(), before, flows))
    }

    fn effective_request(&self, request: &SamplingRequest) -> SamplingRequest {
        let mut r = request.clone();
        r.scope.included_types = r
            .scope
            .included_types
            .intersection(&self.active_types)
            .copied()
            .collect();
        r
    }

    /// Runs a sampling algorithm against the current version. Read-only.
    pub fn propose(&self, request: &SamplingRequest) -> Result<Proposal, SessionError> {
        let suggestion = sampling::propose(&self.view, &self.effective_request(request))?;
        Ok(Proposal {
            version: self.version,
            request: request.clone(),
            suggestion,
        })
    }

    pub fn confirm(&mut self, proposal: &Proposal, acceptance: &Acceptance) -> Result<&SessionStep, SessionError> {
        self.confirm_with_control(proposal, acceptance, &TrainControl::new())
    }

    /// Applies the accepted part of a proposal, retypes and retrains. On any
    /// error the session is left as it was.
    pub fn confirm_with_control(
        &mut self,
        proposal: &Proposal,
        acceptance: &Acceptance,
        control: &TrainControl,
    ) -> Result<&SessionStep, SessionError> {
        if proposal.version != self.version {
            return Err(SessionError::StaleSuggestion {
                proposed: proposal.version,
                current: self.version,
            });
        }
        let view = &self.view;
        let resolved = acceptance.resolve(&proposal.suggestion, |id| {
            view.row_of(id).map(|r| view.instance_type(r))
        })?;
        let confirmed = sampling::filter_suggestion(&proposal.suggestion, &resolved)?;
        log::info!(
            "{}: accepted {} of {} items",
            proposal.suggestion.algorithm,
            confirmed.removals.len() + confirmed.additions.len(),
            proposal.suggestion.removals.len() + proposal.suggestion.additions.len()
        );

        let removal_ids: BTreeSet<InstanceId> = confirmed.removals.iter().map(|r| r.id).collect();
        let rows: Vec<SyntheticRow> = confirmed
            .additions
            .iter()
            .map(|a| SyntheticRow {
                features: a.vector.clone(),
                label: a.class,
            })
            .collect();
        let outcome = self.dataset.apply_step(&self.split, &removal_ids, &rows)?;
        let (model, report) = Self::fit(&outcome.dataset, &outcome.split, &self.config.model, control)?;
        let new_view = TrainView::build(
            &outcome.dataset,
            &outcome.split,
            &self.stats,
            self.config.distance_space,
            self.view.k,
            self.config.band_rule,
        )?;

        let population = type_counts(&self.view, 0..self.view.len());
        let removed = type_counts(&self.view, removal_ids.iter().filter_map(|&id| self.view.row_of(id)));
        let added = type_counts(
            &self.view,
            confirmed.additions.iter().filter_map(|a| self.view.row_of(a.parent)),
        );
        let flows = sankey::step_flows(0, population, removed, added);

        let before = self.metrics();
        self.dataset = outcome.dataset;
        self.split = outcome.split;
        self.view = new_view;
        self.model = model;
        self.report = report;
        let additions = outcome
            .added_ids
            .iter()
            .zip(confirmed.additions)
            .map(|(&id, addition)| ConfirmedAddition { id, addition })
            .collect();
        Ok(self.push_step(
            StepAction::sampling(proposal.request.clone()),
            Some(resolved),
            confirmed.removals,
            additions,
            before,
            flows,
        ))
    }

    /// Retrains with the current configuration and records the result.
    pub fn retrain(&mut self) -> Result<&SessionStep, SessionError> {
        let before = self.metrics();
        let (model, report) = Self::fit(&self.dataset, &self.split, &self.config.model, &TrainControl::new())?;
        self.model = model;
        self.report = report;
        let flows = self.unchanged_flows();
        Ok(self.push_step(StepAction::Train, None, Vec::new(), Vec::new(), before, flows))
    }

    /// Propose and confirm in one go.
    pub fn sample(&mut self, request: &SamplingRequest, acceptance: &Acceptance) -> Result<&SessionStep, SessionError> {
        let proposal = self.propose(request)?;
        self.confirm(&proposal, acceptance)
    }

    /// Replays one recorded action.
    pub fn apply(&mut self, action: &StepAction, acceptance: Option<&Acceptance>) -> Result<(), SessionError> {
        match action {
            StepAction::Train => {
                self.retrain()?;
            }
            StepAction::SelectProjection { n_neighbors } => {
                self.select_projection(*n_neighbors)?;
            }
            StepAction::ToggleTypes { types } => {
                self.toggle_types(types.clone())?;
            }
            StepAction::Undersample { request } | StepAction::Oversample { request } => {
                let expected = match action {
                    StepAction::Undersample { .. } => Mode::Under,
                    _ => Mode::Over,
                };
                if request.algorithm.mode() != expected {
                    return Err(SessionError::ActionMismatch {
                        action: action.kind().to_string(),
                        algorithm: request.algorithm.to_string(),
                    });
                }
                self.sample(request, acceptance.unwrap_or(&Acceptance::All))?;
            }
        }
        Ok(())
    }

    /// 2-D positions of the current training rows. Rows outside the grid
    /// (synthetic ones) are anchored like test points.
    pub fn train_positions(&self) -> BTreeMap<InstanceId, [f64; 2]> {
        let cand = self.selected_projection();
        self.view
            .ids
            .iter()
            .enumerate()
            .map(|(row, &id)| {
                let pos = cand.coords_of(id).unwrap_or_else(|| {
                    overlay::anchor_position(
                        &self.grid_index,
                        &cand.coords,
                        &self.view.index.points().row(row).to_vec(),
                    )
                });
                (id, pos)
            })
            .collect()
    }

    /// Test points placed into the selected embedding, with the current
    /// model's verdict.
    pub fn overlay_test(&self) -> TestConfusionOverlay {
        let cand = self.selected_projection();
        let ds = &self.dataset;
        let points = self
            .split
            .test_rows(ds)
            .into_iter()
            .map(|r| {
                let id = ds.ids()[r];
                let point = self.config.distance_space.project_point(ds.row(r), &self.stats);
                let predicted = self
                    .report
                    .prediction(id)
                    .map(|p| p.predicted)
                    .unwrap_or_default();
                let true_class = ds.labels()[r];
                overlay::OverlayPoint {
                    id,
                    position: overlay::anchor_position(&self.grid_index, &cand.coords, &point),
                    true_class,
                    predicted_class: predicted,
                    correct: predicted == true_class,
                }
            })
            .collect();
        TestConfusionOverlay {
            n_neighbors: cand.n_neighbors,
            points,
        }
    }
}
