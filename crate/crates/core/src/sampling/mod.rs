//! Under- and oversampling restricted to a class scope and a set of
//! instance types. Every algorithm returns a [`SamplingSuggestion`] that a
//! person confirms in full or in part.

pub mod oversample;
pub mod undersample;

use std::collections::{BTreeMap, BTreeSet};

use ndarray::Array2;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{DistanceSpace, InstanceId, LabeledDataset, NormalizationStats, SplitAssignment};
use crate::neighbors::{NeighborError, NeighborIndex};
use crate::typing::{self, BandRule, InstanceType, TypeAssignment, TypingError};

pub use oversample::{adasyn, allocate_by_density, segment_residual, smote};
pub use undersample::{condensed_nn, edited_nn, ncr, oss, tomek_links, TomekLinks};

pub const DEFAULT_NCR_THRESHOLD: f64 = 0.5;
pub const DEFAULT_OSS_SEEDS: usize = 1;
pub const DEFAULT_ADASYN_EPSILON: f64 = 0.01;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SamplingError {
    #[error("nothing to sample: the scope selects no eligible instances")]
    EmptyScope,
    #[error("no instance types are included")]
    NoIncludedTypes,
    #[error("class `{class}` has {eligible} eligible parents, at least 2 are needed")]
    TooFewParents { class: String, eligible: usize },
    #[error("threshold must lie in (0, 1], got {0}")]
    InvalidThreshold(f64),
    #[error("k must be at least 1")]
    InvalidK,
    #[error("seeds must be at least 1")]
    InvalidSeeds,
    #[error("epsilon must be finite and non-negative, got {0}")]
    InvalidEpsilon(f64),
    #[error("requested total must be positive")]
    NonPositiveTotal,
    #[error("unknown class `{0}`")]
    UnknownClass(String),
    #[error("class `{0}` is outside the oversampling scope")]
    ClassOutOfScope(String),
    #[error("instance {0} is not part of the suggestion")]
    UnknownId(InstanceId),
    #[error("synthetic point {0} is not part of the suggestion")]
    UnknownIndex(usize),
    #[error("a filter acceptance must be resolved against instance types first")]
    UnresolvedFilter,
    #[error(transparent)]
    Typing(#[from] TypingError),
    #[error(transparent)]
    Neighbor(#[from] NeighborError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassScope {
    Majority,
    NotMinority,
    NotMajority,
    #[default]
    All,
    Minority,
}

/// How deactivated types are removed from the oversampling pool.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExclusionSemantics {
    /// Excluded types leave the pool whatever their class.
    GlobalTypeRemoval,
    /// Excluded types leave the pool only inside the oversampled classes.
    #[default]
    PerClassExclusion,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Under,
    Over,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SamplingScope {
    #[serde(default)]
    pub class_scope: ClassScope,
    #[serde(default = "all_types")]
    pub included_types: BTreeSet<InstanceType>,
    #[serde(default)]
    pub exclusion: ExclusionSemantics,
}

fn all_types() -> BTreeSet<InstanceType> {
    InstanceType::ALL.into_iter().collect()
}

impl Default for SamplingScope {
    fn default() -> Self {
        Self {
            class_scope: ClassScope::All,
            included_types: all_types(),
            exclusion: ExclusionSemantics::default(),
        }
    }
}

impl SamplingScope {
    pub fn new(class_scope: ClassScope, included: &[InstanceType]) -> Self {
        Self {
            class_scope,
            included_types: included.iter().copied().collect(),
            exclusion: ExclusionSemantics::default(),
        }
    }

    pub fn with_exclusion(mut self, exclusion: ExclusionSemantics) -> Self {
        self.exclusion = exclusion;
        self
    }
}

/// The current training set as sampling algorithms see it: rows sorted by
/// id, a neighbour index in the distance space and the active types.
#[derive(Debug, Clone)]
pub struct TrainView {
    pub ids: Vec<InstanceId>,
    /// Raw feature values, used for interpolation.
    pub raw: Array2<f64>,
    pub labels: Vec<usize>,
    pub class_names: Vec<String>,
    pub index: NeighborIndex,
    pub k: usize,
    pub assignments: Vec<TypeAssignment>,
    /// Raw width of one normalized unit per feature.
    pub scale: Vec<f64>,
}

impl TrainView {
    pub fn build(
        ds: &LabeledDataset,
        split: &SplitAssignment,
        stats: &NormalizationStats,
        space: DistanceSpace,
        k: usize,
        rule: BandRule,
    ) -> Result<Self, SamplingError> {
        let rows = split.train_rows(ds);
        let ids: Vec<InstanceId> = rows.iter().map(|&r| ds.ids()[r]).collect();
        let labels: Vec<usize> = rows.iter().map(|&r| ds.labels()[r]).collect();
        let index = NeighborIndex::build(space.project(ds, &rows, stats), ids.clone())?;
        let assignments = typing::classify_types(&index, &labels, k, rule)?;
        Ok(Self {
            ids,
            raw: ds.select_rows(&rows),
            labels,
            class_names: ds.class_names().to_vec(),
            index,
            k,
            assignments,
            scale: stats.range(),
        })
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn n_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn instance_type(&self, row: usize) -> InstanceType {
        self.assignments[row].instance_type
    }

    pub fn row_of(&self, id: InstanceId) -> Option<usize> {
        self.ids.binary_search(&id).ok()
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.n_classes()];
        for &l in &self.labels {
            counts[l] += 1;
        }
        counts
    }

    pub fn class_of(&self, name: &str) -> Result<usize, SamplingError> {
        self.class_names
            .iter()
            .position(|c| c == name)
            .ok_or_else(|| SamplingError::UnknownClass(name.to_string()))
    }
}

/// Largest and smallest class by count; ties go to the lower class index.
pub fn majority_minority(counts: &[usize]) -> (usize, usize) {
    let mut maj = 0;
    let mut min = 0;
    for (c, &n) in counts.iter().enumerate() {
        if n > counts[maj] {
            maj = c;
        }
        if n < counts[min] {
            min = c;
        }
    }
    (maj, min)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScopeResolution {
    pub mode: Mode,
    pub majority: usize,
    pub minority: usize,
    /// In-scope classes, ascending.
    pub classes: Vec<usize>,
    /// Rows an algorithm may remove (under) or use as parents (over), ascending.
    pub eligible: Vec<usize>,
    /// Rows visible to the algorithm. For undersampling every row.
    pub pool: Vec<bool>,
    pub per_class_eligible: Vec<usize>,
}

impl ScopeResolution {
    pub fn in_scope(&self, class: usize) -> bool {
        self.classes.binary_search(&class).is_ok()
    }

    pub fn eligible_ids(&self, view: &TrainView) -> BTreeSet<InstanceId> {
        self.eligible.iter().map(|&r| view.ids[r]).collect()
    }

    pub fn eligible_mask(&self, n: usize) -> Vec<bool> {
        let mut mask = vec![false; n];
        for &r in &self.eligible {
            mask[r] = true;
        }
        mask
    }
}

pub fn resolve_scope(
    view: &TrainView,
    scope: &SamplingScope,
    mode: Mode,
) -> Result<ScopeResolution, SamplingError> {
    if scope.included_types.is_empty() {
        return Err(SamplingError::NoIncludedTypes);
    }
    let counts = view.class_counts();
    let (majority, minority) = majority_minority(&counts);
    let classes: Vec<usize> = (0..view.n_classes())
        .filter(|&c| match scope.class_scope {
            ClassScope::Majority => c == majority,
            ClassScope::NotMinority => c != minority,
            ClassScope::NotMajority => c != majority,
            ClassScope::All => true,
            ClassScope::Minority => c == minority,
        })
        .collect();
    let in_scope = |c: usize| classes.binary_search(&c).is_ok();
    let included = |r: usize| scope.included_types.contains(&view.instance_type(r));

    let n = view.len();
    let pool: Vec<bool> = match mode {
        Mode::Under => vec![true; n],
        Mode::Over => (0..n)
            .map(|r| match scope.exclusion {
                ExclusionSemantics::GlobalTypeRemoval => included(r),
                ExclusionSemantics::PerClassExclusion => !in_scope(view.labels[r]) || included(r),
            })
            .collect(),
    };
    let eligible: Vec<usize> = (0..n)
        .filter(|&r| in_scope(view.labels[r]) && included(r) && pool[r])
        .collect();
    if eligible.is_empty() {
        return Err(SamplingError::EmptyScope);
    }
    let mut per_class_eligible = vec![0; view.n_classes()];
    for &r in &eligible {
        per_class_eligible[view.labels[r]] += 1;
    }
    Ok(ScopeResolution {
        mode,
        majority,
        minority,
        classes,
        eligible,
        pool,
        per_class_eligible,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    Oss,
    Ncr,
    Smote,
    Adasyn,
}

impl Algorithm {
    pub fn mode(self) -> Mode {
        match self {
            Algorithm::Oss | Algorithm::Ncr => Mode::Under,
            Algorithm::Smote | Algorithm::Adasyn => Mode::Over,
        }
    }
}

impl std::fmt::Display for Algorithm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Algorithm::Oss => "OSS",
            Algorithm::Ncr => "NCR",
            Algorithm::Smote => "SMOTE",
            Algorithm::Adasyn => "ADASYN",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RemovalReason {
    TomekLink,
    RedundantCnn,
    NoisyEnn,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Removal {
    pub id: InstanceId,
    pub reason: RemovalReason,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Addition {
    /// Raw feature values, jitter included.
    pub vector: Vec<f64>,
    pub class: usize,
    pub parent: InstanceId,
    pub neighbor: InstanceId,
    pub lambda: f64,
    /// Jitter added after interpolation, in raw units.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub jitter: Option<Vec<f64>>,
}

impl Addition {
    /// The interpolated point before jitter.
    pub fn interpolated(&self) -> Vec<f64> {
        match &self.jitter {
            None => self.vector.clone(),
            Some(j) => self.vector.iter().zip(j).map(|(v, e)| v - e).collect(),
        }
    }
}

/// A sampling request as issued by a client; unset fields take defaults
/// when the request is resolved against a training view.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplingRequest {
    pub algorithm: Algorithm,
    #[serde(default)]
    pub scope: SamplingScope,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seeds: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threshold: Option<f64>,
    /// Synthetic points to generate per class name.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub targets: Option<BTreeMap<String, usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl SamplingRequest {
    pub fn new(algorithm: Algorithm, scope: SamplingScope) -> Self {
        Self {
            algorithm,
            scope,
            k: None,
            seeds: None,
            threshold: None,
            targets: None,
            epsilon: None,
            seed: None,
        }
    }
}

/// Fully resolved parameters, recorded with every suggestion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplingParams {
    pub scope: SamplingScope,
    pub k: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seeds: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threshold: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub targets: Option<BTreeMap<String, usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplingSuggestion {
    pub algorithm: Algorithm,
    pub params: SamplingParams,
    pub removals: Vec<Removal>,
    pub additions: Vec<Addition>,
}

impl SamplingSuggestion {
    pub fn removal_ids(&self) -> BTreeSet<InstanceId> {
        self.removals.iter().map(|r| r.id).collect()
    }

    pub fn is_empty(&self) -> bool {
        self.removals.is_empty() && self.additions.is_empty()
    }
}

/// Default oversampling targets: lift every in-scope class to the size of
/// the largest class.
pub fn balance_targets(view: &TrainView, res: &ScopeResolution) -> BTreeMap<String, usize> {
    let counts = view.class_counts();
    let max = counts.iter().copied().max().unwrap_or(0);
    res.classes
        .iter()
        .filter(|&&c| counts[c] < max)
        .map(|&c| (view.class_names[c].clone(), max - counts[c]))
        .collect()
}

/// Runs the requested algorithm. `k` defaults to the view's active k.
pub fn propose(view: &TrainView, request: &SamplingRequest) -> Result<SamplingSuggestion, SamplingError> {
    let k = request.k.unwrap_or(view.k);
    if k == 0 {
        return Err(SamplingError::InvalidK);
    }
    let seed = request.seed.unwrap_or(0);
    let res = resolve_scope(view, &request.scope, request.algorithm.mode())?;
    let mut params = SamplingParams {
        scope: request.scope.clone(),
        k,
        seeds: None,
        threshold: None,
        targets: None,
        epsilon: None,
        seed,
    };
    let (removals, additions) = match request.algorithm {
        Algorithm::Oss => {
            let seeds = request.seeds.unwrap_or(DEFAULT_OSS_SEEDS);
            params.seeds = Some(seeds);
            (undersample::oss(view, &res, seeds, seed)?, Vec::new())
        }
        Algorithm::Ncr => {
            let threshold = request.threshold.unwrap_or(DEFAULT_NCR_THRESHOLD);
            params.threshold = Some(threshold);
            (undersample::ncr(view, &res, k, threshold)?, Vec::new())
        }
        Algorithm::Smote | Algorithm::Adasyn => {
            let names = request
                .targets
                .clone()
                .unwrap_or_else(|| balance_targets(view, &res));
            let mut targets = BTreeMap::new();
            for (name, &count) in &names {
                let c = view.class_of(name)?;
                if !res.in_scope(c) {
                    return Err(SamplingError::ClassOutOfScope(name.clone()));
                }
                targets.insert(c, count);
            }
            params.targets = Some(names);
            let adds = if request.algorithm == Algorithm::Smote {
                oversample::smote(view, &res, k, &targets, seed)?
            } else {
                let eps = request.epsilon.unwrap_or(DEFAULT_ADASYN_EPSILON);
                params.epsilon = Some(eps);
                oversample::adasyn(view, &res, k, &targets, eps, seed)?
            };
            (Vec::new(), adds)
        }
    };
    Ok(SamplingSuggestion {
        algorithm: request.algorithm,
        params,
        removals,
        additions,
    })
}

/// Which part of a suggestion a person accepts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Acceptance {
    All,
    None,
    /// Accepted removal ids.
    Ids(Vec<InstanceId>),
    /// Accepted synthetic point positions.
    Indices(Vec<usize>),
    /// Items whose instance (the parent, for additions) has one of `types`,
    /// minus `exclude_ids`, truncated to the first `limit` in suggestion order.
    Filter {
        #[serde(default = "all_types")]
        types: BTreeSet<InstanceType>,
        #[serde(default)]
        exclude_ids: Vec<InstanceId>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        limit: Option<usize>,
    },
}

impl Acceptance {
    /// Turns any acceptance into the explicit form: `Ids` for removal
    /// suggestions, `Indices` for additions.
    pub fn resolve(
        &self,
        suggestion: &SamplingSuggestion,
        type_of: impl Fn(InstanceId) -> Option<InstanceType>,
    ) -> Result<Acceptance, SamplingError> {
        let additions = suggestion.removals.is_empty() && !suggestion.additions.is_empty();
        let explicit = match self {
            Acceptance::All => {
                if additions {
                    Acceptance::Indices((0..suggestion.additions.len()).collect())
                } else {
                    Acceptance::Ids(suggestion.removals.iter().map(|r| r.id).collect())
                }
            }
            Acceptance::None => {
                if additions {
                    Acceptance::Indices(Vec::new())
                } else {
                    Acceptance::Ids(Vec::new())
                }
            }
            Acceptance::Ids(_) | Acceptance::Indices(_) => self.clone(),
            Acceptance::Filter {
                types,
                exclude_ids,
                limit,
            } => {
                let keep = |id: InstanceId| {
                    !exclude_ids.contains(&id) && type_of(id).is_some_and(|t| types.contains(&t))
                };
                let limit = limit.unwrap_or(usize::MAX);
                if additions {
                    Acceptance::Indices(
                        suggestion
                            .additions
                            .iter()
                            .enumerate()
                            .filter(|(_, a)| keep(a.parent))
                            .map(|(i, _)| i)
                            .take(limit)
                            .collect(),
                    )
                } else {
                    Acceptance::Ids(
                        suggestion
                            .removals
                            .iter()
                            .map(|r| r.id)
                            .filter(|&id| keep(id))
                            .take(limit)
                            .collect(),
                    )
                }
            }
        };
        filter_suggestion(suggestion, &explicit)?;
        Ok(explicit)
    }
}

/// The confirmed subset of a suggestion, in suggestion order.
pub fn filter_suggestion(
    suggestion: &SamplingSuggestion,
    acceptance: &Acceptance,
) -> Result<SamplingSuggestion, SamplingError> {
    let mut out = suggestion.clone();
    match acceptance {
        Acceptance::All => {}
        Acceptance::None => {
            out.removals.clear();
            out.additions.clear();
        }
        Acceptance::Ids(ids) => {
            let known = suggestion.removal_ids();
            if let Some(&bad) = ids.iter().find(|id| !known.contains(id)) {
                return Err(SamplingError::UnknownId(bad));
            }
            let accepted: BTreeSet<InstanceId> = ids.iter().copied().collect();
            out.removals.retain(|r| accepted.contains(&r.id));
            out.additions.clear();
        }
        Acceptance::Indices(indices) => {
            if let Some(&bad) = indices.iter().find(|&&i| i >= suggestion.additions.len()) {
                return Err(SamplingError::UnknownIndex(bad));
            }
            let accepted: BTreeSet<usize> = indices.iter().copied().collect();
            out.additions = suggestion
                .additions
                .iter()
                .enumerate()
                .filter(|(i, _)| accepted.contains(i))
                .map(|(_, a)| a.clone())
                .collect();
            out.removals.clear();
        }
        Acceptance::Filter { .. } => return Err(SamplingError::UnresolvedFilter),
    }
    Ok(out)
}
