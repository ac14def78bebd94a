mod support;

use std::collections::BTreeSet;

use curate_core::dataset::{stratified_split, DistanceSpace, NormalizationStats};
use curate_core::sampling::{Acceptance, Algorithm, ClassScope, SamplingRequest, SamplingScope, TrainView};
use curate_core::session::{sankey, SessionError, SessionFile};
use curate_core::typing::{self, BandRule, InstanceType};
use curate_core::{Session, SessionConfig};

use support::*;

fn quick() -> SessionConfig {
    let mut c = SessionConfig::default();
    c.model.search_iterations = 3;
    c.model.ranges.n_trees = (5, 20);
    c.projection.min_dist_sweep = vec![0.1];
    c.projection.n_epochs = Some(30);
    c
}

fn iris_session() -> Session {
    Session::start(fixture("iris.csv"), "class", quick()).unwrap()
}

fn ncr() -> SamplingRequest {
    SamplingRequest::new(Algorithm::Ncr, SamplingScope::default())
}

#[test]
fn baseline_step_is_recorded() {
    let s = iris_session();
    assert_eq!(s.steps().len(), 1);
    let b = &s.steps()[0];
    assert_eq!(b.action.kind(), "train");
    assert!(b.metrics_before.is_none());
    assert_eq!(b.train_size, 112);
    assert_eq!(s.original_train_count(), 112);
    assert_eq!(s.grid().len(), 9);
    assert!(s.deltas().is_empty());
}

#[test]
fn ledger_conserves_instances_and_deltas_add_up() {
    let mut s = iris_session();
    s.sample(&ncr(), &Acceptance::All).unwrap();
    let mut smote = SamplingRequest::new(Algorithm::Smote, SamplingScope::new(ClassScope::NotMajority, &InstanceType::ALL));
    smote.seed = Some(4);
    s.sample(&smote, &Acceptance::All).unwrap();
    s.select_projection(9).unwrap();
    s.sample(&ncr(), &Acceptance::Filter {
        types: [InstanceType::Rare].into(),
        exclude_ids: vec![],
        limit: None,
    })
    .unwrap();

    let mut size = s.original_train_count();
    let mut removed = 0;
    let mut added = 0;
    for step in &s.steps()[1..] {
        assert_eq!(step.train_size + step.removals.len(), size + step.additions.len());
        removed += step.removals.len();
        added += step.additions.len();
        size = step.train_size;
    }
    let flows: Vec<_> = s.steps().iter().flat_map(|st| st.sankey.clone()).collect();
    assert_eq!(sankey::bin_totals(&flows), (removed, added));
    assert_eq!(s.view().len(), s.original_train_count() - removed + added);

    let first = s.steps()[0].metrics_after.test;
    let last = s.steps().last().unwrap().metrics_after.test;
    let sum: f64 = s.deltas().iter().map(|d| d.delta_balanced_accuracy).sum();
    assert!((sum - (last.balanced_accuracy - first.balanced_accuracy)).abs() <= 1e-9);
    assert_eq!(s.version() as usize, s.steps().len() - 1);
}

#[test]
fn rejecting_everything_changes_nothing() {
    let mut s = iris_session();
    let before = s.report().test.clone();
    let step = s.sample(&ncr(), &Acceptance::None).unwrap();
    assert!(step.removals.is_empty());
    assert_eq!(step.train_size, 112);
    let d = s.deltas()[0];
    assert_eq!((d.delta_balanced_accuracy, d.delta_f1), (0.0, 0.0));
    assert_eq!(s.report().test, before);
}

#[test]
fn reselecting_the_same_projection_is_a_no_op() {
    let mut s = iris_session();
    assert!(s.select_projection(11).unwrap().is_some());
    let v = s.version();
    assert!(s.select_projection(11).unwrap().is_none());
    assert_eq!(s.version(), v);
    assert_eq!(s.k(), 11);
    assert_eq!(s.selected_projection().n_neighbors, 11);
    assert_eq!(s.select_projection(4).unwrap_err(), SessionError::UnknownProjection(4));
}

#[test]
fn stale_proposals_are_rejected() {
    let mut s = iris_session();
    let p = s.propose(&ncr()).unwrap();
    s.select_projection(7).unwrap();
    let err = s.confirm(&p, &Acceptance::All).unwrap_err();
    assert_eq!(err, SessionError::StaleSuggestion { proposed: 0, current: 1 });
}

#[test]
fn toggled_types_narrow_every_request() {
    let mut s = iris_session();
    s.toggle_types([InstanceType::Safe].into()).unwrap();
    if let Ok(p) = s.propose(&ncr()) {
        for r in &p.suggestion.removals {
            let row = s.view().row_of(r.id).unwrap();
            assert_eq!(s.view().instance_type(row), InstanceType::Safe);
        }
    }
    assert!(s.toggle_types(BTreeSet::new()).is_err());
}

#[test]
fn test_points_get_positions() {
    let s = iris_session();
    let overlay = s.overlay_test();
    assert_eq!(overlay.points.len(), 38);
    assert!(overlay.points.iter().all(|p| p.position.iter().all(|v| v.is_finite())));
    assert_eq!(s.train_positions().len(), 112);
}

#[test]
fn export_import_round_trip() {
    let mut s = iris_session();
    s.sample(&ncr(), &Acceptance::All).unwrap();
    let json = s.export_json();
    let back = Session::import_json(&json, fixture("iris.csv")).unwrap();
    assert_eq!(back.export_json(), json);

    let mut tampered: serde_json::Value = serde_json::from_str(&json).unwrap();
    tampered["steps"][1]["train_size"] = serde_json::json!(1);
    let err = Session::import_json(&tampered.to_string(), fixture("iris.csv")).unwrap_err();
    assert!(matches!(err.root(), SessionError::ReplayMismatch { step: 1 }), "{err}");

    let err = Session::import_json(&json, fixture("vehicle.csv")).unwrap_err();
    assert!(matches!(err, SessionError::DatasetMismatch { .. }));
}

#[test]
fn schema_version_is_checked() {
    let file = SessionFile::script("class", quick(), vec![]);
    let mut v: serde_json::Value = serde_json::from_str(&file.to_json()).unwrap();
    v["schema_version"] = serde_json::json!(99);
    let err = SessionFile::parse(&v.to_string()).unwrap_err();
    assert!(matches!(err, SessionError::SchemaVersion { found: 99, .. }));
}

#[test]
fn vehicle_types_depend_on_k() {
    let ds = fixture("vehicle.csv");
    let split = stratified_split(&ds, 0.75, 0).unwrap();
    let stats = NormalizationStats::fit(&ds, &split).unwrap();
    let dist = |k| {
        let v = TrainView::build(&ds, &split, &stats, DistanceSpace::Raw, k, BandRule::Fifths).unwrap();
        typing::type_distribution(&v.assignments, &v.labels, v.n_classes()).overall_counts
    };
    let (k5, k13) = (dist(5), dist(13));
    assert_ne!(k5, k13);
    assert_eq!(k5.iter().sum::<usize>(), 634);
    assert_eq!(k13.iter().sum::<usize>(), 634);
}
