mod support;

use std::collections::BTreeSet;

use approx::assert_abs_diff_eq;
use proptest::prelude::*;

use curate_core::dataset::{parse_csv, stratified_split};
use curate_core::model::{self, balanced_accuracy, f1_macro, ModelConfig, PartitionData, TrainControl};
use curate_core::neighbors::NeighborIndex;
use curate_core::projection::sdc::{average_ranks, spearman};
use curate_core::sampling::{self, condensed_nn, tomek_links, Acceptance, Algorithm, SamplingRequest, SamplingScope};
use curate_core::typing::{classify_types, BandRule, InstanceType};

use support::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn index_matches_a_full_scan(seed in 0u64..10_000, n in 15usize..80, d in 1usize..5, k in 1usize..14) {
        let ds = random_dataset(seed, n, d, 2);
        let points = rows_of(&ds);
        let index = NeighborIndex::build(ds.instances().to_owned(), ds.ids().to_vec()).unwrap();
        for r in 0..n {
            let got: Vec<usize> = index.query_row(r, k).iter().map(|x| x.row).collect();
            prop_assert_eq!(got, brute_knn(&points, r, k.min(n - 1)));
        }
    }

    #[test]
    fn proportional_rule_is_monotone(k in 5usize..=13) {
        let mut last = InstanceType::Outlier;
        for same in 0..=k {
            let t = BandRule::Proportional.classify(same, k);
            prop_assert!(t.safety_rank() >= last.safety_rank());
            last = t;
        }
        prop_assert_eq!(BandRule::Proportional.classify(0, k), InstanceType::Outlier);
        prop_assert_eq!(BandRule::Proportional.classify(k, k), InstanceType::Safe);
    }

    #[test]
    fn tomek_partners_are_mutual(seed in 0u64..10_000, n in 10usize..120) {
        let ds = random_dataset(seed, n, 2, 3);
        let index = NeighborIndex::build(ds.instances().to_owned(), ds.ids().to_vec()).unwrap();
        let links = tomek_links(&index, ds.labels());
        for &(a, b) in &links.pairs {
            prop_assert!(a < b);
            prop_assert!(links.contains(a, b) && links.contains(b, a));
            prop_assert_ne!(ds.labels()[a], ds.labels()[b]);
        }
        let members = links.partner.iter().filter(|p| p.is_some()).count();
        prop_assert_eq!(members, 2 * links.pairs.len());
    }

    #[test]
    fn condensed_set_classifies_the_pool(seed in 0u64..10_000, n in 20usize..100, seeds in 1usize..5) {
        let ds = random_dataset(seed, n, 3, 2);
        let labels = ds.labels();
        let index = NeighborIndex::build(ds.instances().to_owned(), ds.ids().to_vec()).unwrap();
        let pool: Vec<usize> = (0..n).filter(|&r| labels[r] == 0).collect();
        let redundant: BTreeSet<usize> = condensed_nn(&index, labels, &pool, seeds, seed).unwrap().into_iter().collect();
        prop_assert!(redundant.iter().all(|r| pool.contains(r)));
        // every redundant row is classified correctly by the retained set
        for &r in &redundant {
            let nn = index.query_row_where(r, 1, |x| !redundant.contains(&x));
            prop_assert_eq!(labels[nn[0].row], labels[r]);
        }
    }

    #[test]
    fn spearman_is_symmetric_and_bounded(xs in prop::collection::vec(-1e3f64..1e3, 3..60), shift in -50.0f64..50.0) {
        let ys: Vec<f64> = xs.iter().enumerate().map(|(i, x)| (x * 0.3 + shift).sin() + i as f64 * 0.01).collect();
        let a = spearman(&xs, &ys);
        let b = spearman(&ys, &xs);
        prop_assert!((-1.0..=1.0).contains(&a.value));
        prop_assert_eq!(a.value, b.value);
        let monotone: Vec<f64> = xs.iter().map(|x| x.powi(3) + 2.0 * x).collect();
        let s = spearman(&xs, &monotone);
        prop_assert!(s.degenerate || s.value == 1.0);
    }

    #[test]
    fn ranks_sum_to_the_triangular_number(xs in prop::collection::vec(0u8..6, 1..40)) {
        let v: Vec<f64> = xs.iter().map(|&x| x as f64).collect();
        let n = v.len() as f64;
        assert_abs_diff_eq!(average_ranks(&v).iter().sum::<f64>(), n * (n + 1.0) / 2.0, epsilon = 1e-9);
    }

    #[test]
    fn balanced_accuracy_is_mean_recall(cells in prop::collection::vec(0usize..30, 9)) {
        let mut m: Vec<Vec<usize>> = cells.chunks(3).map(|c| c.to_vec()).collect();
        for (i, row) in m.iter_mut().enumerate() {
            row[i] += 1;
        }
        let recall: f64 = (0..3).map(|c| m[c][c] as f64 / m[c].iter().sum::<usize>() as f64).sum::<f64>() / 3.0;
        assert_abs_diff_eq!(balanced_accuracy(&m).unwrap(), recall, epsilon = 1e-12);
        let f1 = f1_macro(&m).unwrap();
        prop_assert!((0.0..=1.0).contains(&f1));
    }

    #[test]
    fn split_is_a_stratified_partition(seed in 0u64..1000, n in 12usize..200) {
        let ds = random_dataset(seed, n, 2, 3);
        let split = stratified_split(&ds, 0.75, seed).unwrap();
        prop_assert_eq!(split.train_ids.len() + split.test_ids.len(), n);
        prop_assert!(split.train_ids.is_disjoint(&split.test_ids));
        let counts = ds.class_counts();
        for c in 0..3 {
            let tr = split.train_rows(&ds).iter().filter(|&&r| ds.labels()[r] == c).count();
            prop_assert!(tr >= 1 && tr < counts[c]);
            prop_assert!((tr as f64 - 0.75 * counts[c] as f64).abs() <= 1.0);
        }
    }

    #[test]
    fn accepted_subsets_are_filtered_in_order(seed in 0u64..1000, keep_mask in prop::collection::vec(any::<bool>(), 64)) {
        let ds = random_dataset(seed, 90, 3, 3);
        let view = full_view(&ds, 5);
        let Ok(s) = sampling::propose(&view, &SamplingRequest::new(Algorithm::Ncr, SamplingScope::default())) else {
            return Ok(());
        };
        let keep: Vec<u64> = s.removals.iter().zip(&keep_mask).filter(|(_, &k)| k).map(|(r, _)| r.id).collect();
        let out = sampling::filter_suggestion(&s, &Acceptance::Ids(keep.clone())).unwrap();
        prop_assert_eq!(out.removals.iter().map(|r| r.id).collect::<Vec<_>>(), keep);
    }
}

#[test]
fn typing_oracle_on_fixture_data() {
    let ds = fixture("iris.csv");
    let view = full_view(&ds, 7);
    let points = rows_of(&ds);
    let got = classify_types(&view.index, ds.labels(), 7, BandRule::Fifths).unwrap();
    for (r, a) in got.iter().enumerate() {
        let same = brute_knn(&points, r, 7).iter().filter(|&&j| ds.labels()[j] == ds.labels()[r]).count();
        assert_eq!(a.same_class_count, same, "row {r}");
    }
}

#[test]
fn a_single_informative_feature_dominates_importance() {
    let mut csv = String::from("signal,noise_a,noise_b,class\n");
    for i in 0..120 {
        let label = if i % 2 == 0 { "lo" } else { "hi" };
        let signal = if i % 2 == 0 { i as f64 * 0.01 } else { 5.0 + i as f64 * 0.01 };
        csv += &format!("{signal},{},{},{label}\n", (i as f64 * 1.7).sin(), (i as f64 * 0.3).cos());
    }
    let ds = parse_csv(csv.as_bytes(), "class").unwrap();
    let config = ModelConfig {
        search_iterations: 3,
        ..ModelConfig::default()
    };
    let x = ds.instances();
    let part = PartitionData {
        x,
        labels: ds.labels(),
        ids: ds.ids(),
    };
    let (m, report) = model::train(part, part, ds.class_names(), &config, &TrainControl::new()).unwrap();
    let imp = &report.feature_importance;
    assert!(imp[0] >= 0.9, "{imp:?}");
    assert_abs_diff_eq!(imp.iter().sum::<f64>(), 1.0, epsilon = 1e-9);
    assert_eq!(model::feature_importance_order(imp)[2], 0);
    for p in model::predict_proba(&m, x).unwrap() {
        assert_abs_diff_eq!(p.iter().sum::<f64>(), 1.0, epsilon = 1e-9);
    }
    assert_eq!(report.test.balanced_accuracy, 1.0);
}
