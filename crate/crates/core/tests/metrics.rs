#[path = "common/oracle.rs"]
mod oracle;

use biascope_core::metrics::{compare_logs, ErrorDeltaSet};
use biascope_core::{bias_scores, confusion_stats, error_deltas, find_pies, ModelPopulation, PredictionLog};
use proptest::prelude::*;

fn arb_log_pair() -> impl Strategy<Value = (PredictionLog, PredictionLog)> {
    (2usize..=10, 1usize..=200).prop_flat_map(|(n, len)| {
        (
            prop::collection::vec((0..n, 0..n, 0..n), len),
            Just(n),
        )
            .prop_map(|(triples, n)| {
                let base = PredictionLog::from_triples(
                    "base",
                    n,
                    triples.iter().enumerate().map(|(i, &(t, p, _))| (format!("e{i}"), t, p)),
                )
                .unwrap();
                let target = PredictionLog::from_triples(
                    "target",
                    n,
                    triples.iter().enumerate().map(|(i, &(t, _, q))| (format!("e{i}"), t, q)),
                )
                .unwrap();
                (base, target)
            })
    })
}

fn permute_classes(log: &PredictionLog, perm: &[usize]) -> PredictionLog {
    PredictionLog::from_triples(
        log.model_id.clone(),
        log.n_classes,
        log.records.iter().map(|r| (r.example_id.clone(), perm[r.true_label], perm[r.pred_label])),
    )
    .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn counts_partition_every_class((base, _) in arb_log_pair()) {
        let stats = confusion_stats::<f64>(&base).unwrap();
        for c in &stats.classes {
            prop_assert_eq!(c.true_pos + c.false_pos + c.false_neg + c.true_neg, base.len() as u64);
            prop_assert!((0.0..=1.0).contains(&c.fpr) && (0.0..=1.0).contains(&c.fnr));
        }
    }

    #[test]
    fn matches_naive_oracle((base, target) in arb_log_pair()) {
        let (deltas, scores) = compare_logs(&base, &target, 1e-4).unwrap();
        let naive = oracle::naive_deltas(&base, &target, 1e-4);
        for (d, n) in deltas.deltas.iter().zip(&naive) {
            prop_assert!(oracle::rel_diff(d.delta_fpr, n.0) <= 1e-12);
            prop_assert!(oracle::rel_diff(d.delta_fnr, n.1) <= 1e-12);
        }
        let (cev, sde) = oracle::naive_cev_sde(&naive);
        prop_assert!(oracle::rel_diff(scores.cev, cev) <= 1e-9, "cev {} vs {}", scores.cev, cev);
        prop_assert!(oracle::rel_diff(scores.sde, sde) <= 1e-9, "sde {} vs {}", scores.sde, sde);
    }

    #[test]
    fn record_order_is_irrelevant((base, target) in arb_log_pair(), seed in any::<u64>()) {
        use rand::{seq::SliceRandom, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut shuffled = target.clone();
        shuffled.records.shuffle(&mut rng);
        let a = compare_logs(&base, &target, 1e-4).unwrap();
        let b = compare_logs(&base, &shuffled, 1e-4).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn class_relabeling_is_equivariant((base, target) in arb_log_pair(), seed in any::<u64>()) {
        use rand::{seq::SliceRandom, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut perm: Vec<usize> = (0..base.n_classes).collect();
        perm.shuffle(&mut rng);
        let (d, s) = compare_logs(&base, &target, 1e-4).unwrap();
        let (dp, sp) = compare_logs(&permute_classes(&base, &perm), &permute_classes(&target, &perm), 1e-4).unwrap();
        for (class, delta) in d.deltas.iter().enumerate() {
            prop_assert_eq!(*delta, dp.deltas[perm[class]]);
        }
        prop_assert!(oracle::rel_diff(s.cev, sp.cev) <= 1e-12);
        prop_assert!(oracle::rel_diff(s.sde, sp.sde) <= 1e-12);

        let pies = find_pies(
            &ModelPopulation::singleton(base.clone()).unwrap(),
            &ModelPopulation::singleton(target.clone()).unwrap(),
        ).unwrap();
        let pies_p = find_pies(
            &ModelPopulation::singleton(permute_classes(&base, &perm)).unwrap(),
            &ModelPopulation::singleton(permute_classes(&target, &perm)).unwrap(),
        ).unwrap();
        prop_assert_eq!(pies.pie_count, pies_p.pie_count);
    }

    #[test]
    fn cev_is_sum_of_component_variances(points in prop::collection::vec((-1e4f64..1e4, -1e4f64..1e4), 1..60)) {
        let set = delta_set(&points);
        let s = bias_scores(&set).unwrap();
        let n = points.len() as f64;
        let var = |f: fn(&(f64, f64)) -> f64| {
            let m = points.iter().map(f).sum::<f64>() / n;
            points.iter().map(|p| (f(p) - m).powi(2)).sum::<f64>() / n
        };
        let expected = var(|p| p.0) + var(|p| p.1);
        prop_assert!(oracle::rel_diff(s.cev, expected) <= 1e-9);
        prop_assert!(s.cev >= 0.0 && s.sde >= 0.0);
    }

    #[test]
    fn sde_ignores_diagonal_shift(points in prop::collection::vec((-1e3f64..1e3, -1e3f64..1e3), 1..60), c in -1e3f64..1e3) {
        let s = bias_scores(&delta_set(&points)).unwrap();
        let shifted: Vec<(f64, f64)> = points.iter().map(|&(x, y)| (x + c, y + c)).collect();
        let t = bias_scores(&delta_set(&shifted)).unwrap();
        prop_assert!((s.sde - t.sde).abs() <= 1e-9 * s.sde.max(1.0));
    }

    #[test]
    fn one_more_flip_adds_one_pie(preds in prop::collection::vec(0usize..5, 2..80), flip in any::<prop::sample::Index>()) {
        let reference = PredictionLog::from_triples("r", 5, preds.iter().enumerate().map(|(i, &p)| (format!("e{i}"), 0, p))).unwrap();
        let mut changed = reference.clone();
        changed.model_id = "c".into();
        let r = ModelPopulation::singleton(reference.clone()).unwrap();
        let before = find_pies(&r, &ModelPopulation::singleton(changed.clone()).unwrap()).unwrap().pie_count;
        prop_assert_eq!(before, 0);
        // flip examples one at a time; each adds exactly one PIE
        let start = flip.index(preds.len());
        for (k, i) in (start..preds.len()).enumerate() {
            changed.records[i].pred_label = (changed.records[i].pred_label + 1) % 5;
            let count = find_pies(&r, &ModelPopulation::singleton(changed.clone()).unwrap()).unwrap().pie_count;
            prop_assert_eq!(count, k + 1);
        }
    }
}

fn delta_set(points: &[(f64, f64)]) -> ErrorDeltaSet<f64> {
    ErrorDeltaSet {
        baseline_model_id: "b".into(),
        target_model_id: "t".into(),
        epsilon: 1e-4,
        deltas: points
            .iter()
            .map(|&(f, n)| biascope_core::metrics::ClassDelta { delta_fpr: f, delta_fnr: n })
            .collect(),
        smoothed_classes: vec![],
    }
}

#[test]
fn identical_logs_are_exactly_zero() {
    let log = PredictionLog::from_triples("m", 3, [("a", 0, 1), ("b", 1, 1), ("c", 2, 0), ("d", 2, 2)]).unwrap();
    let s = confusion_stats::<f64>(&log).unwrap();
    let d = error_deltas(&s, &s, 1e-4).unwrap();
    assert!(d.smoothed_classes.is_empty());
    let scores = bias_scores(&d).unwrap();
    assert_eq!((scores.cev, scores.sde), (0.0, 0.0));
}
