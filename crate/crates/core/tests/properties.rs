// SPDX-License-Identifier: Apache-2.0

use std::collections::BTreeSet;

use proptest::collection::{btree_set, vec};
use proptest::prelude::*;

use discort_core::event_log::{
    read_events_csv, read_events_jsonl, validate_friendships, write_events_csv, write_events_jsonl,
    EventLog, FriendshipMatrix, UsageEvent,
};
use discort_core::evaluation::{macro_f1, micro_f1};
use discort_core::features::{label_posterior, label_prior, modularity_matrix, tfidf_features};
use discort_core::periodicity::{dft, dominant_periods, fft, periodogram, ActivitySequence, ThresholdPolicy};
use discort_core::rgt::build_rgt;
use discort_core::rwr::{
    combine, rwr_closed_form, rwr_steady_state, transition_matrix, DanglingPolicy, RelevanceMatrix,
    RelevanceSource, RwrConfig,
};
use discort_core::sparse::CsrMatrix;

fn activity() -> impl Strategy<Value = Vec<f64>> {
    (8usize..120).prop_flat_map(|n| vec(0.0f64..10.0, n))
}

fn weighted_graph() -> impl Strategy<Value = Vec<Vec<f64>>> {
    (2usize..15).prop_flat_map(|n| {
        vec(vec(prop_oneof![Just(0.0), 0.0f64..3.0], n), n)
    })
}

fn label_sets(things: usize, labels: usize) -> impl Strategy<Value = Vec<BTreeSet<usize>>> {
    vec(btree_set(0..labels, 0..=labels), things)
}

fn power(values: &[f64]) -> Vec<f64> {
    periodogram(&ActivitySequence::new("l", values.to_vec()).unwrap()).power().to_vec()
}

proptest! {
    #[test]
    fn periodogram_ignores_cyclic_shift(x in activity(), shift in 0usize..200) {
        let s = shift % x.len();
        let mut rotated = x.clone();
        rotated.rotate_left(s);
        let scale = x.iter().map(|v| v * v).sum::<f64>().max(1.0);
        for (a, b) in power(&x).iter().zip(power(&rotated)) {
            prop_assert!((a - b).abs() <= 1e-9 * scale);
        }
    }

    #[test]
    fn dominant_periods_ignore_positive_scale(x in activity(), c in 0.1f64..50.0) {
        let scaled: Vec<f64> = x.iter().map(|v| v * c).collect();
        let p = |v: &[f64]| dominant_periods(&periodogram(&ActivitySequence::new("l", v.to_vec()).unwrap()), ThresholdPolicy::default());
        let (a, b) = (p(&x), p(&scaled));
        // borderline peaks may flip by rounding; require near-equality otherwise
        prop_assert!(a.symmetric_difference(&b).count() <= 1, "{a:?} vs {b:?}");
    }

    #[test]
    fn fft_agrees_with_direct_dft(x in activity()) {
        let scale = x.iter().map(|v| v.abs()).sum::<f64>().max(1.0);
        for (a, b) in fft(&x).iter().zip(dft(&x)) {
            prop_assert!((a - b).norm() <= 1e-9 * scale);
        }
    }

    #[test]
    fn parseval_holds(x in activity()) {
        let energy: f64 = x.iter().map(|v| v * v).sum();
        let spectrum: f64 = fft(&x).iter().map(|v| v.norm_sqr()).sum();
        prop_assert!((energy - spectrum).abs() <= 1e-9 * energy.max(1.0));
    }

    #[test]
    fn stationary_vector_is_a_distribution(w in weighted_graph(), c in 0.05f64..0.95, seed in 0usize..15) {
        let g = CsrMatrix::from_dense(&w);
        prop_assume!(g.total() > 0.0);
        let p = transition_matrix(&g, DanglingPolicy::SelfLoop).unwrap();
        let seed = seed % p.size();
        let pi = rwr_steady_state(&p, seed, &RwrConfig { c, ..RwrConfig::default() }).unwrap().pi;
        prop_assert!(pi.iter().all(|v| *v >= 0.0));
        prop_assert!((pi.iter().sum::<f64>() - 1.0).abs() <= 1e-8);
        let exact = rwr_closed_form(&p, seed, c).unwrap();
        for (a, b) in pi.iter().zip(exact) {
            prop_assert!((a - b).abs() <= 1e-8);
        }
    }

    #[test]
    fn combine_is_linear(
        a in vec(vec(0.0f64..1.0, 6), 6),
        b in vec(vec(0.0f64..1.0, 6), 6),
        alpha in 0.0f64..=1.0,
        beta in 0.0f64..=1.0,
    ) {
        let rm = RelevanceMatrix::new(a.clone(), 0.15, RelevanceSource::SpatioTemporal).unwrap();
        let ru = RelevanceMatrix::new(b.clone(), 0.15, RelevanceSource::Social).unwrap();
        let r = combine(&rm, &ru, alpha, beta).unwrap();
        for i in 0..6 {
            for j in 0..6 {
                prop_assert!((r.get(i, j) - (alpha * a[i][j] + beta * b[i][j])).abs() <= 1e-15);
            }
        }
    }

    #[test]
    fn rgt_is_invariant_under_relabeling(
        scores in vec(vec(0.001f64..1.0, 8), 8),
        perm in Just((0..8).collect::<Vec<usize>>()).prop_shuffle(),
        k in 1usize..8,
    ) {
        let names: Vec<String> = (0..8).map(|i| format!("t{i}")).collect();
        let g = build_rgt(&RelevanceMatrix::new(scores.clone(), 0.15, RelevanceSource::Combined).unwrap(), &names, k).unwrap();
        let permuted: Vec<Vec<f64>> = perm.iter().map(|&i| perm.iter().map(|&j| scores[i][j]).collect()).collect();
        let pnames: Vec<String> = perm.iter().map(|&i| names[i].clone()).collect();
        let h = build_rgt(&RelevanceMatrix::new(permuted, 0.15, RelevanceSource::Combined).unwrap(), &pnames, k).unwrap();
        let named = |g: &discort_core::rgt::RelationalGraphOfThings| -> BTreeSet<(String, String)> {
            g.edges().iter().map(|e| (g.things()[e.src].clone(), g.things()[e.dst].clone())).collect()
        };
        prop_assert_eq!(named(&g), named(&h));
    }

    #[test]
    fn f1_is_symmetric(t in label_sets(7, 4), p in label_sets(7, 4)) {
        prop_assert_eq!(micro_f1(&t, &p).unwrap(), micro_f1(&p, &t).unwrap());
        prop_assert_eq!(macro_f1(&t, &p).unwrap(), macro_f1(&p, &t).unwrap());
    }

    #[test]
    fn f1_ignores_label_names(t in label_sets(7, 4), p in label_sets(7, 4), perm in Just(vec![0usize, 1, 2, 3]).prop_shuffle()) {
        let relabel = |s: &[BTreeSet<usize>]| -> Vec<BTreeSet<usize>> {
            s.iter().map(|x| x.iter().map(|&l| perm[l]).collect()).collect()
        };
        prop_assert_eq!(micro_f1(&t, &p).unwrap(), micro_f1(&relabel(&t), &relabel(&p)).unwrap());
        let (a, b) = (macro_f1(&t, &p).unwrap(), macro_f1(&relabel(&t), &relabel(&p)).unwrap());
        prop_assert!((a - b).abs() <= 1e-15);
    }

    #[test]
    fn f1_is_one_only_for_perfect_predictions(t in label_sets(6, 3), p in label_sets(6, 3)) {
        prop_assume!(t.iter().any(|s| !s.is_empty()));
        prop_assert_eq!(micro_f1(&t, &t).unwrap(), 1.0);
        prop_assert_eq!(micro_f1(&t, &p).unwrap() == 1.0, t == p);
    }

    #[test]
    fn friendships_are_symmetric_after_validation(pairs in vec((0usize..6, 0usize..6), 0..20)) {
        let events: Vec<UsageEvent> = (0..6).map(|u| UsageEvent::new("lamp", format!("u{u}"), 1_700_000_000 + u as i64, "hall")).collect();
        let log = EventLog::new(events, 24).unwrap();
        let f = FriendshipMatrix::from_pairs(pairs.iter().map(|(a, b)| (format!("u{a}"), format!("u{b}"))));
        let (v, _) = validate_friendships(&f, &log);
        prop_assert!(v.is_symmetric());
        prop_assert_eq!(v.users(), log.users());
    }

    #[test]
    fn event_files_round_trip(
        rows in vec(("[a-z][a-z0-9_]{0,6}", "[a-z][a-z0-9]{0,5}", 0i64..4_000_000_000, "[a-z][a-z_]{0,8}"), 1..20)
    ) {
        let events: Vec<UsageEvent> = rows.into_iter().map(|(t, u, ts, l)| UsageEvent::new(t, u, ts, l)).collect();
        let mut csv = Vec::new();
        write_events_csv(&events, &mut csv).unwrap();
        prop_assert_eq!(&read_events_csv(csv.as_slice()).unwrap(), &events);
        let mut jsonl = Vec::new();
        write_events_jsonl(&events, &mut jsonl).unwrap();
        prop_assert_eq!(&read_events_jsonl(jsonl.as_slice()).unwrap(), &events);
    }

    #[test]
    fn posterior_ignores_relevance_scale(r in vec(0.0f64..1.0, 5), c in 1e-3f64..1e3, target in 0usize..5) {
        let train: Vec<BTreeSet<usize>> = vec![[0].into(), [1].into(), [0, 2].into(), [].into(), [2].into()];
        let prior = label_prior(&train, 3).unwrap();
        let a = label_posterior(&r, target, &train, &prior, true);
        let scaled: Vec<f64> = r.iter().map(|v| v * c).collect();
        let b = label_posterior(&scaled, target, &train, &prior, true);
        prop_assert!((a.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        for (x, y) in a.iter().zip(b) {
            prop_assert!((x - y).abs() <= 1e-12);
        }
    }

    #[test]
    fn symmetrized_modularity_rows_sum_to_zero(scores in vec(vec(0.001f64..1.0, 7), 7), k in 1usize..6) {
        let names: Vec<String> = (0..7).map(|i| format!("t{i}")).collect();
        let g = build_rgt(&RelevanceMatrix::new(scores, 0.15, RelevanceSource::Combined).unwrap(), &names, k).unwrap();
        let b = modularity_matrix(&g);
        for i in 0..7 {
            prop_assert!(b.row(i).sum().abs() <= 1e-9);
            prop_assert!(b.column(i).sum().abs() <= 1e-9);
        }
    }

    #[test]
    fn tfidf_ignores_document_order(docs in vec("[a-d]{1,3}( [a-d]{1,3}){0,4}", 2..8), perm_seed in any::<u64>()) {
        let mut order: Vec<usize> = (0..docs.len()).collect();
        order.sort_by_key(|&i| (i as u64).wrapping_mul(perm_seed | 1).rotate_left(17));
        let refs: Vec<&str> = docs.iter().map(String::as_str).collect();
        let shuffled: Vec<&str> = order.iter().map(|&i| refs[i]).collect();
        let a = tfidf_features(&refs);
        let b = tfidf_features(&shuffled);
        prop_assert_eq!(&a.terms, &b.terms);
        for (pos, &i) in order.iter().enumerate() {
            for (x, y) in a.vectors[i].iter().zip(&b.vectors[pos]) {
                prop_assert!((x - y).abs() <= 1e-12);
            }
        }
    }
}
