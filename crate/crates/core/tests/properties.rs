mod common;

use common::{oracle_bh, oracle_by, oracle_paired_minimal, oracle_paired_union, oracle_score, oracle_threshold};
use mirrorsel::baselines::{bh_adjust, by_adjust, qvalue_select, Adjustment, PValueSet, PValueSource};
use mirrorsel::causal::Clip;
use mirrorsel::mirrors::{
    inclusion_rates, original_mirror, paired_minimal_select, paired_mirrors, paired_union_select, select_threshold,
    Criterion, FunctionalForm, MirrorSet, SelectionResult,
};
use mirrorsel::simulation::{score_selection, Truth};
use mirrorsel::StandardizedPair;
use proptest::prelude::*;

/// Coarse values so ties and zeros are common.
fn mirror_pair(max_len: usize) -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    (1..=max_len).prop_flat_map(|p| {
        let v = || prop::collection::vec((-12i32..=12).prop_map(|k| f64::from(k) * 0.25), p);
        (v(), v())
    })
}

fn level() -> impl Strategy<Value = f64> {
    (1u32..=60).prop_map(|k| f64::from(k) / 100.0)
}

fn pvalues(max_len: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(prop_oneof![(0u32..=20).prop_map(|k| f64::from(k) / 20.0), 0.0..=1.0f64], 1..=max_len)
}

fn split_vec() -> impl Strategy<Value = [f64; 2]> {
    prop_oneof![
        (-4.0..4.0f64, -4.0..4.0f64).prop_map(|(a, b)| [a, b]),
        (-4i32..=4, -4i32..=4).prop_map(|(a, b)| [f64::from(a), f64::from(b)]),
    ]
}

fn subset(a: &SelectionResult, b: &SelectionResult) -> bool {
    a.selected.iter().all(|j| b.contains(*j))
}

/// Classical step-up: reject the `k` smallest, `k` the largest `i` with
/// `c m p_(i) / i <= q`.
fn step_up_rejections(p: &[f64], q: f64, c: f64) -> Vec<usize> {
    let m = p.len();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&i, &j| p[i].total_cmp(&p[j]));
    let k = (1..=m).rev().find(|&i| c * m as f64 / i as f64 * p[order[i - 1]] <= q).unwrap_or(0);
    let mut out: Vec<usize> = order[..k].to_vec();
    out.sort_unstable();
    out
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn thresholding_matches_brute_force((my, ma) in mirror_pair(50), q in level()) {
        prop_assert_eq!(select_threshold(&my, q).unwrap().selected, oracle_threshold(&my, q));
        prop_assert_eq!(paired_union_select(&my, &ma, q).unwrap().selected, oracle_paired_union(&my, &ma, q));
        prop_assert_eq!(paired_minimal_select(&my, &ma, q).unwrap().selected, oracle_paired_minimal(&my, &ma, q));
    }

    #[test]
    fn bound_respects_q((my, ma) in mirror_pair(40), q in level()) {
        for r in [
            select_threshold(&my, q).unwrap(),
            paired_union_select(&my, &ma, q).unwrap(),
            paired_minimal_select(&my, &ma, q).unwrap(),
        ] {
            if !r.selected.is_empty() {
                prop_assert!(r.fdp_bound <= q);
            }
        }
    }

    #[test]
    fn larger_q_never_shrinks_the_selection((my, ma) in mirror_pair(40), q1 in level(), q2 in level()) {
        let (lo, hi) = if q1 <= q2 { (q1, q2) } else { (q2, q1) };
        prop_assert!(subset(&select_threshold(&my, lo).unwrap(), &select_threshold(&my, hi).unwrap()));
        prop_assert!(subset(&paired_union_select(&my, &ma, lo).unwrap(), &paired_union_select(&my, &ma, hi).unwrap()));
        prop_assert!(subset(
            &paired_minimal_select(&my, &ma, lo).unwrap(),
            &paired_minimal_select(&my, &ma, hi).unwrap()
        ));
    }

    #[test]
    fn selection_is_scale_free((my, ma) in mirror_pair(40), q in level(), c in prop_oneof![0.001..1000.0f64, Just(7.0)]) {
        let scale = |v: &[f64]| v.iter().map(|x| x * c).collect::<Vec<_>>();
        let (sy, sa) = (scale(&my), scale(&ma));
        prop_assert_eq!(select_threshold(&my, q).unwrap().selected, select_threshold(&sy, q).unwrap().selected);
        prop_assert_eq!(
            paired_union_select(&my, &ma, q).unwrap().selected,
            paired_union_select(&sy, &sa, q).unwrap().selected
        );
        prop_assert_eq!(
            paired_minimal_select(&my, &ma, q).unwrap().selected,
            paired_minimal_select(&sy, &sa, q).unwrap().selected
        );
    }

    #[test]
    fn negating_one_half_flips_every_mirror(t1 in split_vec(), t2 in split_vec()) {
        let neg = [-t2[0], -t2[1]];
        for c in [Criterion::Or, Criterion::And] {
            for form in FunctionalForm::all_for(c) {
                let m = form.evaluate(t1, t2);
                prop_assert!(m == -form.evaluate(t1, neg) || (m == 0.0 && form.evaluate(t1, neg) == 0.0), "{form:?}");
                prop_assert_eq!(m, form.evaluate(t2, t1), "{:?}", form);
            }
        }
        let m = original_mirror(&t1, &t2).unwrap();
        let flipped = original_mirror(&t1, &neg).unwrap();
        let swapped = original_mirror(&t2, &t1).unwrap();
        for j in 0..2 {
            prop_assert_eq!(m[j], -flipped[j]);
            prop_assert_eq!(m[j], swapped[j]);
        }
    }

    #[test]
    fn swapping_halves_leaves_paired_mirrors_unchanged(rows in prop::collection::vec((split_vec(), split_vec()), 1..30)) {
        let pair = StandardizedPair { t1: rows.iter().map(|r| r.0).collect(), t2: rows.iter().map(|r| r.1).collect() };
        let unpack = |s: MirrorSet| match s {
            MirrorSet::Paired { m_y, m_a, .. } => (m_y, m_a),
            MirrorSet::Single { .. } => unreachable!(),
        };
        prop_assert_eq!(unpack(paired_mirrors(&pair, Criterion::Or)), unpack(paired_mirrors(&pair.swapped(), Criterion::Or)));
    }

    #[test]
    fn adjusted_pvalues(p in pvalues(20), seed in any::<u64>()) {
        let bh = bh_adjust(&p);
        let by = by_adjust(&p);
        let (obh, oby) = (oracle_bh(&p), oracle_by(&p));
        for j in 0..p.len() {
            prop_assert!((bh[j] - obh[j]).abs() <= 1e-12 * obh[j].max(1e-300) + 1e-15, "{} vs {}", bh[j], obh[j]);
            prop_assert!((by[j] - oby[j]).abs() <= 1e-12 * oby[j].max(1e-300) + 1e-15);
            prop_assert!(bh[j] >= p[j] && by[j] >= bh[j] && by[j] <= 1.0);
        }
        let mut order: Vec<usize> = (0..p.len()).collect();
        order.sort_by(|&i, &j| p[i].total_cmp(&p[j]));
        prop_assert!(order.windows(2).all(|w| bh[w[0]] <= bh[w[1]] && by[w[0]] <= by[w[1]]));

        let mut perm: Vec<usize> = (0..p.len()).collect();
        let mut s = seed;
        for i in (1..perm.len()).rev() {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            perm.swap(i, (s >> 33) as usize % (i + 1));
        }
        let permuted: Vec<f64> = perm.iter().map(|&i| p[i]).collect();
        let bh_perm = bh_adjust(&permuted);
        let by_perm = by_adjust(&permuted);
        for (k, &i) in perm.iter().enumerate() {
            prop_assert_eq!(bh_perm[k], bh[i]);
            prop_assert_eq!(by_perm[k], by[i]);
        }
    }

    #[test]
    fn qvalue_selection_is_the_step_up_rule(p in pvalues(20), q in level()) {
        let set = PValueSet { p_union: p.clone(), p_minimal: p.clone(), source: PValueSource::JointMle };
        let c_by: f64 = (1..=p.len()).map(|i| 1.0 / i as f64).sum();
        prop_assert_eq!(qvalue_select(&set, Criterion::Or, Adjustment::Bh, q).unwrap().selected, step_up_rejections(&p, q, 1.0));
        prop_assert_eq!(qvalue_select(&set, Criterion::And, Adjustment::By, q).unwrap().selected, step_up_rejections(&p, q, c_by));
    }

    #[test]
    fn inclusion_rates_are_averaged_shares(
        p in 1usize..30,
        sets in prop::collection::vec(prop::collection::btree_set(0usize..30, 0..10), 1..8),
    ) {
        let sets: Vec<Vec<usize>> = sets.into_iter().map(|s| s.into_iter().filter(|&j| j < p).collect()).collect();
        let r = inclusion_rates(&sets, p).unwrap();
        prop_assert_eq!(r.repeats, sets.len());
        for (j, &rate) in r.rates.iter().enumerate() {
            let expect = sets.iter().map(|s| if s.contains(&j) { 1.0 / s.len() as f64 } else { 0.0 }).sum::<f64>() / sets.len() as f64;
            prop_assert!((0.0..=1.0).contains(&rate));
            prop_assert!((rate - expect).abs() < 1e-12);
        }
        prop_assert!(r.rates.iter().sum::<f64>() <= 1.0 + 1e-12);
    }

    #[test]
    fn scoring_matches_set_arithmetic(
        sel in prop::collection::btree_set(0usize..50, 0..50),
        sy in prop::collection::btree_set(0usize..50, 0..50),
        sa in prop::collection::btree_set(0usize..50, 0..50),
    ) {
        let truth = Truth { s_y: sy.into_iter().collect(), s_a: sa.into_iter().collect() };
        let sel: Vec<usize> = sel.into_iter().collect();
        let m = score_selection(&sel, &truth);
        prop_assert_eq!(m, oracle_score(&sel, &truth));
        prop_assert!(m.values().iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn clipped_weights_are_finite_and_positive(e in prop_oneof![Just(0.0), Just(1.0), 0.0..=1.0f64]) {
        let c = Clip::default().apply(e);
        let (w1, w0) = (1.0 / c, 1.0 / (1.0 - c));
        prop_assert!(w1.is_finite() && w1 > 0.0 && w0.is_finite() && w0 > 0.0);
    }
}
