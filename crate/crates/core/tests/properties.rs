//! Property tests for the engine, the worst-subset construction and the
//! closure oracle.

use std::sync::Arc;

use fact_core::local_tests::{LocalTest, DECISION_RTOL};
use fact_core::pvalues::worst_subset;
use fact_core::{
    brute_force_closure, fact_adjusted, fact_reject, holm, hommel, Alpha, Bonferroni, Fisher, PValueVector,
    RulePlan, Simes, SortedPValues, Stouffer,
};
use proptest::prelude::*;

fn plan(which: usize, n: usize) -> RulePlan {
    let t: Arc<dyn LocalTest> = match which % 4 {
        0 => Arc::new(Bonferroni),
        1 => Arc::new(Simes),
        2 => Arc::new(Fisher),
        _ => Arc::new(Stouffer),
    };
    RulePlan::uniform(t, n).unwrap()
}

/// P-values in (0, 1] with some mass near zero and occasional ties.
fn pvalue() -> impl Strategy<Value = f64> {
    prop_oneof![
        3 => 1e-6..=1.0f64,
        2 => 1e-12..0.05f64,
        1 => (1u32..=20).prop_map(|k| k as f64 / 20.0),
    ]
}

fn pvalues(max: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(pvalue(), 1..=max)
}

fn sorted(v: Vec<f64>) -> SortedPValues {
    SortedPValues::from_values(v).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn fact_matches_closure(p in pvalues(9), which in 0usize..4, a in 0.01..0.3f64) {
        let s = sorted(p);
        let plan = plan(which, s.len());
        let alpha = Alpha::new(a).unwrap();
        let fact = fact_reject(&s, &plan, alpha).unwrap();
        let closure = brute_force_closure(&s, &plan, alpha).unwrap();
        prop_assert_eq!(&fact.rejected_ranks, &closure.rejected_ranks);
        prop_assert!(fact.local_test_calls <= (fact.rejected_count() + 1) * s.len());
        // Rejections are always a prefix of the ranks.
        prop_assert!(fact.rejected_ranks.iter().enumerate().all(|(i, &r)| r == i + 1));
    }

    #[test]
    fn adjusted_pvalues_are_ordered(p in pvalues(12), which in 0usize..4) {
        let s = sorted(p);
        let adj = fact_adjusted(&s, &plan(which, s.len())).unwrap();
        for (k, w) in adj.adjusted.windows(2).enumerate() {
            prop_assert!(w[0] <= w[1], "rank {} -> {}: {:?}", k + 1, k + 2, adj.adjusted);
        }
        // Stouffer's size-one p-value is Phi(Phi^-1(p)), exact only to a few ulps.
        for (q, &p) in adj.adjusted.iter().zip(s.values()) {
            prop_assert!(*q >= p * (1.0 - DECISION_RTOL) && *q <= 1.0, "{q} < {p}");
        }
    }

    #[test]
    fn rejections_grow_with_alpha(p in pvalues(15), which in 0usize..4, a in 0.001..0.5f64, b in 0.001..0.5f64) {
        let s = sorted(p);
        let plan = plan(which, s.len());
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let r_lo = fact_reject(&s, &plan, Alpha::new(lo).unwrap()).unwrap();
        let r_hi = fact_reject(&s, &plan, Alpha::new(hi).unwrap()).unwrap();
        prop_assert!(r_lo.rejected_count() <= r_hi.rejected_count());
    }

    #[test]
    fn rejections_grow_as_pvalues_shrink(
        p in pvalues(15),
        shrink in prop::collection::vec(0.0..=1.0f64, 15),
        which in 0usize..4,
    ) {
        let q: Vec<f64> = p.iter().zip(&shrink).map(|(x, f)| x * f).collect();
        let plan = plan(which, p.len());
        let alpha = Alpha::new(0.05).unwrap();
        // Compare by original position: the rejected set can only grow.
        let ids = |v: &[f64]| {
            let r = fact_reject(&sorted(v.to_vec()), &plan, alpha).unwrap();
            let mut ids = r.rejected_ids;
            ids.sort();
            ids
        };
        let before = ids(&p);
        let after = ids(&q);
        prop_assert!(before.iter().all(|id| after.contains(id)), "{before:?} vs {after:?}");
    }

    #[test]
    fn closure_is_permutation_equivariant(p in pvalues(8), seed in any::<u64>(), which in 0usize..4) {
        let n = p.len();
        let ids: Vec<String> = (0..n).map(|i| format!("h{i}")).collect();
        let mut perm: Vec<usize> = (0..n).collect();
        // Fisher-Yates driven by the seed.
        let mut state = seed | 1;
        for i in (1..n).rev() {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            perm.swap(i, (state % (i as u64 + 1)) as usize);
        }
        let plan = plan(which, n);
        let alpha = Alpha::new(0.1).unwrap();
        let run = |values: Vec<f64>, ids: Vec<String>| {
            let s = PValueVector::new(values, ids).unwrap().sorted();
            let mut out = brute_force_closure(&s, &plan, alpha).unwrap().rejected_ids;
            out.sort();
            out
        };
        let base = run(p.clone(), ids.clone());
        let shuffled = run(perm.iter().map(|&i| p[i]).collect(), perm.iter().map(|&i| ids[i].clone()).collect());
        prop_assert_eq!(base, shuffled);
    }

    #[test]
    fn hommel_contains_holm(p in pvalues(40), a in 0.01..0.2f64) {
        let s = sorted(p);
        let alpha = Alpha::new(a).unwrap();
        prop_assert!(holm(&s, alpha).rejected_count() <= hommel(&s, alpha).rejected_count());
    }

    #[test]
    fn worst_subset_shape(n in 1usize..40, k_frac in 0.0..1.0f64, m_frac in 0.0..1.0f64) {
        let k = 1 + ((n - 1) as f64 * k_frac) as usize;
        let m = 1 + ((n - 1) as f64 * m_frac) as usize;
        let w = worst_subset(n, k, m).unwrap();
        prop_assert_eq!(w.len(), m);
        prop_assert!(w.contains(&k));
        prop_assert!(w.windows(2).all(|x| x[0] < x[1]));
        prop_assert!(w.iter().all(|&r| (1..=n).contains(&r)));
        if k < n {
            let next = worst_subset(n, k + 1, m).unwrap();
            prop_assert!(w.iter().zip(&next).all(|(a, b)| a <= b));
        }
    }
}

/// Exhaustive domination check: among all size-`m` subsets containing rank
/// `k`, the worst subset is coordinatewise largest once sorted.
#[test]
fn worst_subset_dominates_every_alternative() {
    for n in 1..=8usize {
        for k in 1..=n {
            for m in 1..=n {
                let worst = worst_subset(n, k, m).unwrap();
                for mask in 0u32..(1 << n) {
                    if mask.count_ones() as usize != m || mask & (1 << (k - 1)) == 0 {
                        continue;
                    }
                    let other: Vec<usize> = (1..=n).filter(|r| mask & (1 << (r - 1)) != 0).collect();
                    assert!(
                        other.iter().zip(&worst).all(|(o, w)| o <= w),
                        "n={n} k={k} m={m}: {other:?} not dominated by {worst:?}"
                    );
                }
            }
        }
    }
}
