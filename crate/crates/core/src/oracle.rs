//! Exhaustive closed testing over all `2^n - 1` nonempty subsets: slow, but
//! makes no structural assumptions, so it is the ground truth for the engine.

use std::fmt;

use crate::engine::{fact_reject, RulePlan};
use crate::error::{Error, Result};
use crate::parallel::Execution;
use crate::pvalues::{Alpha, RejectionResult, SortedPValues};

/// Largest `n` the brute-force closure accepts.
pub const BRUTE_FORCE_CAP: usize = 20;

const CHUNK: u64 = 1 << 12;

fn subset_values(values: &[f64], mask: u64, buf: &mut Vec<f64>) {
    buf.clear();
    // Bits in rank order give an ascending subset.
    buf.extend(values.iter().enumerate().filter(|(i, _)| mask >> i & 1 == 1).map(|(_, &p)| p));
}

/// Union of all accepted subsets, as a rank bitmask.
fn accepted_union(sorted: &SortedPValues, plan: &RulePlan, alpha: Alpha, exec: Execution) -> Result<u64> {
    let n = sorted.len();
    let values = sorted.values();
    let total = 1u64 << n;
    let chunks = total.div_ceil(CHUNK) as usize;
    let parts = exec.try_map(chunks, |c| -> Result<u64> {
        let mut union = 0u64;
        let mut buf = Vec::with_capacity(n);
        let lo = (c as u64 * CHUNK).max(1);
        let hi = ((c as u64 + 1) * CHUNK).min(total);
        for mask in lo..hi {
            subset_values(values, mask, &mut buf);
            if !plan.test_for(buf.len())?.reject_sorted(&buf, alpha)? {
                union |= mask;
            }
        }
        Ok(union)
    })?;
    Ok(parts.into_iter().fold(0, |a, b| a | b))
}

fn check_cap(n: usize) -> Result<()> {
    if n > BRUTE_FORCE_CAP {
        Err(Error::TooLarge { n, cap: BRUTE_FORCE_CAP })
    } else {
        Ok(())
    }
}

/// Rank `i` is rejected iff every subset containing it is rejected by the
/// plan's rule for that subset's size. Refuses `n > 20`.
pub fn brute_force_closure(sorted: &SortedPValues, plan: &RulePlan, alpha: Alpha) -> Result<RejectionResult> {
    let n = sorted.len();
    check_cap(n)?;
    if n > plan.n_max() {
        return Err(Error::PlanGap { size: n, covered: plan.n_max() });
    }
    let union = accepted_union(sorted, plan, alpha, Execution::default())?;
    let ranks: Vec<usize> = (1..=n).filter(|r| union >> (r - 1) & 1 == 0).collect();
    let stop = ranks.len() + 1;
    Ok(RejectionResult::from_ranks(sorted, ranks, (1usize << n) - 1, stop))
}

/// Whether closed testing rejects any of the given true-null ranks.
pub fn fwer_witness(sorted: &SortedPValues, plan: &RulePlan, alpha: Alpha, true_null_ranks: &[usize]) -> Result<bool> {
    let r = brute_force_closure(sorted, plan, alpha)?;
    Ok(true_null_ranks.iter().any(|t| r.rejected_ranks.contains(t)))
}

/// Disagreement between the engine and exhaustive enumeration.
#[derive(Debug, Clone, PartialEq)]
pub struct Mismatch {
    pub fact_ranks: Vec<usize>,
    pub closure_ranks: Vec<usize>,
    /// Smallest accepted subset (by size, then enumeration order) that
    /// contains a rank on which the two disagree.
    pub subset_ranks: Vec<usize>,
    pub subset_values: Vec<f64>,
}

impl fmt::Display for Mismatch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "fast rejections {:?} != closure rejections {:?}; accepted subset ranks {:?} with p-values {:?}",
            self.fact_ranks, self.closure_ranks, self.subset_ranks, self.subset_values
        )
    }
}

/// Runs both and returns `None` when they agree.
pub fn compare_with_closure(sorted: &SortedPValues, plan: &RulePlan, alpha: Alpha) -> Result<Option<Mismatch>> {
    let closure = brute_force_closure(sorted, plan, alpha)?;
    let fact = fact_reject(sorted, plan, alpha)?;
    if closure.rejected_ranks == fact.rejected_ranks {
        return Ok(None);
    }
    let n = sorted.len();
    let fact_flags = fact.rank_flags(n);
    let closure_flags = closure.rank_flags(n);
    let differing: u64 = (0..n).filter(|&i| fact_flags[i] != closure_flags[i]).fold(0, |m, i| m | 1 << i);
    let mut buf = Vec::with_capacity(n);
    let mut best: Option<u64> = None;
    for mask in 1..1u64 << n {
        if mask & differing == 0 || best.is_some_and(|b| b.count_ones() <= mask.count_ones()) {
            continue;
        }
        subset_values(sorted.values(), mask, &mut buf);
        if !plan.test_for(buf.len())?.reject_sorted(&buf, alpha)? {
            best = Some(mask);
        }
    }
    let mask = best.unwrap_or(differing);
    let subset_ranks: Vec<usize> = (1..=n).filter(|r| mask >> (r - 1) & 1 == 1).collect();
    let subset_values = subset_ranks.iter().map(|&r| sorted.at_rank(r)).collect();
    Ok(Some(Mismatch {
        fact_ranks: fact.rejected_ranks,
        closure_ranks: closure.rejected_ranks,
        subset_ranks,
        subset_values,
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::local_tests::{Bonferroni, NonMonotoneControl, Simes};
    use std::sync::Arc;

    fn a(x: f64) -> Alpha {
        Alpha::new(x).unwrap()
    }

    fn sp(v: &[f64]) -> SortedPValues {
        SortedPValues::from_values(v.to_vec()).unwrap()
    }

    #[test]
    fn examples() {
        let bonf = |n| RulePlan::uniform(Arc::new(Bonferroni), n).unwrap();
        assert_eq!(brute_force_closure(&sp(&[0.04]), &bonf(1), a(0.05)).unwrap().rejected_ranks, vec![1]);
        let r = brute_force_closure(&sp(&[0.01, 0.02, 0.2]), &bonf(3), a(0.05)).unwrap();
        assert_eq!(r.rejected_ranks, vec![1, 2]);
        assert_eq!(r.local_test_calls, 7);
    }

    #[test]
    fn refuses_above_cap() {
        let s = sp(&[0.5; 21]);
        let plan = RulePlan::uniform(Arc::new(Simes), 21).unwrap();
        assert!(matches!(brute_force_closure(&s, &plan, a(0.05)), Err(Error::TooLarge { n: 21, cap: 20 })));
    }

    #[test]
    fn witness_trivia() {
        let s = sp(&[1.0, 1.0, 1.0]);
        let plan = RulePlan::uniform(Arc::new(Simes), 3).unwrap();
        assert!(!fwer_witness(&s, &plan, a(0.05), &[1, 2, 3]).unwrap());
        let s = sp(&[0.0001, 0.0002, 0.3]);
        assert!(!fwer_witness(&s, &plan, a(0.05), &[]).unwrap());
        assert!(fwer_witness(&s, &plan, a(0.05), &[2]).unwrap());
    }

    #[test]
    fn non_monotone_control_produces_mismatch() {
        let s = sp(&[0.02, 0.3, 0.999]);
        let plan = RulePlan::uniform(Arc::new(NonMonotoneControl), 3).unwrap();
        let m = compare_with_closure(&s, &plan, a(0.05)).unwrap().expect("mismatch");
        assert_ne!(m.fact_ranks, m.closure_ranks);
        assert!(!m.subset_ranks.is_empty());
        assert!(m.to_string().contains("accepted subset"));
    }
}
