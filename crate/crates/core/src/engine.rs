//! Closed testing in polynomial time for monotone symmetric local tests.
//!
//! For such tests the hardest subset containing the rank-`k` hypothesis is
//! `p_(k)` together with the largest remaining p-values, so closed testing
//! reduces to a staged scan over those subsets.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::local_tests::LocalTest;
use crate::pvalues::{AdjustedPValues, Alpha, RejectionResult, SortedPValues};

/// Assignment of a local test to every subset size `1..=n_max`.
#[derive(Clone)]
pub struct RulePlan {
    tests: Vec<Arc<dyn LocalTest>>,
    /// `assign[m - 1]` indexes into `tests`.
    assign: Vec<usize>,
}

impl RulePlan {
    /// The same test at every size.
    pub fn uniform(test: Arc<dyn LocalTest>, n_max: usize) -> Result<Self> {
        if n_max == 0 {
            return Err(Error::param("n_max", "a plan must cover at least size 1"));
        }
        Ok(RulePlan { tests: vec![test], assign: vec![0; n_max] })
    }

    /// `small` for sizes `1..=cutoff`, `large` above it, up to `n_max`.
    pub fn split(small: Arc<dyn LocalTest>, large: Arc<dyn LocalTest>, cutoff: usize, n_max: usize) -> Result<Self> {
        if n_max == 0 || cutoff == 0 || cutoff > n_max {
            return Err(Error::param("cutoff", format!("cutoff {cutoff} is outside 1..={n_max}")));
        }
        let assign = (1..=n_max).map(|m| usize::from(m > cutoff)).collect();
        Ok(RulePlan { tests: vec![small, large], assign })
    }

    /// One test per size, `per_size[m - 1]` for size `m`.
    pub fn from_sizes(per_size: Vec<Arc<dyn LocalTest>>) -> Result<Self> {
        if per_size.is_empty() {
            return Err(Error::param("per_size", "a plan must cover at least size 1"));
        }
        let assign = (0..per_size.len()).collect();
        Ok(RulePlan { tests: per_size, assign })
    }

    pub fn n_max(&self) -> usize {
        self.assign.len()
    }

    pub fn test_for(&self, m: usize) -> Result<&dyn LocalTest> {
        if m == 0 || m > self.assign.len() {
            return Err(Error::PlanGap { size: m, covered: self.assign.len() });
        }
        Ok(self.tests[self.assign[m - 1]].as_ref())
    }

    /// Maximal runs of sizes sharing a test, as `(first, last, test)`.
    pub fn segments(&self) -> Vec<(usize, usize, &dyn LocalTest)> {
        let mut out: Vec<(usize, usize, &dyn LocalTest)> = Vec::new();
        for (i, &t) in self.assign.iter().enumerate() {
            match out.last_mut() {
                Some(last) if self.assign[last.1 - 1] == t => last.1 = i + 1,
                _ => out.push((i + 1, i + 1, self.tests[t].as_ref())),
            }
        }
        out
    }

    fn covers(&self, n: usize) -> Result<()> {
        if n > self.n_max() {
            Err(Error::PlanGap { size: n, covered: self.n_max() })
        } else {
            Ok(())
        }
    }
}

impl fmt::Debug for RulePlan {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut list = f.debug_list();
        for (lo, hi, t) in self.segments() {
            list.entry(&format_args!("{lo}..={hi}: {} {}", t.name(), t.params()));
        }
        list.finish()
    }
}

fn at_stage(stage: usize) -> impl FnOnce(Error) -> Error {
    move |e| Error::Stage { stage, source: Box::new(e) }
}

fn check_call_bound(result: &RejectionResult, n: usize) {
    assert!(
        result.local_test_calls <= (result.rejected_count() + 1) * n,
        "{} local-test calls exceed (s + 1) n with s = {}, n = {n}",
        result.local_test_calls,
        result.rejected_count()
    );
}

/// Rejections of the closed testing procedure built on `plan`, computed with
/// at most `(s + 1) n` local-test calls where `s` is the number rejected.
///
/// Stage `k` tests `{p_(k)} ∪ {p_(j+1), ..., p_(n)}` for `j = k..=n` with the
/// size-`(n - j + 1)` rule. The first accepted subset stops the procedure
/// and ranks `1..k` (exclusive) are rejected.
pub fn fact_reject(sorted: &SortedPValues, plan: &RulePlan, alpha: Alpha) -> Result<RejectionResult> {
    let n = sorted.len();
    plan.covers(n)?;
    let values = sorted.values();
    // The tested subset is always ascending: p_(k) goes right in front of the
    // tail, so a scratch copy with one patched slot serves every call.
    let mut scratch = values.to_vec();
    let mut calls = 0;
    for k in 1..=n {
        for j in k..=n {
            let saved = scratch[j - 1];
            scratch[j - 1] = values[k - 1];
            let rejected = plan.test_for(n - j + 1)?.reject_sorted(&scratch[j - 1..], alpha);
            scratch[j - 1] = saved;
            calls += 1;
            if !rejected.map_err(at_stage(k))? {
                let result = RejectionResult::prefix(sorted, k - 1, calls);
                check_call_bound(&result, n);
                return Ok(result);
            }
        }
    }
    let result = RejectionResult::prefix(sorted, n, calls);
    check_call_bound(&result, n);
    Ok(result)
}

/// Adjusted p-values: for rank `k`, the largest local p-value over the
/// hardest subset of each size containing `k`, made non-decreasing in rank.
pub fn fact_adjusted(sorted: &SortedPValues, plan: &RulePlan) -> Result<AdjustedPValues> {
    let n = sorted.len();
    plan.covers(n)?;
    let mut adjusted = Vec::with_capacity(n);
    let mut running = 0.0f64;
    for k in 1..=n {
        let mut worst = 0.0f64;
        for m in 1..=n {
            let subset = sorted.worst_subset_values(k, m)?;
            let p = plan.test_for(m)?.pvalue_sorted(&subset).map_err(at_stage(k))?;
            worst = worst.max(p);
        }
        running = running.max(worst).min(1.0);
        adjusted.push(running);
    }
    Ok(AdjustedPValues { adjusted, rank_to_id: sorted.rank_to_id() })
}

/// Stage `k` tests only `{p_(k), ..., p_(n)}`, one call per stage.
///
/// That subset is one of those [`fact_reject`] tests at the same stage, so
/// the shortcut always rejects at least what closed testing rejects. It is
/// exact when `{p_(k), ..., p_(n)}` is the hardest subset containing rank `k`,
/// as for Bonferroni (where it reproduces Holm). Consonance of the closure
/// alone does not guarantee this: with a Simes plan the shortcut can reject
/// hypotheses that Hommel keeps. Checking the condition is the caller's job.
pub fn consonant_shortcut(sorted: &SortedPValues, plan: &RulePlan, alpha: Alpha) -> Result<RejectionResult> {
    let n = sorted.len();
    plan.covers(n)?;
    let values = sorted.values();
    for k in 1..=n {
        let rejected = plan.test_for(n - k + 1)?.reject_sorted(&values[k - 1..], alpha).map_err(at_stage(k))?;
        if !rejected {
            return Ok(RejectionResult::prefix(sorted, k - 1, k));
        }
    }
    Ok(RejectionResult::prefix(sorted, n, n))
}
