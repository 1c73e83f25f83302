//! Domain types shared by every module: p-value vectors, their sorted view,
//! rejection results and adjusted p-values.

use std::collections::HashSet;
use std::fmt;

use crate::error::{Error, Result};

/// Caller-supplied opaque label of a hypothesis.
pub type HypothesisId = String;

/// A family-wise significance level in the open interval (0, 1).
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct Alpha(f64);

impl Alpha {
    pub fn new(level: f64) -> Result<Self> {
        if level > 0.0 && level < 1.0 {
            Ok(Alpha(level))
        } else {
            Err(Error::InvalidAlpha(level))
        }
    }

    #[inline]
    pub fn get(self) -> f64 {
        self.0
    }
}

impl fmt::Display for Alpha {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Validated p-values with one unique identifier per hypothesis.
#[derive(Debug, Clone, PartialEq)]
pub struct PValueVector {
    values: Vec<f64>,
    ids: Vec<HypothesisId>,
}

impl PValueVector {
    pub fn new(values: Vec<f64>, ids: Vec<HypothesisId>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Empty);
        }
        if values.len() != ids.len() {
            return Err(Error::LengthMismatch { values: values.len(), ids: ids.len() });
        }
        let mut seen = HashSet::with_capacity(ids.len());
        for (value, id) in values.iter().zip(&ids) {
            // NaN fails both comparisons.
            if !(*value >= 0.0 && *value <= 1.0) {
                return Err(Error::InvalidPValue { id: id.clone(), value: *value });
            }
            if !seen.insert(id.as_str()) {
                return Err(Error::DuplicateId(id.clone()));
            }
        }
        Ok(PValueVector { values, ids })
    }

    /// Ids default to the 1-based input positions.
    pub fn from_values(values: Vec<f64>) -> Result<Self> {
        let ids = (1..=values.len()).map(|i| i.to_string()).collect();
        Self::new(values, ids)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn ids(&self) -> &[HypothesisId] {
        &self.ids
    }

    /// Ascending view; ties keep input order.
    pub fn sorted(&self) -> SortedPValues {
        let mut order: Vec<usize> = (0..self.values.len()).collect();
        // `sort_by` is stable.
        order.sort_by(|&a, &b| self.values[a].total_cmp(&self.values[b]));
        let sorted = order.iter().map(|&i| self.values[i]).collect();
        SortedPValues { sorted, order, ids: self.ids.clone() }
    }
}

/// Ascending p-values `p_(1) <= ... <= p_(n)` plus the permutation back to
/// the original hypotheses. Ranks are 1-based throughout the public API.
#[derive(Debug, Clone, PartialEq)]
pub struct SortedPValues {
    sorted: Vec<f64>,
    order: Vec<usize>,
    ids: Vec<HypothesisId>,
}

impl SortedPValues {
    /// Convenience for tests and simulations: sort raw values with default ids.
    pub fn from_values(values: Vec<f64>) -> Result<Self> {
        Ok(PValueVector::from_values(values)?.sorted())
    }

    pub fn len(&self) -> usize {
        self.sorted.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sorted.is_empty()
    }

    /// The ascending values.
    pub fn values(&self) -> &[f64] {
        &self.sorted
    }

    /// `p_(rank)` for a 1-based rank.
    pub fn at_rank(&self, rank: usize) -> f64 {
        self.sorted[rank - 1]
    }

    /// Zero-based position in the original input of the hypothesis at `rank`.
    pub fn original_index(&self, rank: usize) -> usize {
        self.order[rank - 1]
    }

    pub fn id_at_rank(&self, rank: usize) -> &HypothesisId {
        &self.ids[self.order[rank - 1]]
    }

    /// The ids in rank order.
    pub fn rank_to_id(&self) -> Vec<HypothesisId> {
        self.order.iter().map(|&i| self.ids[i].clone()).collect()
    }

    /// Hardest-to-reject subset of size `m` containing rank `k`.
    pub fn worst_subset(&self, k: usize, m: usize) -> Result<Vec<usize>> {
        worst_subset(self.len(), k, m)
    }

    /// P-values of [`SortedPValues::worst_subset`], ascending.
    pub fn worst_subset_values(&self, k: usize, m: usize) -> Result<Vec<f64>> {
        Ok(self.worst_subset(k, m)?.into_iter().map(|r| self.at_rank(r)).collect())
    }

    pub(crate) fn ids_for_ranks(&self, ranks: &[usize]) -> Vec<HypothesisId> {
        ranks.iter().map(|&r| self.id_at_rank(r).clone()).collect()
    }
}

/// Ranks (ascending, 1-based) of the size-`m` subset of `1..=n` that contains
/// `k` together with the `m - 1` largest other ranks.
pub fn worst_subset(n: usize, k: usize, m: usize) -> Result<Vec<usize>> {
    if k == 0 || k > n {
        return Err(Error::OutOfRange { what: "rank k", value: k, max: n });
    }
    if m == 0 || m > n {
        return Err(Error::OutOfRange { what: "subset size m", value: m, max: n });
    }
    if m <= n - k + 1 {
        let mut ranks = Vec::with_capacity(m);
        ranks.push(k);
        ranks.extend(n - m + 2..=n);
        Ok(ranks)
    } else {
        Ok((n - m + 1..=n).collect())
    }
}

/// Outcome of a multiple-testing run.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RejectionResult {
    /// 1-based sorted ranks of the rejected hypotheses, ascending.
    pub rejected_ranks: Vec<usize>,
    pub rejected_ids: Vec<HypothesisId>,
    /// Number of local-test invocations.
    pub local_test_calls: usize,
    /// Outer stage at which the procedure halted; `n + 1` when everything
    /// was rejected.
    pub stop_stage: usize,
}

impl RejectionResult {
    pub(crate) fn prefix(sorted: &SortedPValues, count: usize, calls: usize) -> Self {
        let ranks: Vec<usize> = (1..=count).collect();
        RejectionResult {
            rejected_ids: sorted.ids_for_ranks(&ranks),
            rejected_ranks: ranks,
            local_test_calls: calls,
            stop_stage: count + 1,
        }
    }

    pub(crate) fn from_ranks(sorted: &SortedPValues, ranks: Vec<usize>, calls: usize, stop_stage: usize) -> Self {
        RejectionResult {
            rejected_ids: sorted.ids_for_ranks(&ranks),
            rejected_ranks: ranks,
            local_test_calls: calls,
            stop_stage,
        }
    }

    pub fn rejected_count(&self) -> usize {
        self.rejected_ranks.len()
    }

    /// Per-rank flags, `true` where the hypothesis at that rank is rejected.
    pub fn rank_flags(&self, n: usize) -> Vec<bool> {
        let mut flags = vec![false; n];
        for &r in &self.rejected_ranks {
            flags[r - 1] = true;
        }
        flags
    }
}

/// Adjusted p-values in sorted-rank order.
#[derive(Debug, Clone, PartialEq)]
pub struct AdjustedPValues {
    pub adjusted: Vec<f64>,
    pub rank_to_id: Vec<HypothesisId>,
}

impl AdjustedPValues {
    /// Ranks whose adjusted p-value is at most `alpha`, with the same slack
    /// the local tests use for p-value decisions.
    pub fn rejected_ranks(&self, alpha: Alpha) -> Vec<usize> {
        self.adjusted
            .iter()
            .enumerate()
            .filter(|(_, &p)| crate::local_tests::pvalue_rejects(p, alpha))
            .map(|(i, _)| i + 1)
            .collect()
    }
}
