//! Holm's and Hommel's procedures written out directly, as independent
//! references for the closed-testing engine.

use crate::pvalues::{Alpha, RejectionResult, SortedPValues};

/// Step-down Holm: reject rank `k` iff `p_(i) <= alpha / (n - i + 1)` for all
/// `i <= k`.
pub fn holm(sorted: &SortedPValues, alpha: Alpha) -> RejectionResult {
    let n = sorted.len();
    let count = sorted
        .values()
        .iter()
        .enumerate()
        .take_while(|(i, &p)| p <= alpha.get() / (n - i) as f64)
        .count();
    RejectionResult::prefix(sorted, count, 0)
}

/// Hommel: let `j` be the largest index with `p_(n-j+k) > k alpha / j` for
/// every `k <= j`. Reject everything if no such `j` exists, otherwise reject
/// the hypotheses with `p <= alpha / j`.
///
/// This is the plain quadratic scan, deliberately sharing no code with the
/// Simes test.
pub fn hommel(sorted: &SortedPValues, alpha: Alpha) -> RejectionResult {
    let n = sorted.len();
    let p = sorted.values();
    let a = alpha.get();
    let j = (1..=n)
        .rev()
        .find(|&j| (1..=j).all(|k| p[n - j + k - 1] > k as f64 * a / j as f64));
    let count = match j {
        None => n,
        Some(j) => p.partition_point(|&x| x <= a / j as f64),
    };
    RejectionResult::prefix(sorted, count, 0)
}
