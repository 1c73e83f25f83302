//! Level-alpha tests of intersection nulls.
//!
//! Every test is oriented so that a smaller statistic is more significant,
//! and every shipped test is monotone (lowering any p-value never turns a
//! rejection into an acceptance) and symmetric (only the multiset of p-values
//! matters). These two properties are what the closed-testing shortcut in
//! [`crate::engine`] relies on.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::pvalues::Alpha;

mod analytic;
mod calibrated;
mod calibration;
mod check;
mod simes_family;

pub use analytic::{Bonferroni, Fisher, Simes, Stouffer, Wilkinson, STOUFFER_CLAMP};
pub use calibrated::{
    CalibratedTest, HcStatistic, HigherCriticism, MonotoneCombination, MonotoneStatistic, SumStatistic,
    TpmStatistic, TruncatedProduct,
};
pub use calibration::{
    calibrate, null_statistics, Calibrator, CriticalValueTable, Provenance, MIN_CALIBRATION_SAMPLES,
};
pub use check::{
    check_monotone_symmetric, CheckReport, Composed, Composition, Counterexample, FirstCoordinateControl,
    NonMonotoneControl, ViolationKind,
};
pub use simes_family::{GeneralizedSimes, GeneralizedSimesCriticalMatrix, HhhConstants, HybridHochbergHommel};

/// Relative slack for p-value-versus-alpha decisions. Closed-form identities
/// such as `exp(ln 0.05) = 0.05` only hold to within a few ulps.
pub const DECISION_RTOL: f64 = 1e-12;

#[inline]
pub(crate) fn pvalue_rejects(pvalue: f64, alpha: Alpha) -> bool {
    pvalue <= alpha.get() * (1.0 + DECISION_RTOL)
}

/// Scalar summand `f` of a monotone combination `T = sum f(p_i)`.
pub type Summand = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// A size-indexed family of intersection-null tests.
///
/// The `*_sorted` methods receive the subset in ascending order and are what
/// the engine calls; the unsorted entry points sort a copy first.
pub trait LocalTest: Send + Sync + fmt::Debug {
    fn name(&self) -> &str;

    /// Parameter string, part of the calibration cache key.
    fn params(&self) -> String {
        String::new()
    }

    /// Test statistic of an ascending subset; smaller is more significant.
    fn statistic_sorted(&self, sorted: &[f64]) -> f64;

    fn reject_sorted(&self, sorted: &[f64], alpha: Alpha) -> Result<bool>;

    fn pvalue_sorted(&self, sorted: &[f64]) -> Result<f64>;

    fn needs_calibration(&self) -> bool {
        false
    }

    /// `Some(f)` when the statistic is `sum f(p_i)`.
    fn summand(&self) -> Option<Summand> {
        None
    }

    fn statistic(&self, p: &[f64]) -> f64 {
        self.statistic_sorted(&sorted_copy(p))
    }

    fn reject(&self, p: &[f64], alpha: Alpha) -> Result<bool> {
        self.reject_sorted(&sorted_copy(p), alpha)
    }

    fn pvalue(&self, p: &[f64]) -> Result<f64> {
        self.pvalue_sorted(&sorted_copy(p))
    }
}

pub(crate) fn sorted_copy(p: &[f64]) -> Vec<f64> {
    let mut v = p.to_vec();
    v.sort_by(f64::total_cmp);
    v
}

pub(crate) fn nonempty(name: &str, p: &[f64]) -> Result<()> {
    if p.is_empty() {
        Err(Error::EmptySubset(name.to_string()))
    } else {
        Ok(())
    }
}
