//! Plans that switch local tests by subset size.
//!
//! The Simes–higher-criticism fusion uses Simes on small subsets and higher
//! criticism on the large ones, where many false nulls may share a subset
//! and a dense-signal test pays off. The switch point is driven by a guess
//! `s` of the number of false nulls; overestimating `s` is the safer error.

use std::fmt;
use std::sync::Arc;

use crate::engine::RulePlan;
use crate::error::{Error, Result};
use crate::local_tests::{CalibratedTest, Calibrator, HcStatistic, HigherCriticism, LocalTest, Simes};
use crate::pvalues::Alpha;

/// A two-rule plan: `small` for sizes `1..=n - s + 1`, `large` above.
#[derive(Clone)]
pub struct FusionSpec {
    n: usize,
    s: usize,
    small: Arc<dyn LocalTest>,
    large: Arc<dyn LocalTest>,
}

impl FusionSpec {
    pub fn new(n: usize, s: usize, small: Arc<dyn LocalTest>, large: Arc<dyn LocalTest>) -> Result<Self> {
        if n == 0 {
            return Err(Error::param("n", "must be at least 1"));
        }
        if s == 0 || s > n {
            return Err(Error::OutOfRange { what: "sparsity", value: s, max: n });
        }
        Ok(FusionSpec { n, s, small, large })
    }

    /// Simes below the cutoff, the given calibrated higher criticism above.
    pub fn simes_hc(n: usize, s: usize, hc: HigherCriticism) -> Result<Self> {
        Self::new(n, s, Arc::new(Simes), Arc::new(hc))
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn sparsity(&self) -> usize {
        self.s
    }

    /// Largest size handled by the small-subset rule, `n - s + 1`.
    pub fn cutoff(&self) -> usize {
        self.n - self.s + 1
    }

    /// The plan. Fails if the large-subset rule is a calibrated test whose
    /// table does not reach size `n`.
    pub fn plan(&self, alpha: Alpha) -> Result<RulePlan> {
        if self.cutoff() < self.n && self.large.needs_calibration() {
            // Probe the largest size; a missing table surfaces here instead
            // of mid-run.
            self.large.reject_sorted(&vec![1.0; self.n], alpha)?;
        }
        RulePlan::split(self.small.clone(), self.large.clone(), self.cutoff(), self.n)
    }
}

impl fmt::Debug for FusionSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FusionSpec")
            .field("n", &self.n)
            .field("s", &self.s)
            .field("small", &self.small.name())
            .field("large", &self.large.name())
            .finish()
    }
}

/// Simes for sizes `<= n - s + 1`, higher criticism calibrated through
/// `calibrator` above that.
pub fn simes_hc_plan(n: usize, s: usize, alpha0: f64, alpha: Alpha, calibrator: &Calibrator) -> Result<RulePlan> {
    let stat = HcStatistic::new(alpha0)?;
    let hc = if s > 1 {
        CalibratedTest::calibrated(stat, calibrator, n, alpha)?
    } else {
        // Cutoff n: higher criticism is never consulted.
        CalibratedTest::uncalibrated(stat)
    };
    let spec = FusionSpec::simes_hc(n, s, hc)?;
    spec.plan(alpha)
}

/// The same test at every size `1..=n`.
pub fn uniform_plan(test: Arc<dyn LocalTest>, n: usize) -> Result<RulePlan> {
    RulePlan::uniform(test, n)
}
