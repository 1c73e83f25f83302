//! Tests whose critical values come from Monte-Carlo calibration: higher
//! criticism, the truncated product method and general monotone sums.

use std::fmt;
use std::sync::{Arc, OnceLock};

use super::calibration::{null_statistics, Calibrator, CriticalValueTable, Provenance};
use super::{nonempty, LocalTest, Summand};
use crate::error::{Error, Result};
use crate::parallel::Execution;
use crate::pvalues::Alpha;

/// A monotone symmetric statistic of an ascending subset, smaller is more
/// significant.
pub trait MonotoneStatistic: Send + Sync + fmt::Debug {
    fn name(&self) -> &str;
    fn params(&self) -> String;
    fn eval_sorted(&self, sorted: &[f64]) -> f64;
    fn summand(&self) -> Option<Summand> {
        None
    }
}

/// Higher criticism `T = min_{i <= max(1, floor(alpha0 m))} g_i(p_(i))` with
/// `g_i(x) = sqrt(m) (x - i/m) / sqrt(x (1 - x))`.
#[derive(Debug, Clone, Copy)]
pub struct HcStatistic {
    alpha0: f64,
}

impl HcStatistic {
    pub fn new(alpha0: f64) -> Result<Self> {
        if alpha0 > 0.0 && alpha0 < 1.0 {
            Ok(HcStatistic { alpha0 })
        } else {
            Err(Error::param("alpha0", format!("{alpha0} is outside (0, 1)")))
        }
    }

    pub fn alpha0(&self) -> f64 {
        self.alpha0
    }

    /// Largest order-statistic index entering the minimum.
    pub fn index_range(&self, m: usize) -> usize {
        ((self.alpha0 * m as f64).floor() as usize).clamp(1, m.max(1))
    }

    /// `g_i(x)` for a size-`m` subset; `-inf` at `x = 0`, `+inf` at `x = 1`.
    pub fn g(i: usize, m: usize, x: f64) -> f64 {
        if x <= 0.0 {
            return f64::NEG_INFINITY;
        }
        if x >= 1.0 {
            return f64::INFINITY;
        }
        let mf = m as f64;
        mf.sqrt() * (x - i as f64 / mf) / (x * (1.0 - x)).sqrt()
    }

    /// The asymptotic critical value `-sqrt(2 log log m)`, for comparison only.
    pub fn asymptotic_critical_value(m: usize) -> f64 {
        let ll = (m as f64).ln().ln();
        if ll > 0.0 {
            -(2.0 * ll).sqrt()
        } else {
            f64::NAN
        }
    }
}

impl Default for HcStatistic {
    fn default() -> Self {
        HcStatistic { alpha0: 0.5 }
    }
}

impl MonotoneStatistic for HcStatistic {
    fn name(&self) -> &str {
        "higher-criticism"
    }

    fn params(&self) -> String {
        format!("alpha0={}", self.alpha0)
    }

    fn eval_sorted(&self, sorted: &[f64]) -> f64 {
        let m = sorted.len();
        (1..=self.index_range(m))
            .map(|i| Self::g(i, m, sorted[i - 1]))
            .fold(f64::INFINITY, f64::min)
    }
}

/// Truncated product `T = sum ln(p_i) 1{p_i <= tau}`.
#[derive(Debug, Clone, Copy)]
pub struct TpmStatistic {
    tau: f64,
}

impl TpmStatistic {
    pub fn new(tau: f64) -> Result<Self> {
        if tau > 0.0 && tau < 1.0 {
            Ok(TpmStatistic { tau })
        } else {
            Err(Error::param("tau", format!("{tau} is outside (0, 1)")))
        }
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }
}

impl MonotoneStatistic for TpmStatistic {
    fn name(&self) -> &str {
        "truncated-product"
    }

    fn params(&self) -> String {
        format!("tau={}", self.tau)
    }

    fn eval_sorted(&self, sorted: &[f64]) -> f64 {
        sorted.iter().take_while(|&&p| p <= self.tau).map(|p| p.ln()).sum()
    }

    fn summand(&self) -> Option<Summand> {
        let tau = self.tau;
        Some(Arc::new(move |p: f64| if p <= tau { p.ln() } else { 0.0 }))
    }
}

/// `T = sum f(p_i)` for a caller-supplied increasing `f`.
#[derive(Clone)]
pub struct SumStatistic {
    label: String,
    f: Summand,
}

impl SumStatistic {
    /// `label` identifies `f` in cache keys; distinct functions need
    /// distinct labels.
    pub fn new(label: impl Into<String>, f: Summand) -> Self {
        SumStatistic { label: label.into(), f }
    }

    /// `f(x) = x`.
    pub fn identity() -> Self {
        Self::new("identity", Arc::new(|x| x))
    }

    /// `f(x) = ln x`, Fisher's statistic up to a factor of two.
    pub fn log() -> Self {
        Self::new("ln", Arc::new(f64::ln))
    }
}

impl fmt::Debug for SumStatistic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SumStatistic").field("label", &self.label).finish()
    }
}

impl MonotoneStatistic for SumStatistic {
    fn name(&self) -> &str {
        "monotone-combination"
    }

    fn params(&self) -> String {
        format!("f={}", self.label)
    }

    fn eval_sorted(&self, sorted: &[f64]) -> f64 {
        sorted.iter().map(|&p| (self.f)(p)).sum()
    }

    fn summand(&self) -> Option<Summand> {
        Some(self.f.clone())
    }
}

/// Rejects when the statistic is at most the calibrated critical value
/// for the subset size. Without a table only the statistic is available.
#[derive(Debug, Clone)]
pub struct CalibratedTest<S> {
    statistic: S,
    table: Option<Arc<CriticalValueTable>>,
    null: Arc<Vec<OnceLock<Vec<f64>>>>,
}

pub type HigherCriticism = CalibratedTest<HcStatistic>;
pub type TruncatedProduct = CalibratedTest<TpmStatistic>;
pub type MonotoneCombination = CalibratedTest<SumStatistic>;

impl<S: MonotoneStatistic> CalibratedTest<S> {
    pub fn uncalibrated(statistic: S) -> Self {
        CalibratedTest { statistic, table: None, null: Arc::new(Vec::new()) }
    }

    /// Attach a table produced for this statistic (same name and parameters).
    pub fn with_table(statistic: S, table: Arc<CriticalValueTable>) -> Result<Self> {
        if table.test() != statistic.name() || table.params() != statistic.params() {
            return Err(Error::param(
                "table",
                format!(
                    "table for `{}` ({}) does not match `{}` ({})",
                    table.test(),
                    table.params(),
                    statistic.name(),
                    statistic.params()
                ),
            ));
        }
        let null = Arc::new((0..table.n_max()).map(|_| OnceLock::new()).collect());
        Ok(CalibratedTest { statistic, table: Some(table), null })
    }

    /// Calibrate (or fetch from `calibrator`) sizes `1..=n_max` at `alpha`.
    pub fn calibrated(statistic: S, calibrator: &Calibrator, n_max: usize, alpha: Alpha) -> Result<Self>
    where
        S: Clone + 'static,
    {
        let table = calibrator.table(&Self::uncalibrated(statistic.clone()), n_max, alpha)?;
        Self::with_table(statistic, table)
    }

    pub fn statistic_def(&self) -> &S {
        &self.statistic
    }

    pub fn table(&self) -> Option<&Arc<CriticalValueTable>> {
        self.table.as_ref()
    }

    fn table_for(&self, m: usize) -> Result<&CriticalValueTable> {
        match &self.table {
            Some(t) if m >= 1 && m <= t.n_max() => Ok(t),
            _ => Err(Error::CalibrationMissing { test: self.statistic.name().to_string(), size: m }),
        }
    }

    /// Sorted null statistics for size `m`, regenerated from the table's seed
    /// on first use.
    fn null_sample(&self, m: usize) -> Result<&[f64]> {
        let table = self.table_for(m)?;
        let Provenance::MonteCarlo { samples, seed } = table.provenance() else {
            return Err(Error::NoPValue { test: self.statistic.name().to_string() });
        };
        Ok(self.null[m - 1].get_or_init(|| {
            null_statistics(&|s: &[f64]| self.statistic.eval_sorted(s), m, samples, seed, Execution::default())
        }))
    }
}

impl<S: MonotoneStatistic> LocalTest for CalibratedTest<S> {
    fn name(&self) -> &str {
        self.statistic.name()
    }

    fn params(&self) -> String {
        self.statistic.params()
    }

    fn statistic_sorted(&self, sorted: &[f64]) -> f64 {
        self.statistic.eval_sorted(sorted)
    }

    fn reject_sorted(&self, sorted: &[f64], alpha: Alpha) -> Result<bool> {
        nonempty(self.name(), sorted)?;
        let table = self.table_for(sorted.len())?;
        if table.alpha() != alpha {
            return Err(Error::AlphaMismatch {
                test: self.name().to_string(),
                calibrated: table.alpha().get(),
                requested: alpha.get(),
            });
        }
        Ok(self.statistic.eval_sorted(sorted) <= table.critical_value(sorted.len())?)
    }

    /// Empirical `(r + 1) / (B + 1)` with `r` the number of null statistics
    /// at or below the observed one.
    fn pvalue_sorted(&self, sorted: &[f64]) -> Result<f64> {
        nonempty(self.name(), sorted)?;
        let null = self.null_sample(sorted.len())?;
        let t = self.statistic.eval_sorted(sorted);
        let r = null.partition_point(|&s| s <= t);
        Ok((r as f64 + 1.0) / (null.len() as f64 + 1.0))
    }

    fn needs_calibration(&self) -> bool {
        true
    }

    fn summand(&self) -> Option<Summand> {
        self.statistic.summand()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hc_statistic_values() {
        assert_eq!(HcStatistic::g(2, 4, 0.5), 0.0);
        assert_eq!(HcStatistic::g(1, 4, 0.25), 0.0);
        let hc = HcStatistic::new(0.5).unwrap();
        let t = hc.eval_sorted(&[0.01, 0.2, 0.3, 0.4]);
        let g1 = 2.0 * (0.01 - 0.25) / (0.01f64 * 0.99).sqrt();
        assert!((t - g1).abs() < 1e-12);
        assert!((t + 4.8242).abs() < 1e-3);
        assert_eq!(hc.index_range(1), 1);
        assert_eq!(hc.index_range(4), 2);
        assert_eq!(hc.index_range(5), 2);
        assert_eq!(hc.eval_sorted(&[0.0, 0.5]), f64::NEG_INFINITY);
        assert_eq!(hc.eval_sorted(&[1.0]), f64::INFINITY);
        assert!(HcStatistic::new(1.0).is_err());
        assert!(HcStatistic::asymptotic_critical_value(100) < 0.0);
    }

    #[test]
    fn tpm_statistic_values() {
        let tpm = TpmStatistic::new(0.05).unwrap();
        assert!((tpm.eval_sorted(&[0.01, 0.5]) - 0.01f64.ln()).abs() < 1e-15);
        assert!((tpm.eval_sorted(&[0.01, 0.5]) + 4.6052).abs() < 1e-4);
        assert_eq!(tpm.eval_sorted(&[0.2, 0.5, 0.9]), 0.0);
        assert!(TpmStatistic::new(0.0).is_err());
    }

    #[test]
    fn constant_summand_is_degenerate() {
        let s = SumStatistic::new("const", Arc::new(|_| 3.0));
        assert_eq!(s.eval_sorted(&[0.1, 0.9]), 6.0);
        assert_eq!(s.eval_sorted(&[0.0, 0.0]), 6.0);
    }

    #[test]
    fn uncalibrated_refuses_decisions() {
        let t = HigherCriticism::uncalibrated(HcStatistic::default());
        let alpha = Alpha::new(0.05).unwrap();
        assert!(matches!(t.reject(&[0.1], alpha), Err(Error::CalibrationMissing { .. })));
        assert!(t.statistic(&[0.1, 0.2]).is_finite());
    }
}
