//! Tests with closed-form critical values.

use super::{nonempty, pvalue_rejects, LocalTest, Summand};
use crate::error::{Error, Result};
use crate::pvalues::Alpha;
use crate::special::{binom_sf, chisq_sf, normal_cdf, normal_quantile};
use std::sync::Arc;

/// `T = min p_i`, reject when `p_(1) <= alpha / m`.
#[derive(Debug, Clone, Copy, Default)]
pub struct Bonferroni;

impl LocalTest for Bonferroni {
    fn name(&self) -> &str {
        "bonferroni"
    }

    fn statistic_sorted(&self, sorted: &[f64]) -> f64 {
        sorted.first().copied().unwrap_or(f64::INFINITY)
    }

    fn reject_sorted(&self, sorted: &[f64], alpha: Alpha) -> Result<bool> {
        nonempty(self.name(), sorted)?;
        Ok(sorted[0] <= alpha.get() / sorted.len() as f64)
    }

    fn pvalue_sorted(&self, sorted: &[f64]) -> Result<f64> {
        nonempty(self.name(), sorted)?;
        Ok((sorted.len() as f64 * sorted[0]).min(1.0))
    }
}

/// Simes: reject when some `p_(i) <= i alpha / m`.
#[derive(Debug, Clone, Copy, Default)]
pub struct Simes;

impl LocalTest for Simes {
    fn name(&self) -> &str {
        "simes"
    }

    /// `min_i p_(i) / i`.
    fn statistic_sorted(&self, sorted: &[f64]) -> f64 {
        sorted
            .iter()
            .enumerate()
            .map(|(i, &p)| p / (i + 1) as f64)
            .fold(f64::INFINITY, f64::min)
    }

    fn reject_sorted(&self, sorted: &[f64], alpha: Alpha) -> Result<bool> {
        nonempty(self.name(), sorted)?;
        let m = sorted.len() as f64;
        // Same threshold arithmetic as the Hommel scan in `shortcuts`.
        Ok(sorted.iter().enumerate().any(|(i, &p)| p <= (i + 1) as f64 * alpha.get() / m))
    }

    fn pvalue_sorted(&self, sorted: &[f64]) -> Result<f64> {
        nonempty(self.name(), sorted)?;
        let m = sorted.len() as f64;
        Ok((m * self.statistic_sorted(sorted)).min(1.0))
    }
}

/// Fisher's combination `T = 2 sum ln p_i`, null distribution `-chi^2_{2m}`.
#[derive(Debug, Clone, Copy, Default)]
pub struct Fisher;

impl LocalTest for Fisher {
    fn name(&self) -> &str {
        "fisher"
    }

    fn statistic_sorted(&self, sorted: &[f64]) -> f64 {
        2.0 * sorted.iter().map(|p| p.ln()).sum::<f64>()
    }

    fn reject_sorted(&self, sorted: &[f64], alpha: Alpha) -> Result<bool> {
        Ok(pvalue_rejects(self.pvalue_sorted(sorted)?, alpha))
    }

    fn pvalue_sorted(&self, sorted: &[f64]) -> Result<f64> {
        nonempty(self.name(), sorted)?;
        let t = self.statistic_sorted(sorted);
        if t == f64::NEG_INFINITY {
            return Ok(0.0);
        }
        // All p = 1 gives t = 0, possibly as -0.0.
        chisq_sf((-t).max(0.0), 2 * sorted.len() as u32)
    }

    fn summand(&self) -> Option<Summand> {
        Some(Arc::new(|p: f64| 2.0 * p.ln()))
    }
}

/// Inputs to Stouffer's test are clamped into `[lo, hi]` before the probit,
/// which diverges at 0 and 1.
pub const STOUFFER_CLAMP: (f64, f64) = (1e-300, 1.0 - f64::EPSILON / 2.0);

fn probit(p: f64) -> f64 {
    let p = p.clamp(STOUFFER_CLAMP.0, STOUFFER_CLAMP.1);
    normal_quantile(p).expect("clamped probability lies inside (0, 1)")
}

/// Stouffer's combination `T = sum Phi^{-1}(p_i) ~ N(0, m)`.
#[derive(Debug, Clone, Copy, Default)]
pub struct Stouffer;

impl LocalTest for Stouffer {
    fn name(&self) -> &str {
        "stouffer"
    }

    fn statistic_sorted(&self, sorted: &[f64]) -> f64 {
        sorted.iter().map(|&p| probit(p)).sum()
    }

    fn reject_sorted(&self, sorted: &[f64], alpha: Alpha) -> Result<bool> {
        Ok(pvalue_rejects(self.pvalue_sorted(sorted)?, alpha))
    }

    fn pvalue_sorted(&self, sorted: &[f64]) -> Result<f64> {
        nonempty(self.name(), sorted)?;
        Ok(normal_cdf(self.statistic_sorted(sorted) / (sorted.len() as f64).sqrt()))
    }

    fn summand(&self) -> Option<Summand> {
        Some(Arc::new(probit))
    }
}

/// Wilkinson's count `T = -#{p_i <= d}`, binomial null distribution.
#[derive(Debug, Clone, Copy)]
pub struct Wilkinson {
    d: f64,
}

impl Wilkinson {
    pub fn new(d: f64) -> Result<Self> {
        if d > 0.0 && d < 1.0 {
            Ok(Wilkinson { d })
        } else {
            Err(Error::param("d", format!("{d} is outside (0, 1)")))
        }
    }

    pub fn threshold(&self) -> f64 {
        self.d
    }

    fn count(&self, sorted: &[f64]) -> usize {
        sorted.partition_point(|&p| p <= self.d)
    }
}

impl LocalTest for Wilkinson {
    fn name(&self) -> &str {
        "wilkinson"
    }

    fn params(&self) -> String {
        format!("d={}", self.d)
    }

    fn statistic_sorted(&self, sorted: &[f64]) -> f64 {
        -(self.count(sorted) as f64)
    }

    fn reject_sorted(&self, sorted: &[f64], alpha: Alpha) -> Result<bool> {
        Ok(pvalue_rejects(self.pvalue_sorted(sorted)?, alpha))
    }

    fn pvalue_sorted(&self, sorted: &[f64]) -> Result<f64> {
        nonempty(self.name(), sorted)?;
        binom_sf(self.count(sorted) as u32, sorted.len() as u32, self.d)
    }

    fn summand(&self) -> Option<Summand> {
        let d = self.d;
        Some(Arc::new(move |p: f64| if p <= d { -1.0 } else { 0.0 }))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn a(x: f64) -> Alpha {
        Alpha::new(x).unwrap()
    }

    #[test]
    fn bonferroni_examples() {
        let t = Bonferroni;
        assert!(t.reject(&[0.01, 0.2, 0.9], a(0.05)).unwrap());
        assert!(!t.reject(&[0.02, 0.02, 0.02], a(0.05)).unwrap());
        assert!(t.reject(&[0.04], a(0.05)).unwrap());
        assert!((t.pvalue(&[0.2, 0.01]).unwrap() - 0.02).abs() < 1e-15);
        assert!(matches!(t.reject(&[], a(0.05)), Err(Error::EmptySubset(_))));
    }

    #[test]
    fn simes_examples() {
        let t = Simes;
        assert!(t.reject(&[0.03, 0.04], a(0.05)).unwrap());
        assert!(!t.reject(&[0.03, 0.06], a(0.05)).unwrap());
        assert!(t.reject(&[0.05], a(0.05)).unwrap());
        assert!((t.pvalue(&[0.03, 0.04]).unwrap() - 0.04).abs() < 1e-15);
    }

    #[test]
    fn fisher_examples() {
        let t = Fisher;
        let p = t.pvalue(&[0.05, 0.05]).unwrap();
        assert!((p - 0.01747).abs() < 1e-4);
        assert!(t.reject(&[0.05, 0.05], a(0.05)).unwrap());
        assert_eq!(t.statistic(&[1.0, 1.0]), 0.0);
        assert_eq!(t.pvalue(&[1.0, 1.0]).unwrap(), 1.0);
        assert!(!t.reject(&[1.0, 1.0], a(0.05)).unwrap());
        assert!((t.pvalue(&[0.05]).unwrap() - 0.05).abs() < 1e-15);
        assert!(t.reject(&[0.05], a(0.05)).unwrap());
        assert_eq!(t.pvalue(&[0.0, 0.7]).unwrap(), 0.0);
    }

    #[test]
    fn stouffer_examples() {
        let t = Stouffer;
        assert!(t.statistic(&[0.5, 0.5]).abs() < 1e-15);
        assert!((t.pvalue(&[0.5, 0.5]).unwrap() - 0.5).abs() < 1e-15);
        assert!(!t.reject(&[0.5, 0.5], a(0.05)).unwrap());
        let want = normal_cdf(-2.0 * 1.959963984540054 / 2f64.sqrt());
        assert!((t.pvalue(&[0.025, 0.025]).unwrap() - want).abs() < 1e-12);
        assert!((t.pvalue(&[0.025, 0.025]).unwrap() - 0.00279).abs() < 1e-4);
        assert!((t.pvalue(&[0.1]).unwrap() - 0.1).abs() < 1e-12);
        assert!(!t.reject(&[0.1], a(0.05)).unwrap());
        // Clamped endpoints stay finite.
        assert!(t.statistic(&[0.0, 1.0]).is_finite());
        assert!(t.reject(&[0.0], a(0.05)).unwrap());
    }

    #[test]
    fn wilkinson_examples() {
        let t = Wilkinson::new(0.05).unwrap();
        let mut p = vec![0.01, 0.02, 0.05];
        p.extend([0.3; 7]);
        assert!((t.pvalue(&p).unwrap() - 0.01150).abs() < 1e-5);
        assert!(t.reject(&p, a(0.05)).unwrap());
        assert_eq!(t.pvalue(&[0.5, 0.9]).unwrap(), 1.0);
        assert!(!t.reject(&[0.5, 0.9], a(0.05)).unwrap());
        assert_eq!(t.pvalue(&[0.025]).unwrap(), 0.05);
        assert!(t.reject(&[0.025], a(0.05)).unwrap());
        assert!(Wilkinson::new(0.0).is_err());
        assert!(Wilkinson::new(1.0).is_err());
    }
}
