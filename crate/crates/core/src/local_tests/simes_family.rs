//! Order-statistic threshold tests: the generalized Simes test and the
//! hybrid Hochberg-Hommel local test.

use std::sync::Arc;

use super::{nonempty, LocalTest};
use crate::error::{Error, Result};
use crate::pvalues::Alpha;

/// Thresholds `d[m][i]` (1 <= i <= m <= n_max) compared against the order
/// statistics of a size-`m` subset, stated at a reference level. At another
/// level alpha the thresholds scale by `alpha / alpha_ref`.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneralizedSimesCriticalMatrix {
    alpha_ref: Alpha,
    rows: Vec<Vec<f64>>,
}

impl GeneralizedSimesCriticalMatrix {
    /// `rows[m - 1]` holds the `m` thresholds for subsets of size `m`.
    pub fn new(alpha_ref: Alpha, rows: Vec<Vec<f64>>) -> Result<Self> {
        for (idx, row) in rows.iter().enumerate() {
            let m = idx + 1;
            if row.len() != m {
                return Err(Error::param("d", format!("row {m} has {} entries", row.len())));
            }
            if row.iter().any(|d| !(0.0..=1.0).contains(d)) {
                return Err(Error::param("d", format!("row {m} has a threshold outside [0, 1]")));
            }
            if row.windows(2).any(|w| w[1] < w[0]) {
                return Err(Error::param("d", format!("row {m} is not non-decreasing")));
            }
        }
        Ok(GeneralizedSimesCriticalMatrix { alpha_ref, rows })
    }

    /// `d[m][i] = alpha i / m`, which reproduces the Simes test.
    pub fn simes(alpha: Alpha, n_max: usize) -> Self {
        let rows = (1..=n_max)
            .map(|m| (1..=m).map(|i| alpha.get() * i as f64 / m as f64).collect())
            .collect();
        GeneralizedSimesCriticalMatrix { alpha_ref: alpha, rows }
    }

    pub fn n_max(&self) -> usize {
        self.rows.len()
    }

    pub fn alpha_ref(&self) -> Alpha {
        self.alpha_ref
    }

    pub fn row(&self, m: usize) -> Option<&[f64]> {
        self.rows.get(m.wrapping_sub(1)).map(Vec::as_slice)
    }
}

/// Reject `H_J` when `p_(i) <= d[|J|][i]` for some `i`.
#[derive(Debug, Clone)]
pub struct GeneralizedSimes {
    matrix: Arc<GeneralizedSimesCriticalMatrix>,
}

impl GeneralizedSimes {
    pub fn new(matrix: GeneralizedSimesCriticalMatrix) -> Self {
        GeneralizedSimes { matrix: Arc::new(matrix) }
    }

    pub fn matrix(&self) -> &GeneralizedSimesCriticalMatrix {
        &self.matrix
    }

    fn row(&self, m: usize) -> Result<&[f64]> {
        self.matrix
            .row(m)
            .ok_or_else(|| Error::CalibrationMissing { test: self.name().to_string(), size: m })
    }
}

/// `p / d` with the conventions `0 / 0 = 0` and `p / 0 = inf`.
fn ratio(p: f64, d: f64) -> f64 {
    if d > 0.0 {
        p / d
    } else if p == 0.0 {
        0.0
    } else {
        f64::INFINITY
    }
}

impl LocalTest for GeneralizedSimes {
    fn name(&self) -> &str {
        "generalized-simes"
    }

    fn params(&self) -> String {
        format!("alpha_ref={},n_max={}", self.matrix.alpha_ref, self.matrix.n_max())
    }

    /// `alpha_ref * min_i p_(i) / d[m][i]`; infinite when the row is missing.
    fn statistic_sorted(&self, sorted: &[f64]) -> f64 {
        match self.matrix.row(sorted.len()) {
            Some(row) => {
                self.matrix.alpha_ref.get()
                    * sorted.iter().zip(row).map(|(&p, &d)| ratio(p, d)).fold(f64::INFINITY, f64::min)
            }
            None => f64::INFINITY,
        }
    }

    fn reject_sorted(&self, sorted: &[f64], alpha: Alpha) -> Result<bool> {
        nonempty(self.name(), sorted)?;
        let row = self.row(sorted.len())?;
        let scale = alpha.get() / self.matrix.alpha_ref.get();
        Ok(sorted.iter().zip(row).any(|(&p, &d)| p <= d * scale))
    }

    fn pvalue_sorted(&self, sorted: &[f64]) -> Result<f64> {
        nonempty(self.name(), sorted)?;
        self.row(sorted.len())?;
        Ok(self.statistic_sorted(sorted).min(1.0))
    }
}

/// Critical constants `c_i`, `d_i` of the hybrid Hochberg-Hommel local test.
#[derive(Debug, Clone, PartialEq)]
pub enum HhhConstants {
    /// `c_i = (m - i + 1) / m` (the Simes thresholds) and `d_i = 1 / i`.
    Default,
    /// Fixed sequences `c_1..c_K`, `d_1..d_K`, usable for subsets up to size K.
    Fixed { c: Vec<f64>, d: Vec<f64> },
}

impl HhhConstants {
    pub fn fixed(c: Vec<f64>, d: Vec<f64>) -> Result<Self> {
        if c.len() != d.len() || c.is_empty() {
            return Err(Error::param("c,d", "sequences must be non-empty and of equal length"));
        }
        if c[0] != 1.0 {
            return Err(Error::param("c", "c_1 must equal 1"));
        }
        for i in 0..c.len() {
            if !(d[i] >= 0.0 && d[i] <= c[i] && c[i] <= 1.0) {
                return Err(Error::param("c,d", format!("need 1 >= c_i >= d_i >= 0 at i = {}", i + 1)));
            }
            if i > 0 && (c[i] > c[i - 1] || d[i] > d[i - 1]) {
                return Err(Error::param("c,d", format!("sequences increase at i = {}", i + 1)));
            }
        }
        Ok(HhhConstants::Fixed { c, d })
    }

    fn get(&self, m: usize, i: usize) -> Option<(f64, f64)> {
        match self {
            HhhConstants::Default => Some(((m - i + 1) as f64 / m as f64, 1.0 / i as f64)),
            HhhConstants::Fixed { c, d } => Some((*c.get(i - 1)?, *d.get(i - 1)?)),
        }
    }
}

/// Rejects when one of the mutually exclusive events
/// `E_1 = {p_(m) <= alpha}` or, for `i >= 2`,
/// `E_i = {p_(m) > alpha, ..., p_(m-i+2) > c_{i-1} alpha, p_(m-i+1) <= c_i alpha, p_(1) <= d_i alpha}`
/// occurs.
#[derive(Debug, Clone)]
pub struct HybridHochbergHommel {
    constants: HhhConstants,
}

impl Default for HybridHochbergHommel {
    fn default() -> Self {
        HybridHochbergHommel { constants: HhhConstants::Default }
    }
}

impl HybridHochbergHommel {
    pub fn new(constants: HhhConstants) -> Self {
        HybridHochbergHommel { constants }
    }

    fn constants(&self, m: usize, i: usize) -> Result<(f64, f64)> {
        self.constants
            .get(m, i)
            .ok_or_else(|| Error::CalibrationMissing { test: self.name().to_string(), size: m })
    }
}

impl LocalTest for HybridHochbergHommel {
    fn name(&self) -> &str {
        "hybrid-hochberg-hommel"
    }

    fn params(&self) -> String {
        match &self.constants {
            HhhConstants::Default => "default".into(),
            HhhConstants::Fixed { c, d } => format!("c={c:?},d={d:?}"),
        }
    }

    /// Smallest alpha at which some event occurs:
    /// `min_i max(p_(m-i+1) / c_i, p_(1) / d_i)` (no `d` term for `i = 1`).
    fn statistic_sorted(&self, sorted: &[f64]) -> f64 {
        let m = sorted.len();
        let mut best = f64::INFINITY;
        for i in 1..=m {
            let Some((c, d)) = self.constants.get(m, i) else {
                return f64::INFINITY;
            };
            let mut level = ratio(sorted[m - i], if i == 1 { 1.0 } else { c });
            if i > 1 {
                level = level.max(ratio(sorted[0], d));
            }
            best = best.min(level);
        }
        best
    }

    fn reject_sorted(&self, sorted: &[f64], alpha: Alpha) -> Result<bool> {
        nonempty(self.name(), sorted)?;
        let m = sorted.len();
        self.constants(m, m)?;
        let a = alpha.get();
        for i in 1..=m {
            let (c, d) = self.constants(m, i)?;
            let c = if i == 1 { 1.0 } else { c };
            if sorted[m - i] <= c * a {
                return Ok(i == 1 || sorted[0] <= d * a);
            }
        }
        Ok(false)
    }

    fn pvalue_sorted(&self, sorted: &[f64]) -> Result<f64> {
        nonempty(self.name(), sorted)?;
        self.constants(sorted.len(), sorted.len())?;
        Ok(self.statistic_sorted(sorted).min(1.0))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::local_tests::Simes;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn a(x: f64) -> Alpha {
        Alpha::new(x).unwrap()
    }

    #[test]
    fn simes_matrix_reproduces_simes() {
        let alpha = a(0.05);
        let gst = GeneralizedSimes::new(GeneralizedSimesCriticalMatrix::simes(alpha, 20));
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..10_000 {
            let m = rng.random_range(1..=20);
            let p: Vec<f64> = (0..m).map(|_| rng.random::<f64>().powi(3)).collect();
            assert_eq!(gst.reject(&p, alpha).unwrap(), Simes.reject(&p, alpha).unwrap(), "{p:?}");
        }
    }

    #[test]
    fn direct_threshold_comparison() {
        let alpha = a(0.05);
        let m = GeneralizedSimesCriticalMatrix::new(alpha, vec![vec![0.01], vec![0.01, 0.04]]).unwrap();
        let gst = GeneralizedSimes::new(m);
        assert!(gst.reject(&[0.02, 0.035], alpha).unwrap());
        assert!(!gst.reject(&[0.02, 0.045], alpha).unwrap());
        assert!(matches!(gst.reject(&[0.1, 0.2, 0.3], alpha), Err(Error::CalibrationMissing { size: 3, .. })));
    }

    #[test]
    fn zero_thresholds_never_reject_positive_p() {
        let alpha = a(0.05);
        let rows = (1..=5).map(|m| vec![0.0; m]).collect();
        let gst = GeneralizedSimes::new(GeneralizedSimesCriticalMatrix::new(alpha, rows).unwrap());
        assert!(!gst.reject(&[1e-12, 0.3, 0.5], alpha).unwrap());
        assert_eq!(gst.pvalue(&[1e-12, 0.3]).unwrap(), 1.0);
    }

    #[test]
    fn malformed_matrix() {
        let alpha = a(0.05);
        assert!(GeneralizedSimesCriticalMatrix::new(alpha, vec![vec![0.01, 0.02]]).is_err());
        assert!(GeneralizedSimesCriticalMatrix::new(alpha, vec![vec![0.01], vec![0.03, 0.02]]).is_err());
    }

    #[test]
    fn hhh_first_event_and_null() {
        let t = HybridHochbergHommel::default();
        let alpha = a(0.05);
        assert!(t.reject(&[0.01, 0.03, 0.049], alpha).unwrap());
        assert!(!t.reject(&[1.0, 1.0, 1.0], alpha).unwrap());
        assert_eq!(t.pvalue(&[1.0, 1.0]).unwrap(), 1.0);
    }

    #[test]
    fn hhh_pvalue_matches_decisions() {
        let t = HybridHochbergHommel::default();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..2_000 {
            let m = rng.random_range(1..=12);
            let p: Vec<f64> = (0..m).map(|_| rng.random::<f64>().powi(2)).collect();
            let pv = t.pvalue(&p).unwrap();
            for k in 1..100 {
                let alpha = a(k as f64 / 100.0);
                let rej = t.reject(&p, alpha).unwrap();
                if (pv - alpha.get()).abs() > 1e-12 {
                    assert_eq!(rej, pv <= alpha.get(), "{p:?} alpha={alpha}");
                }
            }
        }
    }

    #[test]
    fn hhh_rejections_within_simes() {
        let t = HybridHochbergHommel::default();
        let alpha = a(0.05);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..5_000 {
            let m = rng.random_range(1..=15);
            let p: Vec<f64> = (0..m).map(|_| rng.random::<f64>().powi(4)).collect();
            if t.reject(&p, alpha).unwrap() {
                assert!(Simes.reject(&p, alpha).unwrap());
            }
        }
    }

    #[test]
    fn hhh_constant_validation() {
        assert!(HhhConstants::fixed(vec![1.0, 0.5], vec![0.5, 0.25]).is_ok());
        assert!(HhhConstants::fixed(vec![0.9, 0.5], vec![0.5, 0.25]).is_err());
        assert!(HhhConstants::fixed(vec![1.0, 0.5], vec![0.5, 0.6]).is_err());
        assert!(HhhConstants::fixed(vec![1.0, 0.5, 0.7], vec![0.5, 0.2, 0.1]).is_err());
        let t = HybridHochbergHommel::new(HhhConstants::fixed(vec![1.0, 0.5], vec![1.0, 0.25]).unwrap());
        assert!(t.reject(&[0.1, 0.2, 0.3], a(0.05)).is_err());
    }
}
