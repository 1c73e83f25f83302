//! Randomized checks of the monotone-symmetric contract, plus deliberately
//! broken controls that the checks must catch.

use std::fmt;

use rand::seq::SliceRandom;
use rand::Rng;

use super::{nonempty, pvalue_rejects, LocalTest};
use crate::error::{Error, Result};
use crate::parallel::Execution;
use crate::pvalues::Alpha;
use crate::rng::{derive_seed, stream};

/// Counterexamples kept verbatim in a report; the rest are only counted.
const KEEP: usize = 16;
const STAT_RTOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ViolationKind {
    /// `statistic(q) > statistic(p)` for `q <= p`.
    Statistic,
    /// `p` rejected but the smaller `q` accepted.
    Decision,
    /// `pvalue(q) > pvalue(p)` for `q <= p`.
    PValue,
    /// A permutation of `p` changed the statistic or the decision.
    Permutation,
}

impl fmt::Display for ViolationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ViolationKind::Statistic => "statistic",
            ViolationKind::Decision => "decision",
            ViolationKind::PValue => "p-value",
            ViolationKind::Permutation => "permutation",
        })
    }
}

/// `original` is the drawn `p`; `modified` is the smaller `q` or the
/// permuted `p`, depending on `kind`.
#[derive(Debug, Clone, PartialEq)]
pub struct Counterexample {
    pub trial: usize,
    pub kind: ViolationKind,
    pub original: Vec<f64>,
    pub modified: Vec<f64>,
    pub detail: String,
}

#[derive(Debug, Clone)]
pub struct CheckReport {
    pub test: String,
    pub m: usize,
    pub trials: usize,
    pub violations: usize,
    pub counterexamples: Vec<Counterexample>,
}

impl CheckReport {
    pub fn is_clean(&self) -> bool {
        self.violations == 0
    }

    pub fn first(&self, kind: ViolationKind) -> Option<&Counterexample> {
        self.counterexamples.iter().find(|c| c.kind == kind)
    }
}

impl fmt::Display for CheckReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} m={} trials={}: {} violation(s)", self.test, self.m, self.trials, self.violations)?;
        for c in &self.counterexamples {
            write!(f, "\n  trial {} [{}] p={:?} q={:?}: {}", c.trial, c.kind, c.original, c.modified, c.detail)?;
        }
        Ok(())
    }
}

fn stat_increased(before: f64, after: f64) -> bool {
    if after <= before {
        return false;
    }
    let scale = 1.0 + before.abs().max(after.abs());
    !(after - before <= STAT_RTOL * scale) || after.is_nan()
}

fn draw_pair(rng: &mut impl Rng, m: usize) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    // Mix a small scale in so decisions on both sides of the boundary occur.
    let scale = 10f64.powf(-4.0 * rng.random::<f64>());
    let p: Vec<f64> = (0..m)
        .map(|_| {
            let u: f64 = rng.random();
            match rng.random_range(0..8) {
                0..=3 => u,
                4..=6 => scale * u,
                _ => 1.0,
            }
        })
        .collect();
    let q: Vec<f64> = p
        .iter()
        .map(|&x| match rng.random_range(0..8) {
            0..=3 => x,
            4..=6 => x * rng.random::<f64>(),
            _ => 0.0,
        })
        .collect();
    let mut permuted = p.clone();
    permuted.shuffle(rng);
    (p, q, permuted)
}

/// Randomized check that `test` is monotone and symmetric at size `m`.
///
/// Each trial draws `p`, a coordinatewise smaller `q` and a permutation of
/// `p`, and compares statistics, p-values (when the test exposes them) and,
/// if `alpha` is given, decisions. Errors from the test itself (for example
/// a missing calibration table) are returned; violations are report content.
pub fn check_monotone_symmetric(
    test: &dyn LocalTest,
    m: usize,
    trials: usize,
    seed: u64,
    alpha: Option<Alpha>,
) -> Result<CheckReport> {
    if m == 0 {
        return Err(Error::param("m", "must be at least 1"));
    }
    let seed = derive_seed(seed, "monotone-symmetric-check");
    let per_trial = Execution::default().try_map(trials, |trial| -> Result<Vec<Counterexample>> {
        let mut rng = stream(seed, trial as u64);
        let (p, q, perm) = draw_pair(&mut rng, m);
        let mut found = Vec::new();
        let mut push = |kind, modified: &Vec<f64>, detail: String| {
            found.push(Counterexample { trial, kind, original: p.clone(), modified: modified.clone(), detail })
        };

        let (tp, tq, tperm) = (test.statistic(&p), test.statistic(&q), test.statistic(&perm));
        if stat_increased(tp, tq) {
            push(ViolationKind::Statistic, &q, format!("statistic {tp} -> {tq}"));
        }
        if tp.to_bits() != tperm.to_bits() && !(tp - tperm).abs().le(&(STAT_RTOL * (1.0 + tp.abs()))) {
            push(ViolationKind::Permutation, &perm, format!("statistic {tp} -> {tperm}"));
        }
        if let Some(alpha) = alpha {
            let (rp, rq, rperm) = (test.reject(&p, alpha)?, test.reject(&q, alpha)?, test.reject(&perm, alpha)?);
            if rp && !rq {
                push(ViolationKind::Decision, &q, "p rejected, smaller q accepted".into());
            }
            if rp != rperm {
                push(ViolationKind::Permutation, &perm, format!("decision {rp} -> {rperm}"));
            }
        }
        if let (Ok(pp), Ok(pq)) = (test.pvalue(&p), test.pvalue(&q)) {
            if stat_increased(pp, pq) {
                push(ViolationKind::PValue, &q, format!("p-value {pp} -> {pq}"));
            }
        }
        Ok(found)
    })?;

    let violations = per_trial.iter().map(Vec::len).sum();
    let counterexamples = per_trial.into_iter().flatten().take(KEEP).collect();
    Ok(CheckReport { test: test.name().to_string(), m, trials, violations, counterexamples })
}

/// How [`Composed`] merges its components.
#[derive(Debug, Clone, PartialEq)]
pub enum Composition {
    /// Minimum of the statistics; rejects when any component rejects.
    Min,
    /// Maximum of the statistics; rejects when every component rejects.
    Max,
    /// Non-negative weighted sum of the statistics; no decision rule.
    Linear(Vec<f64>),
}

/// A statistic built from other tests' statistics. Used to exercise the
/// closure of the monotone-symmetric class under min, max and non-negative
/// linear combinations.
#[derive(Debug)]
pub struct Composed {
    parts: Vec<Box<dyn LocalTest>>,
    how: Composition,
}

impl Composed {
    pub fn new(parts: Vec<Box<dyn LocalTest>>, how: Composition) -> Result<Self> {
        if parts.is_empty() {
            return Err(Error::param("parts", "need at least one component"));
        }
        if let Composition::Linear(w) = &how {
            if w.len() != parts.len() {
                return Err(Error::param("weights", format!("{} weights for {} parts", w.len(), parts.len())));
            }
            if w.iter().any(|&x| !(x >= 0.0) || !x.is_finite()) {
                return Err(Error::param("weights", "weights must be finite and non-negative"));
            }
        }
        Ok(Composed { parts, how })
    }
}

impl LocalTest for Composed {
    fn name(&self) -> &str {
        match self.how {
            Composition::Min => "composed-min",
            Composition::Max => "composed-max",
            Composition::Linear(_) => "composed-linear",
        }
    }

    fn statistic_sorted(&self, sorted: &[f64]) -> f64 {
        let stats = self.parts.iter().map(|t| t.statistic_sorted(sorted));
        match &self.how {
            Composition::Min => stats.fold(f64::INFINITY, f64::min),
            Composition::Max => stats.fold(f64::NEG_INFINITY, f64::max),
            // 0 * inf is treated as 0: a zero weight drops the component.
            Composition::Linear(w) => {
                stats.zip(w).filter(|(_, &w)| w > 0.0).map(|(t, &w)| w * t).sum()
            }
        }
    }

    fn reject_sorted(&self, sorted: &[f64], alpha: Alpha) -> Result<bool> {
        nonempty(self.name(), sorted)?;
        let mut decisions = self.parts.iter().map(|t| t.reject_sorted(sorted, alpha));
        match self.how {
            Composition::Min => {
                let mut any = false;
                for d in decisions {
                    any |= d?;
                }
                Ok(any)
            }
            Composition::Max => decisions.try_fold(true, |all, d| Ok(all & d?)),
            Composition::Linear(_) => {
                Err(Error::param("composition", "a linear composition has no calibrated decision rule"))
            }
        }
    }

    fn pvalue_sorted(&self, _sorted: &[f64]) -> Result<f64> {
        Err(Error::NoPValue { test: self.name().to_string() })
    }
}

/// Negative control: rejects when `min p <= alpha / 2m` or
/// `max p >= 1 - alpha / 2m`. Level alpha, symmetric, but not monotone.
#[derive(Debug, Clone, Copy, Default)]
pub struct NonMonotoneControl;

impl LocalTest for NonMonotoneControl {
    fn name(&self) -> &str {
        "non-monotone-control"
    }

    /// `min(p_(1), 1 - p_(m))`; large p-values look significant too.
    fn statistic_sorted(&self, sorted: &[f64]) -> f64 {
        match (sorted.first(), sorted.last()) {
            (Some(&lo), Some(&hi)) => lo.min(1.0 - hi),
            _ => f64::INFINITY,
        }
    }

    fn reject_sorted(&self, sorted: &[f64], alpha: Alpha) -> Result<bool> {
        Ok(pvalue_rejects(self.pvalue_sorted(sorted)?, alpha))
    }

    fn pvalue_sorted(&self, sorted: &[f64]) -> Result<f64> {
        nonempty(self.name(), sorted)?;
        Ok((2.0 * sorted.len() as f64 * self.statistic_sorted(sorted)).min(1.0))
    }
}

/// Negative control: looks only at the first p-value in input order.
#[derive(Debug, Clone, Copy, Default)]
pub struct FirstCoordinateControl;

impl LocalTest for FirstCoordinateControl {
    fn name(&self) -> &str {
        "first-coordinate-control"
    }

    fn statistic_sorted(&self, sorted: &[f64]) -> f64 {
        sorted.first().copied().unwrap_or(f64::INFINITY)
    }

    fn reject_sorted(&self, sorted: &[f64], alpha: Alpha) -> Result<bool> {
        nonempty(self.name(), sorted)?;
        Ok(sorted[0] <= alpha.get())
    }

    fn pvalue_sorted(&self, sorted: &[f64]) -> Result<f64> {
        nonempty(self.name(), sorted)?;
        Ok(sorted[0])
    }

    fn statistic(&self, p: &[f64]) -> f64 {
        self.statistic_sorted(p)
    }

    fn reject(&self, p: &[f64], alpha: Alpha) -> Result<bool> {
        self.reject_sorted(p, alpha)
    }

    fn pvalue(&self, p: &[f64]) -> Result<f64> {
        self.pvalue_sorted(p)
    }
}
