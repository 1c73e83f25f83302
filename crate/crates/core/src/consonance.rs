//! Consonance analysis for monotone combination tests `T = sum f(p_i)`.
//!
//! The closure of such a family is consonant exactly when each size-`k`
//! test has level alpha at its critical value `c_k` and the critical values
//! grow at most linearly, `c_k <= k c_1`. Levels are estimated by Monte
//! Carlo; the growth condition is checked exactly. A necessary condition
//! for consonance at every `n` is `E f(P) <= f(alpha)` under a uniform `P`.

use std::fmt;
use std::fmt::Write as _;

use rand::RngCore;

use crate::error::{Error, Result};
use crate::local_tests::{CalibratedTest, Calibrator, LocalTest, Summand, TpmStatistic};
use crate::parallel::Execution;
use crate::pvalues::Alpha;
use crate::rng::{derive_seed, stream_at};
use crate::special::{chisq_quantile, normal_cdf, normal_quantile};

/// Fewest Monte-Carlo samples accepted for a level or mean estimate.
pub const MIN_SAMPLES: usize = 10_000;
/// Margins, in standard errors, separating the three outcomes. With several
/// level checks the hold margin widens so the chance that any one of them
/// spuriously leaves the band stays at the single-check value.
pub const HOLD_SE: f64 = 3.0;
pub const DECISIVE_SE: f64 = 5.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Holds,
    Inconclusive,
    Fails,
}

impl fmt::Display for Status {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Status::Holds => "holds",
            Status::Inconclusive => "inconclusive",
            Status::Fails => "fails",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Consonant,
    NotConsonant,
    Inconclusive,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Verdict::Consonant => "consonant",
            Verdict::NotConsonant => "not consonant",
            Verdict::Inconclusive => "inconclusive",
        })
    }
}

/// Estimated `P(sum_{i<=k} f(U_i) <= c_k)` under independent uniforms.
#[derive(Debug, Clone, PartialEq)]
pub struct LevelCheck {
    pub k: usize,
    pub critical_value: f64,
    pub estimate: f64,
    pub se: f64,
    pub status: Status,
}

/// `c_k <= k c_1`, evaluated exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct GrowthCheck {
    pub k: usize,
    pub critical_value: f64,
    pub bound: f64,
    pub holds: bool,
}

/// Monte-Carlo `E f(P)` against `f(alpha)`.
#[derive(Debug, Clone, PartialEq)]
pub struct MeanCondition {
    pub estimate: f64,
    pub se: f64,
    pub f_alpha: f64,
    pub status: Status,
    /// Level at which `f(alpha*)` equals the estimated mean: for increasing
    /// `f` the condition holds for `alpha >= alpha*` and fails below it.
    pub alpha_star: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct ConsonanceReport {
    pub alpha: Alpha,
    pub samples: usize,
    pub seed: u64,
    pub levels: Vec<LevelCheck>,
    pub growth: Vec<GrowthCheck>,
    pub mean: MeanCondition,
    pub verdict: Verdict,
    /// One line per violated condition, with the numbers involved.
    pub reasons: Vec<String>,
}

fn open_uniform(rng: &mut impl RngCore) -> f64 {
    ((rng.next_u64() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
}

fn check_samples(samples: usize) -> Result<()> {
    if samples < MIN_SAMPLES {
        Err(Error::param("samples", format!("{samples} is below the minimum of {MIN_SAMPLES}")))
    } else {
        Ok(())
    }
}

/// Hold margin for `checks` simultaneous level checks, never above the
/// decisive margin.
fn hold_margin(checks: usize) -> f64 {
    let tail = normal_cdf(-HOLD_SE) / checks.max(1) as f64;
    normal_quantile(tail).map_or(HOLD_SE, |z| (-z).clamp(HOLD_SE, DECISIVE_SE))
}

fn level_status(estimate: f64, se: f64, alpha: f64, hold: f64) -> Status {
    if estimate <= alpha + hold * se {
        Status::Holds
    } else if estimate > alpha + DECISIVE_SE * se {
        Status::Fails
    } else {
        Status::Inconclusive
    }
}

/// Monte-Carlo level of each `c_k` plus the exact growth check.
pub fn ccm_check(f: &Summand, critical_values: &[f64], alpha: Alpha, samples: usize, seed: u64) -> Result<ConsonanceReport> {
    check_samples(samples)?;
    if critical_values.is_empty() {
        return Err(Error::param("critical_values", "need at least c_1"));
    }
    let level_seed = derive_seed(seed, "consonance-level");
    let exec = Execution::default();
    let hold = hold_margin(critical_values.len());
    let levels: Vec<LevelCheck> = critical_values
        .iter()
        .enumerate()
        .map(|(i, &c)| {
            let k = i + 1;
            let hits = exec.map(samples, |b| {
                let mut rng = stream_at(level_seed, k as u64, b as u64, k as u64);
                let t: f64 = (0..k).map(|_| f(open_uniform(&mut rng))).sum();
                usize::from(t <= c)
            });
            let est = hits.iter().sum::<usize>() as f64 / samples as f64;
            let se = (est * (1.0 - est) / samples as f64).sqrt();
            LevelCheck { k, critical_value: c, estimate: est, se, status: level_status(est, se, alpha.get(), hold) }
        })
        .collect();

    let c1 = critical_values[0];
    let growth: Vec<GrowthCheck> = critical_values
        .iter()
        .enumerate()
        .skip(1)
        .map(|(i, &c)| {
            let bound = (i + 1) as f64 * c1;
            GrowthCheck { k: i + 1, critical_value: c, bound, holds: c <= bound }
        })
        .collect();

    let mean = mean_condition(f, alpha, samples, seed)?;

    let mut reasons = Vec::new();
    for g in growth.iter().filter(|g| !g.holds) {
        reasons.push(format!("growth: c_{} = {} > {} c_1 = {}", g.k, g.critical_value, g.k, g.bound));
    }
    for l in levels.iter().filter(|l| l.status == Status::Fails) {
        reasons.push(format!(
            "level: size {} rejects with probability {} (se {}) > alpha = {}",
            l.k, l.estimate, l.se, alpha
        ));
    }
    let verdict = if !reasons.is_empty() {
        Verdict::NotConsonant
    } else if levels.iter().any(|l| l.status == Status::Inconclusive) {
        Verdict::Inconclusive
    } else {
        Verdict::Consonant
    };
    Ok(ConsonanceReport { alpha, samples, seed, levels, growth, mean, verdict, reasons })
}

/// [`ccm_check`] for a test exposing a summand. Tests outside the sum
/// family (minimum-based ones such as Bonferroni) are refused.
pub fn ccm_check_test(
    test: &dyn LocalTest,
    critical_values: &[f64],
    alpha: Alpha,
    samples: usize,
    seed: u64,
) -> Result<ConsonanceReport> {
    let f = test.summand().ok_or_else(|| Error::NotMonotoneCombination(test.name().to_string()))?;
    ccm_check(&f, critical_values, alpha, samples, seed)
}

/// Monte-Carlo `E f(P)` for uniform `P`, compared with `f(alpha)`.
///
/// Fails when the mean exceeds `f(alpha)` by more than five standard errors,
/// holds when it falls short by at least that much (or equals it with zero
/// spread), and is inconclusive otherwise.
pub fn mean_condition(f: &Summand, alpha: Alpha, samples: usize, seed: u64) -> Result<MeanCondition> {
    check_samples(samples)?;
    let seed = derive_seed(seed, "consonance-mean");
    let draws = Execution::default().map(samples, |b| f(open_uniform(&mut stream_at(seed, 0, b as u64, 1))));
    let n = samples as f64;
    let estimate = draws.iter().sum::<f64>() / n;
    let var = draws.iter().map(|x| (x - estimate).powi(2)).sum::<f64>() / (n - 1.0);
    let se = (var / n).sqrt();
    let f_alpha = f(alpha.get());
    let diff = estimate - f_alpha;
    let status = if diff > DECISIVE_SE * se {
        Status::Fails
    } else if diff <= -DECISIVE_SE * se {
        Status::Holds
    } else {
        Status::Inconclusive
    };
    Ok(MeanCondition { estimate, se, f_alpha, status, alpha_star: crossing(f, estimate) })
}

/// `x` in (0, 1) with `f(x) = target` for increasing `f`, by bisection.
fn crossing(f: &Summand, target: f64) -> Option<f64> {
    let (mut lo, mut hi) = (f64::MIN_POSITIVE, 1.0 - f64::EPSILON);
    if !(f(lo) < target && f(hi) > target) {
        return None;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Some(0.5 * (lo + hi))
}

/// Stouffer's critical values on the sum scale, `sqrt(k) Phi^{-1}(alpha)`.
pub fn stouffer_critical_values(n: usize, alpha: Alpha) -> Result<Vec<f64>> {
    let z = normal_quantile(alpha.get())?;
    Ok((1..=n).map(|k| (k as f64).sqrt() * z).collect())
}

/// Fisher's critical values on the `2 sum ln p` scale, `-chi^2_{2k, 1-alpha}`.
pub fn fisher_critical_values(n: usize, alpha: Alpha) -> Result<Vec<f64>> {
    (1..=n).map(|k| chisq_quantile(1.0 - alpha.get(), 2 * k as u32).map(|q| -q)).collect()
}

/// Truncated-product critical values: calibrated `c_k` for `k >= 2`, and
/// `c_1 = max(ln tau, max_k c_k / k)`. Any `c_1` in `[ln tau, 0)` gives the
/// single-p test level `tau`, so this choice keeps the level when `tau <=
/// alpha` while making the growth condition hold by construction whenever
/// `c_1 < 0`.
pub fn tpm_critical_values(tau: f64, n: usize, alpha: Alpha, calibrator: &Calibrator) -> Result<Vec<f64>> {
    let stat = TpmStatistic::new(tau)?;
    let test = CalibratedTest::calibrated(stat, calibrator, n, alpha)?;
    let table = test.table().expect("calibrated test carries a table");
    let mut values = table.values().to_vec();
    let c1 = values
        .iter()
        .enumerate()
        .skip(1)
        .map(|(i, &c)| c / (i + 1) as f64)
        .fold(tau.ln(), f64::max);
    values[0] = c1;
    Ok(values)
}

/// `1 - sqrt(1 - alpha) <= tau <= alpha`, the parameter range on which the
/// truncated product closure is consonant.
pub fn tpm_consonance_condition(tau: f64, alpha: Alpha) -> bool {
    let lower = 1.0 - (1.0 - alpha.get()).sqrt();
    lower <= tau && tau <= alpha.get()
}

impl ConsonanceReport {
    pub const CSV_HEADER: &'static str = "check,k,value,bound,estimate,se,status";

    /// Rows in the same comma-separated style as simulation output.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{}", Self::CSV_HEADER);
        for l in &self.levels {
            let _ = writeln!(
                out,
                "level,{},{},{},{},{},{}",
                l.k,
                l.critical_value,
                self.alpha,
                l.estimate,
                l.se,
                l.status
            );
        }
        for g in &self.growth {
            let status = if g.holds { Status::Holds } else { Status::Fails };
            let _ = writeln!(out, "growth,{},{},{},,,{}", g.k, g.critical_value, g.bound, status);
        }
        let m = &self.mean;
        let _ = writeln!(out, "mean,,{},{},{},{},{}", m.f_alpha, m.f_alpha, m.estimate, m.se, m.status);
        if let Some(a) = m.alpha_star {
            let _ = writeln!(out, "alpha_star,,{a},,,,");
        }
        let _ = writeln!(out, "verdict,,,,,,{}", self.verdict);
        out
    }
}

impl fmt::Display for ConsonanceReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "verdict: {} (alpha = {}, {} samples, seed {})", self.verdict, self.alpha, self.samples, self.seed)?;
        for r in &self.reasons {
            writeln!(f, "  {r}")?;
        }
        let m = &self.mean;
        write!(f, "  mean condition: E f(P) = {:.6} (se {:.2e}) vs f(alpha) = {:.6}: {}", m.estimate, m.se, m.f_alpha, m.status)?;
        if let Some(a) = m.alpha_star {
            write!(f, "; holds for alpha >= {a:.6}, fails below")?;
        }
        Ok(())
    }
}

/// Shorthand for a summand from a plain function.
pub fn summand(f: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Summand {
    std::sync::Arc::new(f)
}
