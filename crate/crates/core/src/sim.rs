//! Normal-means simulations: FWER and power of closed-testing procedures.
//!
//! Each trial draws `X ~ N(mu, Sigma)` with the first `s` means equal to
//! `sqrt(2n/s) M` and the rest zero, so `|mu|^2 = 2 n M^2` regardless of the
//! sparsity, and converts to one-sided p-values `p_i = 1 - Phi(X_i)`. All
//! methods in a scenario see the same p-values in a given trial.

use std::fmt;
use std::io::Write;

use rand_distr::{Distribution, StandardNormal};

use crate::engine::{fact_reject, RulePlan};
use crate::error::{Error, Result};
use crate::local_tests::Calibrator;
use crate::methods::Method;
use crate::parallel::Execution;
use crate::pvalues::{Alpha, PValueVector};
use crate::rng::{derive_seed, stream};
use crate::special::normal_cdf;

/// Sparsity levels swept by default.
pub const DEFAULT_SPARSITY_GRID: [usize; 8] = [0, 1, 2, 5, 10, 20, 50, 100];

pub const CSV_HEADER: &str =
    "method,n,s_true,s_param,M,cov,rho,trials,fwer,fwer_se,true_rej_mean,true_rej_se,false_rej_mean,false_rej_se,seed";

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Covariance {
    Iid,
    /// `(1 - rho) I + rho 1 1^T`.
    Spiked(f64),
    /// `Sigma_ij = rho^|i - j|`.
    Ar1(f64),
}

impl Covariance {
    pub fn name(&self) -> &'static str {
        match self {
            Covariance::Iid => "iid",
            Covariance::Spiked(_) => "spiked",
            Covariance::Ar1(_) => "ar1",
        }
    }

    pub fn rho(&self) -> f64 {
        match *self {
            Covariance::Iid => 0.0,
            Covariance::Spiked(r) | Covariance::Ar1(r) => r,
        }
    }

    pub fn parse(name: &str, rho: f64) -> Result<Self> {
        match name.trim().to_ascii_lowercase().as_str() {
            "iid" => Ok(Covariance::Iid),
            "spiked" => Ok(Covariance::Spiked(rho)),
            "ar1" => Ok(Covariance::Ar1(rho)),
            other => Err(Error::param("cov", format!("unknown covariance `{other}` (iid, spiked, ar1)"))),
        }
    }

    fn validate(&self, n: usize) -> Result<()> {
        match *self {
            Covariance::Iid => Ok(()),
            Covariance::Spiked(r) => {
                let lo = if n > 1 { -1.0 / (n as f64 - 1.0) } else { -1.0 };
                if (lo..=1.0).contains(&r) {
                    Ok(())
                } else {
                    Err(Error::param("rho", format!("spiked rho {r} is outside [{lo}, 1] for n = {n}")))
                }
            }
            Covariance::Ar1(r) => {
                if r > -1.0 && r < 1.0 {
                    Ok(())
                } else {
                    Err(Error::param("rho", format!("AR(1) rho {r} is outside (-1, 1)")))
                }
            }
        }
    }

    /// Dense `n x n` matrix, row-major.
    pub fn matrix(&self, n: usize) -> Vec<f64> {
        let mut m = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                m[i * n + j] = match *self {
                    Covariance::Iid => f64::from(u8::from(i == j)),
                    Covariance::Spiked(r) => {
                        if i == j {
                            1.0
                        } else {
                            r
                        }
                    }
                    Covariance::Ar1(r) => r.powi(i.abs_diff(j) as i32),
                };
            }
        }
        m
    }
}

impl fmt::Display for Covariance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Covariance::Iid => f.write_str("iid"),
            c => write!(f, "{}(rho={})", c.name(), c.rho()),
        }
    }
}

/// Lower-triangular `L` with `L L^T = a` for a symmetric positive
/// semidefinite `a` (row-major). Pivots within a relative tolerance of zero
/// are treated as exact zeros, which admits singular matrices such as the
/// spiked model at its endpoints.
pub fn cholesky_psd(a: &[f64], n: usize) -> Result<Vec<f64>> {
    let scale = (0..n).map(|i| a[i * n + i].abs()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    let tol = 1e-10 * scale * n as f64;
    let mut l = vec![0.0; n * n];
    for j in 0..n {
        let d = a[j * n + j] - (0..j).map(|k| l[j * n + k] * l[j * n + k]).sum::<f64>();
        if d < -tol {
            return Err(Error::NotPositiveSemidefinite { pivot: j, value: d });
        }
        if d <= tol {
            // Column is linearly dependent on earlier ones.
            continue;
        }
        let djj = d.sqrt();
        l[j * n + j] = djj;
        for i in j + 1..n {
            let s = a[i * n + j] - (0..j).map(|k| l[i * n + k] * l[j * n + k]).sum::<f64>();
            l[i * n + j] = s / djj;
        }
    }
    Ok(l)
}

#[derive(Debug, Clone)]
pub struct ScenarioConfig {
    pub n: usize,
    /// Number of false nulls; they occupy the first `s_true` coordinates.
    pub s_true: usize,
    /// Global signal strength `M`.
    pub signal: f64,
    pub covariance: Covariance,
    pub trials: usize,
    pub alpha: Alpha,
    pub methods: Vec<Method>,
    pub seed: u64,
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::param("n", "must be at least 1"));
        }
        if self.s_true > self.n {
            return Err(Error::OutOfRange { what: "true sparsity", value: self.s_true, max: self.n });
        }
        if !self.signal.is_finite() || self.signal < 0.0 {
            return Err(Error::param("signal", format!("{} is not a finite non-negative number", self.signal)));
        }
        if self.trials == 0 {
            return Err(Error::param("trials", "must be at least 1"));
        }
        self.covariance.validate(self.n)
    }

    /// Mean of each coordinate; all zero when `s_true = 0`.
    pub fn means(&self) -> Vec<f64> {
        let mut mu = vec![0.0; self.n];
        if self.s_true > 0 {
            let effect = (2.0 * self.n as f64 / self.s_true as f64).sqrt() * self.signal;
            mu[..self.s_true].fill(effect);
        }
        mu
    }
}

/// Draws the p-values of one trial.
#[derive(Debug, Clone)]
pub struct Sampler {
    n: usize,
    means: Vec<f64>,
    /// `None` for identity covariance.
    factor: Option<Vec<f64>>,
    seed: u64,
}

impl Sampler {
    pub fn new(config: &ScenarioConfig) -> Result<Self> {
        config.validate()?;
        let n = config.n;
        let factor = match config.covariance {
            Covariance::Iid => None,
            c => Some(cholesky_psd(&c.matrix(n), n)?),
        };
        Ok(Sampler { n, means: config.means(), factor, seed: derive_seed(config.seed, "simulation") })
    }

    /// One-sided p-values for `trial`; a pure function of seed and trial.
    pub fn p_values(&self, trial: usize) -> Vec<f64> {
        let mut rng = stream(self.seed, trial as u64);
        let z: Vec<f64> = (0..self.n).map(|_| StandardNormal.sample(&mut rng)).collect();
        (0..self.n)
            .map(|i| {
                let noise = match &self.factor {
                    None => z[i],
                    Some(l) => (0..=i).map(|k| l[i * self.n + k] * z[k]).sum(),
                };
                normal_cdf(-(self.means[i] + noise))
            })
            .collect()
    }
}

/// P-values of trial `trial` with ids `1..=n`.
pub fn sample_statistics(config: &ScenarioConfig, trial: usize) -> Result<PValueVector> {
    PValueVector::from_values(Sampler::new(config)?.p_values(trial))
}

/// Mean and `sqrt(variance / trials)` of a sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub mean: f64,
    pub se: f64,
}

impl Estimate {
    fn of(xs: impl Iterator<Item = f64> + Clone, n: usize) -> Self {
        let nf = n as f64;
        let mean = xs.clone().sum::<f64>() / nf;
        let var = xs.map(|x| (x - mean).powi(2)).sum::<f64>() / nf;
        Estimate { mean, se: (var / nf).sqrt() }
    }
}

/// Results for one method in one scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct MethodSummary {
    pub method: String,
    pub s_param: Option<usize>,
    pub fwer: Estimate,
    pub true_rejections: Estimate,
    pub false_rejections: Estimate,
}

#[derive(Debug, Clone)]
pub struct SimulationReport {
    pub config: ScenarioConfig,
    pub rows: Vec<MethodSummary>,
}

impl SimulationReport {
    pub fn row(&self, label: &str) -> Option<&MethodSummary> {
        self.rows.iter().find(|r| r.method == label)
    }

    /// CSV rows (no header).
    pub fn write_rows(&self, out: &mut impl Write) -> std::io::Result<()> {
        let c = &self.config;
        for r in &self.rows {
            writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
                r.method,
                c.n,
                c.s_true,
                r.s_param.map(|s| s.to_string()).unwrap_or_default(),
                c.signal,
                c.covariance.name(),
                c.covariance.rho(),
                c.trials,
                r.fwer.mean,
                r.fwer.se,
                r.true_rejections.mean,
                r.true_rejections.se,
                r.false_rejections.mean,
                r.false_rejections.se,
                c.seed
            )?;
        }
        Ok(())
    }
}

/// Runs every method on every trial of `config`.
pub fn run_scenario(config: &ScenarioConfig, calibrator: &Calibrator) -> Result<SimulationReport> {
    run_scenario_with(config, calibrator, Execution::default())
}

/// [`run_scenario`] with an explicit execution mode.
pub fn run_scenario_with(config: &ScenarioConfig, calibrator: &Calibrator, exec: Execution) -> Result<SimulationReport> {
    let sampler = Sampler::new(config)?;
    let plans: Vec<RulePlan> =
        config.methods.iter().map(|m| m.plan(config.n, config.alpha, calibrator)).collect::<Result<_>>()?;
    let s = config.s_true;
    let per_trial = exec.try_map(config.trials, |trial| -> Result<Vec<(usize, usize)>> {
        let p = PValueVector::from_values(sampler.p_values(trial))
            .map_err(|e| Error::Trial { trial, source: Box::new(e) })?;
        let sorted = p.sorted();
        plans
            .iter()
            .map(|plan| {
                let r = fact_reject(&sorted, plan, config.alpha)
                    .map_err(|e| Error::Trial { trial, source: Box::new(e) })?;
                let true_rej = r.rejected_ranks.iter().filter(|&&k| sorted.original_index(k) < s).count();
                Ok((true_rej, r.rejected_count() - true_rej))
            })
            .collect()
    })?;

    let t = config.trials;
    let rows = config
        .methods
        .iter()
        .enumerate()
        .map(|(j, m)| {
            let col = per_trial.iter().map(move |row| row[j]);
            MethodSummary {
                method: m.label(),
                s_param: m.params.sparsity.filter(|_| m.kind == crate::methods::MethodKind::SimesHc),
                fwer: Estimate::of(col.clone().map(|(_, f)| f64::from(u8::from(f > 0))), t),
                true_rejections: Estimate::of(col.clone().map(|(tr, _)| tr as f64), t),
                false_rejections: Estimate::of(col.map(|(_, f)| f as f64), t),
            }
        })
        .collect();
    Ok(SimulationReport { config: config.clone(), rows })
}

/// Runs each scenario and writes one CSV (header plus a row per method and
/// scenario) to `out`.
pub fn sweep(configs: &[ScenarioConfig], calibrator: &Calibrator, out: &mut impl Write) -> Result<Vec<SimulationReport>> {
    writeln!(out, "{CSV_HEADER}")?;
    let mut reports = Vec::with_capacity(configs.len());
    for c in configs {
        let r = run_scenario(c, calibrator)?;
        r.write_rows(out)?;
        reports.push(r);
    }
    Ok(reports)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::methods::{MethodKind, MethodParams};

    fn config(cov: Covariance, s: usize, m: f64) -> ScenarioConfig {
        ScenarioConfig {
            n: 20,
            s_true: s,
            signal: m,
            covariance: cov,
            trials: 50,
            alpha: Alpha::new(0.05).unwrap(),
            methods: vec![
                Method::new(MethodKind::Simes, MethodParams::default()),
                Method::new(MethodKind::Fisher, MethodParams::default()),
            ],
            seed: 9,
        }
    }

    #[test]
    fn cholesky_reproduces_matrix() {
        for cov in [Covariance::Spiked(0.3), Covariance::Ar1(-0.7), Covariance::Spiked(-1.0 / 7.0), Covariance::Spiked(1.0)] {
            let n = 8;
            let a = cov.matrix(n);
            let l = cholesky_psd(&a, n).unwrap();
            for i in 0..n {
                for j in 0..n {
                    let v: f64 = (0..n).map(|k| l[i * n + k] * l[j * n + k]).sum();
                    assert!((v - a[i * n + j]).abs() < 1e-9, "{cov} ({i},{j})");
                }
            }
        }
        let bad = vec![1.0, 2.0, 2.0, 1.0];
        assert!(matches!(cholesky_psd(&bad, 2), Err(Error::NotPositiveSemidefinite { pivot: 1, .. })));
    }

    #[test]
    fn rho_ranges() {
        assert!(config(Covariance::Spiked(-0.06), 0, 0.0).validate().is_err());
        assert!(config(Covariance::Spiked(-0.05), 0, 0.0).validate().is_ok());
        assert!(config(Covariance::Ar1(1.0), 0, 0.0).validate().is_err());
    }

    #[test]
    fn zero_rho_spiked_matches_iid() {
        let a = Sampler::new(&config(Covariance::Iid, 3, 1.0)).unwrap();
        let b = Sampler::new(&config(Covariance::Spiked(0.0), 3, 1.0)).unwrap();
        for t in 0..5 {
            assert_eq!(a.p_values(t), b.p_values(t));
        }
    }

    #[test]
    fn strong_signal_gives_tiny_p_values() {
        let s = Sampler::new(&config(Covariance::Iid, 4, 50.0)).unwrap();
        let p = s.p_values(0);
        assert!(p[..4].iter().all(|&x| x < 1e-100));
    }

    #[test]
    fn sparsity_zero_ignores_signal() {
        let c = config(Covariance::Iid, 0, 3.0);
        assert!(c.means().iter().all(|&m| m == 0.0));
    }

    #[test]
    fn counts_are_bounded_and_reproducible() {
        let cal = Calibrator::new(1000, 1, None).unwrap();
        let c = config(Covariance::Ar1(0.5), 5, 1.5);
        let seq = run_scenario_with(&c, &cal, Execution::Sequential).unwrap();
        let par = run_scenario_with(&c, &cal, Execution::Parallel).unwrap();
        assert_eq!(seq.rows, par.rows);
        for r in &seq.rows {
            assert!(r.true_rejections.mean <= 5.0);
            assert!(r.false_rejections.mean <= 15.0);
        }
        let mut a = Vec::new();
        let mut b = Vec::new();
        sweep(std::slice::from_ref(&c), &cal, &mut a).unwrap();
        sweep(std::slice::from_ref(&c), &cal, &mut b).unwrap();
        assert_eq!(a, b);
        let text = String::from_utf8(a).unwrap();
        assert_eq!(text.lines().next(), Some(CSV_HEADER));
        assert_eq!(text.lines().count(), 3);
    }

    #[test]
    fn empty_sweep_is_header_only() {
        let cal = Calibrator::new(1000, 1, None).unwrap();
        let mut out = Vec::new();
        sweep(&[], &cal, &mut out).unwrap();
        assert_eq!(String::from_utf8(out).unwrap(), format!("{CSV_HEADER}\n"));
    }
}
