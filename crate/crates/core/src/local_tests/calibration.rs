//! Monte-Carlo calibration of critical values and the on-disk table cache.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use rand::Rng;

use super::LocalTest;
use crate::error::{Error, Result};
use crate::parallel::Execution;
use crate::pvalues::Alpha;
use crate::rng::{derive_seed, stream_at};

/// Smallest Monte-Carlo sample count accepted by [`calibrate`].
pub const MIN_CALIBRATION_SAMPLES: usize = 1000;

const HEADER: &str = "# fact critical-value table v2";

/// Where a table's critical values came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Provenance {
    Analytic,
    MonteCarlo { samples: usize, seed: u64 },
}

/// Critical values `c_1..=c_n_max` of one test at one level.
#[derive(Debug, Clone, PartialEq)]
pub struct CriticalValueTable {
    test: String,
    params: String,
    alpha: Alpha,
    values: Vec<f64>,
    provenance: Provenance,
}

impl CriticalValueTable {
    pub fn new(
        test: impl Into<String>,
        params: impl Into<String>,
        alpha: Alpha,
        values: Vec<f64>,
        provenance: Provenance,
    ) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::param("values", "a critical-value table needs at least one size"));
        }
        if let Some(m) = values.iter().position(|v| v.is_nan()) {
            return Err(Error::param("values", format!("critical value for size {} is NaN", m + 1)));
        }
        Ok(CriticalValueTable { test: test.into(), params: params.into(), alpha, values, provenance })
    }

    pub fn test(&self) -> &str {
        &self.test
    }

    pub fn params(&self) -> &str {
        &self.params
    }

    pub fn alpha(&self) -> Alpha {
        self.alpha
    }

    pub fn provenance(&self) -> Provenance {
        self.provenance
    }

    pub fn n_max(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn critical_value(&self, m: usize) -> Result<f64> {
        if m == 0 || m > self.values.len() {
            return Err(Error::CalibrationMissing { test: self.test.clone(), size: m });
        }
        Ok(self.values[m - 1])
    }

    /// File name derived from the full cache key.
    pub fn file_name(&self) -> String {
        let (samples, seed) = match self.provenance {
            Provenance::MonteCarlo { samples, seed } => (samples.to_string(), seed.to_string()),
            Provenance::Analytic => ("analytic".into(), "none".into()),
        };
        cache_file_name(&self.test, &self.params, self.alpha, &samples, &seed)
    }

    /// Versioned plain-text form with 17 significant digits per value.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let (samples, seed) = match self.provenance {
            Provenance::MonteCarlo { samples, seed } => (samples.to_string(), seed.to_string()),
            Provenance::Analytic => ("analytic".into(), "none".into()),
        };
        let _ = writeln!(out, "{HEADER}");
        let _ = writeln!(out, "test = {}", self.test);
        let _ = writeln!(out, "params = {}", self.params);
        let _ = writeln!(out, "alpha = {:.16e}", self.alpha.get());
        let _ = writeln!(out, "samples = {samples}");
        let _ = writeln!(out, "seed = {seed}");
        let _ = writeln!(out, "m,critical_value");
        for (i, v) in self.values.iter().enumerate() {
            let _ = writeln!(out, "{},{:.16e}", i + 1, v);
        }
        out
    }

    pub fn from_text(text: &str) -> std::result::Result<Self, String> {
        let mut lines = text.lines().map(str::trim).filter(|l| !l.is_empty());
        if lines.next() != Some(HEADER) {
            return Err("missing or unsupported header".into());
        }
        let mut field = |key: &str| -> std::result::Result<String, String> {
            let line = lines.next().ok_or_else(|| format!("missing `{key}` line"))?;
            let (k, v) = line.split_once('=').ok_or_else(|| format!("malformed line `{line}`"))?;
            if k.trim() != key {
                return Err(format!("expected `{key}`, found `{}`", k.trim()));
            }
            Ok(v.trim().to_string())
        };
        let test = field("test")?;
        let params = field("params")?;
        let alpha = field("alpha")?
            .parse::<f64>()
            .map_err(|e| e.to_string())
            .and_then(|a| Alpha::new(a).map_err(|e| e.to_string()))?;
        let samples = field("samples")?;
        let seed = field("seed")?;
        let provenance = if samples == "analytic" {
            Provenance::Analytic
        } else {
            Provenance::MonteCarlo {
                samples: samples.parse().map_err(|_| format!("bad sample count `{samples}`"))?,
                seed: seed.parse().map_err(|_| format!("bad seed `{seed}`"))?,
            }
        };
        if lines.next() != Some("m,critical_value") {
            return Err("missing column header".into());
        }
        let mut values = Vec::new();
        for line in lines {
            let (m, v) = line.split_once(',').ok_or_else(|| format!("malformed row `{line}`"))?;
            let m: usize = m.trim().parse().map_err(|_| format!("bad size in `{line}`"))?;
            if m != values.len() + 1 {
                return Err(format!("rows out of order at size {m}"));
            }
            values.push(v.trim().parse::<f64>().map_err(|_| format!("bad value in `{line}`"))?);
        }
        Self::new(test, params, alpha, values, provenance).map_err(|e| e.to_string())
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir)?;
        }
        // Write-then-rename so a concurrent reader never sees a partial file.
        let tmp = path.with_extension(format!("tmp{}", std::process::id()));
        fs::write(&tmp, self.to_text())?;
        fs::rename(&tmp, path)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        Self::from_text(&text).map_err(|reason| Error::Cache { path: path.to_path_buf(), reason })
    }
}

fn cache_file_name(test: &str, params: &str, alpha: Alpha, samples: &str, seed: &str) -> String {
    let raw = format!("{test}_{params}_alpha{}_B{samples}_seed{seed}", alpha.get());
    let clean: String = raw
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || matches!(c, '-' | '.' | '_') { c } else { '_' })
        .collect();
    format!("{clean}.txt")
}

/// Sorted statistics of `samples` independent Uniform(0,1)^m draws.
///
/// Draw `b` for size `m` reads stream `m` of the calibration generator at
/// offset `b * m`, so the output is independent of how samples are split
/// across threads and of which other sizes are calibrated.
pub fn null_statistics(
    statistic: &(dyn Fn(&[f64]) -> f64 + Sync),
    m: usize,
    samples: usize,
    seed: u64,
    exec: Execution,
) -> Vec<f64> {
    let seed = derive_seed(seed, "calibration");
    let mut stats = exec.map(samples, |b| {
        let mut rng = stream_at(seed, m as u64, b as u64, m as u64);
        let mut u: Vec<f64> = (0..m).map(|_| rng.random::<f64>()).collect();
        u.sort_by(f64::total_cmp);
        statistic(&u)
    });
    stats.sort_by(f64::total_cmp);
    stats
}

/// Lower-tail inverse-ECDF quantile of an ascending sample, the `K`-th
/// smallest value with `K = ceil(alpha B)`.
///
/// When that value is tied with the next one the sample has an atom there
/// (the truncated product is exactly zero whenever no p-value is below the
/// truncation point), and `T <= c` would reject the whole atom. The critical
/// value then steps down to the largest value strictly below the atom, or to
/// `-inf` when nothing lies below it, so the empirical level stays at most
/// alpha. Without ties this is the plain inverse-ECDF quantile.
fn lower_quantile(sorted: &[f64], alpha: Alpha) -> f64 {
    let k = ((alpha.get() * sorted.len() as f64) - 1e-9).ceil().max(1.0) as usize;
    let k = k.min(sorted.len());
    let c = sorted[k - 1];
    if k == sorted.len() || sorted[k] != c {
        return c;
    }
    match sorted.partition_point(|&x| x < c) {
        0 => f64::NEG_INFINITY,
        i => sorted[i - 1],
    }
}

fn calibrate_sizes(
    test: &dyn LocalTest,
    sizes: std::ops::RangeInclusive<usize>,
    alpha: Alpha,
    samples: usize,
    seed: u64,
    exec: Execution,
) -> Vec<f64> {
    let stat = |s: &[f64]| test.statistic_sorted(s);
    sizes.map(|m| lower_quantile(&null_statistics(&stat, m, samples, seed, exec), alpha)).collect()
}

/// Critical values `c_m`, `m = 1..=n_max`: the empirical lower
/// `alpha`-quantile of the statistic under independent uniform nulls.
pub fn calibrate(
    test: &dyn LocalTest,
    n_max: usize,
    alpha: Alpha,
    samples: usize,
    seed: u64,
    exec: Execution,
) -> Result<CriticalValueTable> {
    if n_max == 0 {
        return Err(Error::param("n_max", "must be at least 1"));
    }
    if samples < MIN_CALIBRATION_SAMPLES {
        return Err(Error::param(
            "samples",
            format!("{samples} is below the minimum of {MIN_CALIBRATION_SAMPLES}"),
        ));
    }
    let values = calibrate_sizes(test, 1..=n_max, alpha, samples, seed, exec);
    CriticalValueTable::new(
        test.name(),
        test.params(),
        alpha,
        values,
        Provenance::MonteCarlo { samples, seed },
    )
}

type MemoKey = (String, String, u64);

/// Memoizing, optionally disk-backed source of calibrated tables.
///
/// A request for more sizes than a cached table holds calibrates only the
/// missing sizes; because each size has its own random stream the result is
/// bit-identical to calibrating everything from scratch.
#[derive(Debug)]
pub struct Calibrator {
    samples: usize,
    seed: u64,
    cache_dir: Option<PathBuf>,
    exec: Execution,
    memo: Mutex<HashMap<MemoKey, Arc<CriticalValueTable>>>,
}

impl Calibrator {
    pub fn new(samples: usize, seed: u64, cache_dir: Option<PathBuf>) -> Result<Self> {
        if samples < MIN_CALIBRATION_SAMPLES {
            return Err(Error::param(
                "samples",
                format!("{samples} is below the minimum of {MIN_CALIBRATION_SAMPLES}"),
            ));
        }
        Ok(Calibrator { samples, seed, cache_dir, exec: Execution::default(), memo: Mutex::new(HashMap::new()) })
    }

    pub fn with_execution(mut self, exec: Execution) -> Self {
        self.exec = exec;
        self
    }

    pub fn samples(&self) -> usize {
        self.samples
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn cache_dir(&self) -> Option<&Path> {
        self.cache_dir.as_deref()
    }

    fn path_for(&self, test: &dyn LocalTest, alpha: Alpha) -> Option<PathBuf> {
        let name = cache_file_name(
            test.name(),
            &test.params(),
            alpha,
            &self.samples.to_string(),
            &self.seed.to_string(),
        );
        self.cache_dir.as_ref().map(|d| d.join(name))
    }

    /// Table for `test` covering at least sizes `1..=n_max`.
    pub fn table(&self, test: &dyn LocalTest, n_max: usize, alpha: Alpha) -> Result<Arc<CriticalValueTable>> {
        if n_max == 0 {
            return Err(Error::param("n_max", "must be at least 1"));
        }
        let key = (test.name().to_string(), test.params(), alpha.get().to_bits());
        let mut memo = self.memo.lock().expect("calibration memo poisoned");
        let mut current = memo.get(&key).cloned();
        let path = self.path_for(test, alpha);
        if current.as_ref().is_none_or(|t| t.n_max() < n_max) {
            if let Some(path) = path.as_ref().filter(|p| p.exists()) {
                let loaded = CriticalValueTable::load(path)?;
                let expected = Provenance::MonteCarlo { samples: self.samples, seed: self.seed };
                if loaded.test() != test.name()
                    || loaded.params() != test.params()
                    || loaded.alpha() != alpha
                    || loaded.provenance() != expected
                {
                    return Err(Error::Cache { path: path.clone(), reason: "header does not match its file name".into() });
                }
                if current.as_ref().is_none_or(|t| t.n_max() < loaded.n_max()) {
                    current = Some(Arc::new(loaded));
                }
            }
        }
        if let Some(t) = current.as_ref().filter(|t| t.n_max() >= n_max) {
            memo.insert(key, t.clone());
            return Ok(t.clone());
        }
        let have = current.as_ref().map_or(0, |t| t.n_max());
        let mut values = current.map(|t| t.values().to_vec()).unwrap_or_default();
        values.extend(calibrate_sizes(test, have + 1..=n_max, alpha, self.samples, self.seed, self.exec));
        let table = Arc::new(CriticalValueTable::new(
            test.name(),
            test.params(),
            alpha,
            values,
            Provenance::MonteCarlo { samples: self.samples, seed: self.seed },
        )?);
        if let Some(path) = path {
            table.write(&path).map_err(|e| match e {
                Error::Io(io) => Error::Cache { path: path.clone(), reason: io.to_string() },
                other => other,
            })?;
        }
        memo.insert(key, table.clone());
        Ok(table)
    }
}

/// Lower-tail quantile of a test statistic over an explicit null sample.
#[cfg(test)]
pub(crate) fn empirical_quantile(sample: &[f64], alpha: Alpha) -> f64 {
    lower_quantile(&super::sorted_copy(sample), alpha)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::local_tests::{Bonferroni, Fisher};

    fn a(x: f64) -> Alpha {
        Alpha::new(x).unwrap()
    }

    #[test]
    fn quantile_convention() {
        let s: Vec<f64> = (1..=100).map(|i| i as f64).collect();
        assert_eq!(empirical_quantile(&s, a(0.05)), 5.0);
        assert_eq!(empirical_quantile(&s, a(0.051)), 6.0);
        assert_eq!(empirical_quantile(&s[..10], a(0.01)), 1.0);
        // An atom straddling the quantile position is excluded.
        let atom = [-3.0, -2.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0];
        assert_eq!(empirical_quantile(&atom, a(0.3)), -2.0);
        assert_eq!(empirical_quantile(&atom, a(0.2)), -2.0);
        assert_eq!(empirical_quantile(&[0.0; 10], a(0.05)), f64::NEG_INFINITY);
        // A tie that ends exactly at the quantile position is kept.
        assert_eq!(empirical_quantile(&[1.0, 1.0, 2.0, 3.0], a(0.5)), 1.0);
    }

    #[test]
    fn truncated_product_keeps_its_level_at_size_one() {
        use crate::local_tests::{CalibratedTest, LocalTest, TpmStatistic};
        let tpm = CalibratedTest::uncalibrated(TpmStatistic::new(0.05).unwrap());
        let t = calibrate(&tpm, 2, a(0.05), 20_000, 77, Execution::default()).unwrap();
        // Size-one rejection region is {p <= tau}, never the whole zero atom.
        let c = t.critical_value(1).unwrap();
        assert!(c < 0.0 && c >= 0.05f64.ln() - 0.1, "{c}");
        let tpm = CalibratedTest::with_table(TpmStatistic::new(0.05).unwrap(), Arc::new(t)).unwrap();
        assert!(!tpm.reject(&[0.5], a(0.05)).unwrap());
        assert!(tpm.reject(&[0.001], a(0.05)).unwrap());
    }

    #[test]
    fn bonferroni_statistic_matches_min_uniform_quantile() {
        let b = 40_000;
        let t = calibrate(&Bonferroni, 5, a(0.05), b, 11, Execution::default()).unwrap();
        for m in 1..=5 {
            let q = 1.0 - 0.95f64.powf(1.0 / m as f64);
            // Quantile SE = sqrt(a(1-a)/B) / density at q.
            let dens = m as f64 * (1.0 - q).powi(m as i32 - 1);
            let se = (0.05f64 * 0.95 / b as f64).sqrt() / dens;
            let c = t.critical_value(m).unwrap();
            assert!((c - q).abs() <= 3.0 * se, "m={m}: {c} vs {q}");
        }
    }

    #[test]
    fn fisher_statistic_matches_chisq_quantile() {
        let b = 40_000;
        let t = calibrate(&Fisher, 3, a(0.05), b, 5, Execution::default()).unwrap();
        for m in 1..=3u32 {
            let q = -crate::special::chisq_quantile(0.95, 2 * m).unwrap();
            let c = t.critical_value(m as usize).unwrap();
            // Generous 3-SE band on the quantile scale.
            let x = -q;
            let k = m as f64;
            let dens = (-(x / 2.0) + (k - 1.0) * (x / 2.0).ln() - crate::special::ln_gamma(k)).exp() / 2.0;
            let se = (0.05f64 * 0.95 / b as f64).sqrt() / dens;
            assert!((c - q).abs() <= 3.0 * se, "m={m}: {c} vs {q}");
        }
    }

    #[test]
    fn calibration_is_reproducible_and_parallel_invariant() {
        let seq = calibrate(&Fisher, 4, a(0.1), 2000, 3, Execution::Sequential).unwrap();
        let par = calibrate(&Fisher, 4, a(0.1), 2000, 3, Execution::Parallel).unwrap();
        assert_eq!(seq, par);
        let other = calibrate(&Fisher, 4, a(0.1), 2000, 4, Execution::Sequential).unwrap();
        assert_ne!(seq.values(), other.values());
    }

    #[test]
    fn rejects_small_sample_counts() {
        assert!(calibrate(&Fisher, 2, a(0.05), 10, 1, Execution::Sequential).is_err());
        assert!(Calibrator::new(999, 1, None).is_err());
    }

    #[test]
    fn text_round_trip_is_exact() {
        let t = calibrate(&Fisher, 6, a(0.05), 1000, 9, Execution::Sequential).unwrap();
        let back = CriticalValueTable::from_text(&t.to_text()).unwrap();
        assert_eq!(t, back);
        assert!(CriticalValueTable::from_text("garbage").is_err());
        let mut broken = t.to_text();
        broken.push_str("9,1.0\n");
        assert!(CriticalValueTable::from_text(&broken).is_err());
    }

    #[test]
    fn calibrator_extends_and_hits_cache() {
        let dir = tempfile::tempdir().unwrap();
        let c = Calibrator::new(1000, 21, Some(dir.path().to_path_buf())).unwrap();
        let small = c.table(&Fisher, 3, a(0.05)).unwrap();
        let big = c.table(&Fisher, 6, a(0.05)).unwrap();
        assert_eq!(&big.values()[..3], small.values());
        let fresh = calibrate(&Fisher, 6, a(0.05), 1000, 21, Execution::Sequential).unwrap();
        assert_eq!(*big, fresh);
        // A new calibrator reads the file instead of recomputing.
        let c2 = Calibrator::new(1000, 21, Some(dir.path().to_path_buf())).unwrap();
        assert_eq!(*c2.table(&Fisher, 4, a(0.05)).unwrap(), fresh);
        let files: Vec<_> = fs::read_dir(dir.path()).unwrap().collect();
        assert_eq!(files.len(), 1);
    }

    #[test]
    fn corrupt_cache_file_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        let c = Calibrator::new(1000, 2, Some(dir.path().to_path_buf())).unwrap();
        let path = c.path_for(&Fisher, a(0.05)).unwrap();
        fs::write(&path, "not a table").unwrap();
        assert!(matches!(c.table(&Fisher, 2, a(0.05)), Err(Error::Cache { .. })));
    }
}
