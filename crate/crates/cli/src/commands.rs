use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::sync::Arc;

use fact_core::local_tests::{CalibratedTest, HcStatistic, LocalTest, MonotoneStatistic, SumStatistic, TpmStatistic};
use fact_core::methods::{Method, MethodKind, MethodParams};
use fact_core::oracle::BRUTE_FORCE_CAP;
use fact_core::sim::{run_scenario, Covariance, ScenarioConfig, CSV_HEADER};
use fact_core::{compare_with_closure, fact_adjusted, fact_reject, Alpha, Calibrator, Error as CoreError, PValueVector};
use serde::Serialize;

use crate::error::CliError;
use crate::{input, CalibrateArgs, Format, InputArgs, MethodArgs, SimulateArgs};

type CliResult<T = ()> = Result<T, CliError>;

fn alpha(m: &MethodArgs) -> CliResult<Alpha> {
    Ok(Alpha::new(m.alpha)?)
}

fn calibrator(m: &MethodArgs) -> CliResult<Calibrator> {
    Ok(Calibrator::new(m.samples, m.seed, Some(m.cache_dir.clone()))?)
}

fn params(m: &MethodArgs, sparsity: Option<usize>) -> MethodParams {
    MethodParams { sparsity, tau: m.tau, alpha0: m.alpha0, d: m.d }
}

fn single_method(m: &MethodArgs) -> CliResult<Method> {
    if m.method.contains(',') {
        return Err(CliError::usage("this command takes a single --method"));
    }
    let sparsity = match m.sparsity.as_slice() {
        [] => None,
        [s] => Some(*s),
        _ => return Err(CliError::usage("this command takes a single --sparsity")),
    };
    let method = Method::parse(&m.method, params(m, sparsity))?;
    if method.kind == MethodKind::SimesHc && sparsity.is_none() {
        return Err(CliError::usage("simes-hc needs --sparsity"));
    }
    Ok(method)
}

fn output(m: &MethodArgs) -> CliResult<Box<dyn Write>> {
    Ok(match &m.out {
        Some(path) => Box::new(BufWriter::new(File::create(path)?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn write_json(out: &mut dyn Write, value: &impl Serialize) -> CliResult {
    serde_json::to_writer_pretty(&mut *out, value).map_err(io::Error::from)?;
    writeln!(out)?;
    Ok(())
}

#[derive(Clone, Copy, Serialize)]
struct Diagnostics {
    local_test_calls: usize,
    stop_stage: usize,
}

#[derive(Serialize)]
struct Flagged<'a> {
    id: &'a str,
    p: f64,
    rejected: bool,
}

#[derive(Serialize)]
struct TestReport<'a> {
    alpha: f64,
    method: String,
    n: usize,
    rejected_ids: Vec<&'a str>,
    hypotheses: Vec<Flagged<'a>>,
    diagnostics: Diagnostics,
}

#[derive(Serialize)]
struct Adjusted<'a> {
    id: &'a str,
    p: f64,
    p_adj: f64,
}

#[derive(Serialize)]
struct AdjustReport<'a> {
    alpha: f64,
    method: String,
    n: usize,
    rejected_ids: Vec<&'a str>,
    adjusted: Vec<Adjusted<'a>>,
    diagnostics: Diagnostics,
}

/// Rejection flags in input order.
struct Run {
    input: PValueVector,
    method: Method,
    alpha: Alpha,
    flags: Vec<bool>,
    diagnostics: Diagnostics,
    plan: fact_core::RulePlan,
}

fn run(a: &InputArgs) -> CliResult<Run> {
    let m = &a.method;
    let alpha = alpha(m)?;
    let method = single_method(m)?;
    let input = input::read_path(&a.input)?;
    let plan = method.plan(input.len(), alpha, &calibrator(m)?)?;
    let sorted = input.sorted();
    let r = fact_reject(&sorted, &plan, alpha)?;
    let mut flags = vec![false; input.len()];
    for &rank in &r.rejected_ranks {
        flags[sorted.original_index(rank)] = true;
    }
    let diagnostics = Diagnostics { local_test_calls: r.local_test_calls, stop_stage: r.stop_stage };
    Ok(Run { input, method, alpha, flags, diagnostics, plan })
}

impl Run {
    fn rejected_ids(&self) -> Vec<&str> {
        self.input.ids().iter().zip(&self.flags).filter(|(_, &f)| f).map(|(id, _)| id.as_str()).collect()
    }

    fn summary_line(&self) -> String {
        format!(
            "# method={} alpha={} n={} rejected={} local_test_calls={} stop_stage={}",
            self.method.label(),
            self.alpha,
            self.input.len(),
            self.flags.iter().filter(|&&f| f).count(),
            self.diagnostics.local_test_calls,
            self.diagnostics.stop_stage
        )
    }
}

pub fn test(a: &InputArgs) -> CliResult {
    let r = run(a)?;
    let mut out = output(&a.method)?;
    match a.method.format {
        Format::Csv => {
            writeln!(out, "{}", r.summary_line())?;
            writeln!(out, "id,p,rejected")?;
            for ((id, p), f) in r.input.ids().iter().zip(r.input.values()).zip(&r.flags) {
                writeln!(out, "{id},{p},{f}")?;
            }
        }
        Format::Json => {
            let hypotheses = r
                .input
                .ids()
                .iter()
                .zip(r.input.values())
                .zip(&r.flags)
                .map(|((id, &p), &rejected)| Flagged { id, p, rejected })
                .collect();
            let report = TestReport {
                alpha: r.alpha.get(),
                method: r.method.label(),
                n: r.input.len(),
                rejected_ids: r.rejected_ids(),
                hypotheses,
                diagnostics: r.diagnostics,
            };
            write_json(&mut out, &report)?;
        }
    }
    out.flush()?;
    Ok(())
}

pub fn adjust(a: &InputArgs) -> CliResult {
    let r = run(a)?;
    let sorted = r.input.sorted();
    let adj = fact_adjusted(&sorted, &r.plan).map_err(|e| match e {
        CoreError::Stage { source, .. } if matches!(*source, CoreError::NoPValue { .. }) => {
            CliError::usage(format!("{} does not provide p-values; use `test` instead", r.method.label()))
        }
        other => other.into(),
    })?;
    let mut p_adj = vec![0.0; r.input.len()];
    for (i, &q) in adj.adjusted.iter().enumerate() {
        p_adj[sorted.original_index(i + 1)] = q;
    }
    let mut out = output(&a.method)?;
    match a.method.format {
        Format::Csv => {
            writeln!(out, "{}", r.summary_line())?;
            writeln!(out, "id,p,p_adj")?;
            for ((id, p), q) in r.input.ids().iter().zip(r.input.values()).zip(&p_adj) {
                writeln!(out, "{id},{p},{q}")?;
            }
        }
        Format::Json => {
            let adjusted = r
                .input
                .ids()
                .iter()
                .zip(r.input.values())
                .zip(&p_adj)
                .map(|((id, &p), &p_adj)| Adjusted { id, p, p_adj })
                .collect();
            let report = AdjustReport {
                alpha: r.alpha.get(),
                method: r.method.label(),
                n: r.input.len(),
                rejected_ids: r.rejected_ids(),
                adjusted,
                diagnostics: r.diagnostics,
            };
            write_json(&mut out, &report)?;
        }
    }
    out.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct VerifyReport {
    method: String,
    alpha: f64,
    n: usize,
    matches: bool,
    fact_ranks: Vec<usize>,
    closure_ranks: Vec<usize>,
    /// Smallest subset on which the two disagree, when they do.
    subset_ranks: Option<Vec<usize>>,
    subset_values: Option<Vec<f64>>,
}

pub fn verify(a: &InputArgs) -> CliResult {
    let m = &a.method;
    let alpha = alpha(m)?;
    let method = single_method(m)?;
    let input = input::read_path(&a.input)?;
    if input.len() > BRUTE_FORCE_CAP {
        return Err(CoreError::TooLarge { n: input.len(), cap: BRUTE_FORCE_CAP }.into());
    }
    let plan = method.plan(input.len(), alpha, &calibrator(m)?)?;
    let sorted = input.sorted();
    let mismatch = compare_with_closure(&sorted, &plan, alpha)?;
    let report = match &mismatch {
        None => {
            let ranks = fact_reject(&sorted, &plan, alpha)?.rejected_ranks;
            VerifyReport {
                method: method.label(),
                alpha: alpha.get(),
                n: input.len(),
                matches: true,
                closure_ranks: ranks.clone(),
                fact_ranks: ranks,
                subset_ranks: None,
                subset_values: None,
            }
        }
        Some(mm) => VerifyReport {
            method: method.label(),
            alpha: alpha.get(),
            n: input.len(),
            matches: false,
            fact_ranks: mm.fact_ranks.clone(),
            closure_ranks: mm.closure_ranks.clone(),
            subset_ranks: Some(mm.subset_ranks.clone()),
            subset_values: Some(mm.subset_values.clone()),
        },
    };
    let mut out = output(m)?;
    match m.format {
        Format::Csv => {
            let ranks = |r: &[usize]| r.iter().map(usize::to_string).collect::<Vec<_>>().join(";");
            writeln!(out, "method,alpha,n,result,fact_ranks,closure_ranks")?;
            writeln!(
                out,
                "{},{},{},{},{},{}",
                report.method,
                report.alpha,
                report.n,
                if report.matches { "match" } else { "mismatch" },
                ranks(&report.fact_ranks),
                ranks(&report.closure_ranks)
            )?;
        }
        Format::Json => write_json(&mut out, &report)?,
    }
    out.flush()?;
    match mismatch {
        None => Ok(()),
        Some(mm) => Err(CliError::Mismatch(mm.to_string())),
    }
}

fn simulation_methods(m: &MethodArgs) -> CliResult<Vec<Method>> {
    let mut methods = Vec::new();
    for name in m.method.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let kind: MethodKind = name.parse()?;
        if kind == MethodKind::SimesHc {
            if m.sparsity.is_empty() {
                return Err(CliError::usage("simes-hc needs --sparsity"));
            }
            methods.extend(m.sparsity.iter().map(|&s| Method::new(kind, params(m, Some(s)))));
        } else {
            methods.push(Method::new(kind, params(m, None)));
        }
    }
    if methods.is_empty() {
        return Err(CliError::usage("--method lists no methods"));
    }
    Ok(methods)
}

#[derive(Serialize)]
struct SimulationRow<'a> {
    method: &'a str,
    n: usize,
    s_true: usize,
    s_param: Option<usize>,
    signal: f64,
    cov: &'a str,
    rho: f64,
    trials: usize,
    fwer: f64,
    fwer_se: f64,
    true_rej_mean: f64,
    true_rej_se: f64,
    false_rej_mean: f64,
    false_rej_se: f64,
    seed: u64,
}

pub fn simulate(a: &SimulateArgs) -> CliResult {
    let m = &a.method;
    let config = ScenarioConfig {
        n: a.n,
        s_true: a.s_true,
        signal: a.signal,
        covariance: Covariance::parse(&a.cov, a.rho)?,
        trials: a.trials,
        alpha: alpha(m)?,
        methods: simulation_methods(m)?,
        seed: m.seed,
    };
    config.validate()?;
    let report = run_scenario(&config, &calibrator(m)?)?;
    let mut out = output(m)?;
    match m.format {
        Format::Csv => {
            writeln!(out, "{CSV_HEADER}")?;
            report.write_rows(&mut out)?;
        }
        Format::Json => {
            let rows: Vec<SimulationRow> = report
                .rows
                .iter()
                .map(|r| SimulationRow {
                    method: &r.method,
                    n: config.n,
                    s_true: config.s_true,
                    s_param: r.s_param,
                    signal: config.signal,
                    cov: config.covariance.name(),
                    rho: config.covariance.rho(),
                    trials: config.trials,
                    fwer: r.fwer.mean,
                    fwer_se: r.fwer.se,
                    true_rej_mean: r.true_rejections.mean,
                    true_rej_se: r.true_rejections.se,
                    false_rej_mean: r.false_rejections.mean,
                    false_rej_se: r.false_rejections.se,
                    seed: config.seed,
                })
                .collect();
            write_json(&mut out, &rows)?;
        }
    }
    out.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct CalibrationReport {
    test: String,
    params: String,
    alpha: f64,
    samples: usize,
    seed: u64,
    path: String,
    critical_values: Vec<f64>,
}

fn calibrate_statistic<S: MonotoneStatistic + Clone + 'static>(
    stat: S,
    cal: &Calibrator,
    n: usize,
    alpha: Alpha,
) -> CliResult<Arc<fact_core::CriticalValueTable>> {
    let probe: Arc<dyn LocalTest> = Arc::new(CalibratedTest::uncalibrated(stat));
    Ok(cal.table(probe.as_ref(), n, alpha)?)
}

pub fn calibrate(a: &CalibrateArgs) -> CliResult {
    let m = &a.method;
    let alpha = alpha(m)?;
    let cal = calibrator(m)?;
    let kind: MethodKind = m.method.parse()?;
    let alpha0 = m.alpha0.unwrap_or(0.5);
    let table = match kind {
        MethodKind::HigherCriticism | MethodKind::SimesHc => {
            calibrate_statistic(HcStatistic::new(alpha0)?, &cal, a.n, alpha)?
        }
        MethodKind::TruncatedProduct => {
            calibrate_statistic(TpmStatistic::new(m.tau.unwrap_or(alpha.get()))?, &cal, a.n, alpha)?
        }
        MethodKind::SumP => calibrate_statistic(SumStatistic::identity(), &cal, a.n, alpha)?,
        other => return Err(CliError::usage(format!("{other} has closed-form critical values; nothing to calibrate"))),
    };
    let path = m.cache_dir.join(table.file_name());
    let mut out = output(m)?;
    match m.format {
        Format::Csv => {
            writeln!(
                out,
                "# test={} params={} alpha={} samples={} seed={} path={}",
                table.test(),
                table.params(),
                alpha,
                m.samples,
                m.seed,
                path.display()
            )?;
            writeln!(out, "m,critical_value")?;
            for (i, c) in table.values().iter().enumerate().take(a.n) {
                writeln!(out, "{},{c}", i + 1)?;
            }
        }
        Format::Json => write_json(
            &mut out,
            &CalibrationReport {
                test: table.test().to_string(),
                params: table.params().to_string(),
                alpha: alpha.get(),
                samples: m.samples,
                seed: m.seed,
                path: path.display().to_string(),
                critical_values: table.values()[..a.n].to_vec(),
            },
        )?,
    }
    out.flush()?;
    Ok(())
}
