//! Named procedures: parse a method name plus parameters and build the
//! corresponding rule plan.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use crate::engine::RulePlan;
use crate::error::{Error, Result};
use crate::fusion::simes_hc_plan;
use crate::local_tests::{
    Bonferroni, CalibratedTest, Calibrator, Fisher, GeneralizedSimes, GeneralizedSimesCriticalMatrix, HcStatistic,
    HybridHochbergHommel, LocalTest, NonMonotoneControl, Simes, Stouffer, SumStatistic, TpmStatistic, Wilkinson,
};
use crate::pvalues::Alpha;

/// Optional knobs; unset ones take method defaults at build time.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct MethodParams {
    pub sparsity: Option<usize>,
    pub tau: Option<f64>,
    pub alpha0: Option<f64>,
    pub d: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MethodKind {
    Bonferroni,
    Simes,
    Fisher,
    Stouffer,
    Wilkinson,
    TruncatedProduct,
    HigherCriticism,
    SimesHc,
    GeneralizedSimes,
    HybridHochbergHommel,
    SumP,
    /// Deliberately non-monotone; not listed in [`MethodKind::SHIPPED`].
    NonMonotoneControl,
}

impl MethodKind {
    /// Every method intended for real use.
    pub const SHIPPED: [MethodKind; 11] = [
        MethodKind::Bonferroni,
        MethodKind::Simes,
        MethodKind::Fisher,
        MethodKind::Stouffer,
        MethodKind::Wilkinson,
        MethodKind::TruncatedProduct,
        MethodKind::HigherCriticism,
        MethodKind::SimesHc,
        MethodKind::GeneralizedSimes,
        MethodKind::HybridHochbergHommel,
        MethodKind::SumP,
    ];

    pub fn name(self) -> &'static str {
        match self {
            MethodKind::Bonferroni => "bonferroni",
            MethodKind::Simes => "simes",
            MethodKind::Fisher => "fisher",
            MethodKind::Stouffer => "stouffer",
            MethodKind::Wilkinson => "wilkinson",
            MethodKind::TruncatedProduct => "tpm",
            MethodKind::HigherCriticism => "hc",
            MethodKind::SimesHc => "simes-hc",
            MethodKind::GeneralizedSimes => "gst",
            MethodKind::HybridHochbergHommel => "hhh",
            MethodKind::SumP => "sum-p",
            MethodKind::NonMonotoneControl => "non-monotone-control",
        }
    }

    pub fn needs_calibration(self) -> bool {
        matches!(
            self,
            MethodKind::TruncatedProduct | MethodKind::HigherCriticism | MethodKind::SimesHc | MethodKind::SumP
        )
    }
}

impl fmt::Display for MethodKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for MethodKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let k = match s.trim().to_ascii_lowercase().as_str() {
            "bonferroni" | "holm" => MethodKind::Bonferroni,
            "simes" | "hommel" => MethodKind::Simes,
            "fisher" => MethodKind::Fisher,
            "stouffer" => MethodKind::Stouffer,
            "wilkinson" => MethodKind::Wilkinson,
            "tpm" | "truncated-product" => MethodKind::TruncatedProduct,
            "hc" | "higher-criticism" => MethodKind::HigherCriticism,
            "simes-hc" => MethodKind::SimesHc,
            "gst" | "generalized-simes" => MethodKind::GeneralizedSimes,
            "hhh" | "hybrid-hochberg-hommel" => MethodKind::HybridHochbergHommel,
            "sum-p" => MethodKind::SumP,
            "non-monotone-control" => MethodKind::NonMonotoneControl,
            _ => return Err(Error::param("method", format!("unknown method `{s}`"))),
        };
        Ok(k)
    }
}

/// A method with its parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Method {
    pub kind: MethodKind,
    pub params: MethodParams,
}

impl Method {
    pub fn new(kind: MethodKind, params: MethodParams) -> Self {
        Method { kind, params }
    }

    pub fn parse(name: &str, params: MethodParams) -> Result<Self> {
        Ok(Method { kind: name.parse()?, params })
    }

    /// Name plus the parameters that matter for this method.
    pub fn label(&self) -> String {
        let p = &self.params;
        let a0 = p.alpha0.filter(|&a| a != 0.5).map(|a| format!("alpha0={a}"));
        match self.kind {
            MethodKind::SimesHc => {
                let parts: Vec<String> = p.sparsity.map(|s| format!("s={s}")).into_iter().chain(a0).collect();
                if parts.is_empty() {
                    "simes-hc".into()
                } else {
                    format!("simes-hc({})", parts.join(","))
                }
            }
            MethodKind::HigherCriticism => a0.map_or("hc".into(), |a| format!("hc({a})")),
            MethodKind::Wilkinson => p.d.map_or("wilkinson".into(), |d| format!("wilkinson(d={d})")),
            MethodKind::TruncatedProduct => p.tau.map_or("tpm".into(), |t| format!("tpm(tau={t})")),
            kind => kind.name().into(),
        }
    }

    /// The local test for a single-rule method (everything but the fusion).
    pub fn local_test(&self, n: usize, alpha: Alpha, calibrator: &Calibrator) -> Result<Arc<dyn LocalTest>> {
        let p = &self.params;
        let alpha0 = p.alpha0.unwrap_or(0.5);
        let t: Arc<dyn LocalTest> = match self.kind {
            MethodKind::Bonferroni => Arc::new(Bonferroni),
            MethodKind::Simes => Arc::new(Simes),
            MethodKind::Fisher => Arc::new(Fisher),
            MethodKind::Stouffer => Arc::new(Stouffer),
            MethodKind::Wilkinson => Arc::new(Wilkinson::new(p.d.unwrap_or(alpha.get()))?),
            MethodKind::TruncatedProduct => {
                let stat = TpmStatistic::new(p.tau.unwrap_or(alpha.get()))?;
                Arc::new(CalibratedTest::calibrated(stat, calibrator, n, alpha)?)
            }
            MethodKind::HigherCriticism => {
                Arc::new(CalibratedTest::calibrated(HcStatistic::new(alpha0)?, calibrator, n, alpha)?)
            }
            MethodKind::GeneralizedSimes => {
                Arc::new(GeneralizedSimes::new(GeneralizedSimesCriticalMatrix::simes(alpha, n)))
            }
            MethodKind::HybridHochbergHommel => Arc::new(HybridHochbergHommel::default()),
            MethodKind::SumP => {
                Arc::new(CalibratedTest::calibrated(SumStatistic::identity(), calibrator, n, alpha)?)
            }
            MethodKind::NonMonotoneControl => Arc::new(NonMonotoneControl),
            MethodKind::SimesHc => {
                return Err(Error::param("method", "simes-hc is a fusion plan, not a single local test"))
            }
        };
        Ok(t)
    }

    /// Plan for `n` hypotheses at level `alpha`.
    pub fn plan(&self, n: usize, alpha: Alpha, calibrator: &Calibrator) -> Result<RulePlan> {
        if self.kind == MethodKind::SimesHc {
            let s = self
                .params
                .sparsity
                .ok_or_else(|| Error::param("sparsity", "simes-hc needs a sparsity guess"))?;
            return simes_hc_plan(n, s.min(n), self.params.alpha0.unwrap_or(0.5), alpha, calibrator);
        }
        RulePlan::uniform(self.local_test(n, alpha, calibrator)?, n)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}
