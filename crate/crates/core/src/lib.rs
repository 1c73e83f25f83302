//! Fast closed testing.
//!
//! Closed testing rejects an individual hypothesis only if every
//! intersection hypothesis containing it is rejected by a level-alpha local
//! test, which controls the family-wise error rate but naively needs `2^n`
//! tests. When each local test is monotone and symmetric in the p-values,
//! [`engine::fact_reject`] computes exactly the same rejections with at most
//! `(s + 1) n` local-test calls, `s` being the number of rejections.
//!
//! ```
//! use std::sync::Arc;
//! use fact_core::{fact_reject, Alpha, RulePlan, Simes, SortedPValues};
//!
//! let p = SortedPValues::from_values(vec![0.01, 0.025, 0.2]).unwrap();
//! let plan = RulePlan::uniform(Arc::new(Simes), p.len()).unwrap();
//! let r = fact_reject(&p, &plan, Alpha::new(0.05).unwrap()).unwrap();
//! assert_eq!(r.rejected_ranks, vec![1, 2]);
//! ```

pub mod consonance;
pub mod engine;
pub mod error;
pub mod fusion;
pub mod local_tests;
pub mod methods;
pub mod oracle;
pub mod parallel;
pub mod pvalues;
pub mod rng;
pub mod shortcuts;
pub mod sim;
pub mod special;

pub use engine::{consonant_shortcut, fact_adjusted, fact_reject, RulePlan};
pub use error::{Error, Result};
pub use fusion::{simes_hc_plan, uniform_plan, FusionSpec};
pub use local_tests::{
    Bonferroni, Calibrator, CriticalValueTable, Fisher, HigherCriticism, LocalTest, Simes, Stouffer,
    TruncatedProduct, Wilkinson,
};
pub use methods::{Method, MethodKind, MethodParams};
pub use oracle::{brute_force_closure, compare_with_closure, fwer_witness};
pub use parallel::Execution;
pub use pvalues::{AdjustedPValues, Alpha, HypothesisId, PValueVector, RejectionResult, SortedPValues};
pub use shortcuts::{holm, hommel};
