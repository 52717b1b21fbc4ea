//! Statistical checks that turn the limit statements into pass/fail
//! results at finite horizons.

pub mod equivalence;
pub mod stats;
pub mod theorems;
pub mod trend;

pub use equivalence::{event_equivalence, event_equivalence_from, symmetric_difference_ratio, EquivalenceEstimate, EventPair};
pub use stats::{chisq_poisson, kolmogorov_sf, ks_test, ks_two_sample, ChiSquareResult, KsResult};
pub use theorems::{run_theorem, theorem, CheckReport, TheoremInfo, TheoremOutcome, VerifyConfig, THEOREMS};
pub use trend::{trend_check, Direction, TrendPoint, TrendReport};
