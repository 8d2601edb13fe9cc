//! Differential conformance testing for tensorbridge backends.
//!
//! Every op is generated as a set of deterministic cases, run on each
//! backend, and compared pairwise. Gradients are additionally checked
//! against central finite differences.

pub mod cases;
pub mod compare;
pub mod executor;
pub mod fixtures;
pub mod gradcheck;
pub mod report;
pub mod rng;
pub mod run;

pub use cases::{generate_cases, Case, ShapeBudget};
pub use executor::{all_backends, BackendExecutor, Executor};
pub use report::{emit_report, Record, Status, Summary};
pub use run::{run_check, run_differential, run_gradients, CheckConfig, CheckError, Report};
