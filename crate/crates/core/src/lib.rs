//! Budget-constrained online chunk selection for retrieval-augmented generation.
//!
//! Prompts arrive one at a time with a list of retrieved candidate chunks,
//! each carrying a relevance score and a price. A selector enriches each
//! prompt with at most one chunk, irrevocably, without overdrawing a budget.
//!
//! - [`model`]: domain types and instance validation
//! - [`selectors`]: the budget-dependent threshold policy and its baselines
//! - [`offline`]: exact offline optimum (enumeration and dynamic programming)
//! - [`adversary`]: the lower-bound instance family
//! - [`metrics`]: NEP, AR, NEP x AR and the billing models
//! - [`harness`]: shuffled-stream experiments and aggregation
//! - [`io`]: instance and results files, synthetic instances

pub mod adversary;
pub mod harness;
pub mod io;
pub mod metrics;
pub mod model;
pub mod offline;
pub mod selectors;

pub use model::{Assignment, Budget, Candidate, Decision, Instance, Outcome, PromptArrival};
pub use selectors::{psi, PolicyKind, Selector, SelectorState, ThresholdParams};
