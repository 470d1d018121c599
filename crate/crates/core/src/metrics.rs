//! Evaluation metrics and the billing models of the three service variants.
//!
//! - RaaS bills every submitted prompt at a flat per-prompt price, enriched or not.
//! - OB-CaaS and LB-CaaS bill the chunks actually used ([`chunk_cost`]).

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::Decision;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("performance-to-budget ratio is undefined when nothing was spent")]
    UndefinedRatio,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    /// Number of enriched prompts.
    pub nep: usize,
    /// Average relevance of the selected chunks; `None` when `nep == 0`.
    pub ar: Option<f64>,
    pub nep_times_ar: f64,
    pub total_relevance: f64,
    pub spent: f64,
    /// `nep_times_ar / spent`; `None` when nothing was spent.
    pub perf_to_budget: Option<f64>,
}

pub fn compute_metrics(decisions: &[Decision]) -> RunMetrics {
    let (nep, total_relevance, spent) = decisions
        .iter()
        .filter_map(Decision::selected)
        .fold((0usize, 0.0, 0.0), |(n, r, s), c| (n + 1, r + c.relevance, s + c.price));
    let ar = (nep > 0).then(|| total_relevance / nep as f64);
    let nep_times_ar = ar.map_or(0.0, |ar| nep as f64 * ar);
    let perf_to_budget = (spent > 0.0).then(|| nep_times_ar / spent);
    RunMetrics {
        nep,
        ar,
        nep_times_ar,
        total_relevance,
        spent,
        perf_to_budget,
    }
}

/// RaaS charges every submitted prompt the average chunk price.
pub fn raas_cost(num_prompts: usize, avg_chunk_price: f64) -> f64 {
    num_prompts as f64 * avg_chunk_price
}

/// Sum of prices of the chunks actually used.
pub fn chunk_cost(decisions: &[Decision]) -> f64 {
    decisions.iter().filter_map(Decision::selected).map(|c| c.price).sum()
}

pub fn perf_to_budget(metrics: &RunMetrics) -> Result<f64, MetricsError> {
    if metrics.spent > 0.0 {
        Ok(metrics.nep_times_ar / metrics.spent)
    } else {
        Err(MetricsError::UndefinedRatio)
    }
}

/// Relative change of `value` against the RaaS reference, in percent.
pub fn relative_to_raas(value: f64, raas: f64) -> Option<f64> {
    (raas != 0.0).then(|| (value - raas) / raas * 100.0)
}
