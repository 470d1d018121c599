//! Request and response bodies (JSON), version 1.
//!
//! Amounts that can be unbounded (`budget`, `remaining`) are a number or the
//! string `"inf"`.

use caas_core::io::instance::BudgetField;
use caas_core::metrics::RunMetrics;
use caas_core::{Candidate, Decision};
use serde::{Deserialize, Serialize};

pub const API_VERSION: u32 = 1;

fn default_policy() -> String {
    "ucosa".into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CreateSessionRequest {
    pub budget: BudgetField,
    pub ratio_lower: f64,
    pub ratio_upper: f64,
    #[serde(default = "default_policy")]
    pub policy: String,
    /// Stream length, needed by the `balance` policy only.
    #[serde(default)]
    pub total_prompts: Option<usize>,
    /// Seeds the `random` policy; same derivation as the simulator.
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CreateSessionResponse {
    pub api_version: u32,
    pub session_id: String,
    pub policy: String,
    pub budget: BudgetField,
    pub remaining: BudgetField,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WireCandidate {
    pub chunk_id: String,
    #[serde(default)]
    pub source_id: String,
    pub relevance: f64,
    pub price: f64,
}

impl From<&Candidate> for WireCandidate {
    fn from(c: &Candidate) -> Self {
        Self {
            chunk_id: c.chunk_id.clone(),
            source_id: c.source_id.clone(),
            relevance: c.relevance,
            price: c.price,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SelectRequest {
    pub prompt_id: String,
    #[serde(default)]
    pub candidates: Vec<WireCandidate>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub idempotency_key: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WireOutcome {
    Enriched,
    Passthrough,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectResponse {
    pub prompt_id: String,
    pub outcome: WireOutcome,
    #[serde(default)]
    pub chunk_id: Option<String>,
    #[serde(default)]
    pub relevance: Option<f64>,
    #[serde(default)]
    pub price: Option<f64>,
    /// Budget fraction used before this step.
    pub z_before: f64,
    /// Admission threshold faced by this prompt; `null` for policies without one.
    pub psi_before: Option<f64>,
    pub remaining_after: BudgetField,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireMetrics {
    pub nep: usize,
    pub ar: Option<f64>,
    pub nep_times_ar: f64,
    pub total_relevance: f64,
    pub spent: f64,
    pub perf_to_budget: Option<f64>,
}

impl From<&RunMetrics> for WireMetrics {
    fn from(m: &RunMetrics) -> Self {
        Self {
            nep: m.nep,
            ar: m.ar,
            nep_times_ar: m.nep_times_ar,
            total_relevance: m.total_relevance,
            spent: m.spent,
            perf_to_budget: m.perf_to_budget,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireDecision {
    pub prompt_id: String,
    pub outcome: WireOutcome,
    pub chunk_id: Option<String>,
    pub relevance: Option<f64>,
    pub price: Option<f64>,
    pub z_before: f64,
}

impl From<&Decision> for WireDecision {
    fn from(d: &Decision) -> Self {
        let c = d.selected();
        Self {
            prompt_id: d.prompt_id.clone(),
            outcome: if c.is_some() {
                WireOutcome::Enriched
            } else {
                WireOutcome::Passthrough
            },
            chunk_id: c.map(|c| c.chunk_id.clone()),
            relevance: c.map(|c| c.relevance),
            price: c.map(|c| c.price),
            z_before: d.z_at_decision,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportResponse {
    pub api_version: u32,
    pub session_id: String,
    pub policy: String,
    pub budget: BudgetField,
    pub remaining: BudgetField,
    pub closed: bool,
    pub metrics: WireMetrics,
    /// Arrival order.
    pub decisions: Vec<WireDecision>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CloseResponse {
    pub session_id: String,
    pub closed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: String,
}
