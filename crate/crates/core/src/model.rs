//! Domain types shared by every other module.
//!
//! A stream of [`PromptArrival`]s each carries the retrieval stage's candidate
//! chunks. Every [`Candidate`] has a relevance score in `(0, 1]` and a strictly
//! positive price; the [`Instance`] also declares the global bounds `L <= R/P <= U`
//! the threshold policy relies on. An infinite budget is the open-budget variant.

use std::collections::{BTreeMap, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};

/// Default ceiling for the soft `price / budget <= epsilon` check.
pub const DEFAULT_EPSILON_WARN: f64 = 0.01;

/// Slack allowed when checking offline assignments against the budget, so
/// that decimal prices summed in floating point are not spuriously rejected.
pub const FEASIBILITY_TOL: f64 = 1e-9;

/// Spending limit. `Budget::Infinite` is a first-class value, not a sentinel.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub enum Budget {
    Finite(f64),
    Infinite,
}

impl Budget {
    pub fn is_finite(self) -> bool {
        matches!(self, Budget::Finite(_))
    }

    /// `f64` view; `INFINITY` for the open budget.
    pub fn as_f64(self) -> f64 {
        match self {
            Budget::Finite(b) => b,
            Budget::Infinite => f64::INFINITY,
        }
    }

    /// Maps `+inf` to [`Budget::Infinite`], anything else to `Finite`.
    pub fn from_f64(value: f64) -> Self {
        if value == f64::INFINITY {
            Budget::Infinite
        } else {
            Budget::Finite(value)
        }
    }

    /// True when `spent + price` stays within this budget.
    pub fn admits(self, spent: f64, price: f64) -> bool {
        match self {
            Budget::Finite(b) => spent + price <= b,
            Budget::Infinite => true,
        }
    }

    /// Fraction of the budget consumed, clamped to `[0, 1]`. Pinned to 0 for
    /// the open budget and to 1 for a zero budget.
    pub fn fraction_used(self, spent: f64) -> f64 {
        match self {
            Budget::Infinite => 0.0,
            Budget::Finite(b) if b <= 0.0 => 1.0,
            Budget::Finite(b) => (spent / b).clamp(0.0, 1.0),
        }
    }

    pub fn remaining(self, spent: f64) -> f64 {
        match self {
            Budget::Finite(b) => (b - spent).max(0.0),
            Budget::Infinite => f64::INFINITY,
        }
    }
}

impl fmt::Display for Budget {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Budget::Finite(b) => write!(f, "{b}"),
            Budget::Infinite => f.write_str("inf"),
        }
    }
}

/// One (chunk, prompt) pairing produced by retrieval.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub chunk_id: String,
    pub source_id: String,
    pub relevance: f64,
    pub price: f64,
}

impl Candidate {
    pub fn new(
        chunk_id: impl Into<String>,
        source_id: impl Into<String>,
        relevance: f64,
        price: f64,
    ) -> Self {
        Self {
            chunk_id: chunk_id.into(),
            source_id: source_id.into(),
            relevance,
            price,
        }
    }

    /// Relevance per unit of currency.
    pub fn ratio(&self) -> f64 {
        self.relevance / self.price
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptArrival {
    pub prompt_id: String,
    pub candidates: Vec<Candidate>,
}

impl PromptArrival {
    pub fn new(prompt_id: impl Into<String>, candidates: Vec<Candidate>) -> Self {
        Self {
            prompt_id: prompt_id.into(),
            candidates,
        }
    }
}

/// A full experiment input.
#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    pub prompts: Vec<PromptArrival>,
    pub budget: Budget,
    pub ratio_lower: f64,
    pub ratio_upper: f64,
}

impl Instance {
    pub fn new(prompts: Vec<PromptArrival>, budget: Budget, ratio_lower: f64, ratio_upper: f64) -> Self {
        Self {
            prompts,
            budget,
            ratio_lower,
            ratio_upper,
        }
    }

    /// Builds an instance whose `L`/`U` are the tightest bounds over its
    /// candidates. Returns `None` when there are no candidates at all.
    pub fn with_tight_bounds(prompts: Vec<PromptArrival>, budget: Budget) -> Option<Self> {
        let (lo, hi) = tight_ratio_bounds(&prompts)?;
        Some(Self::new(prompts, budget, lo, hi))
    }

    pub fn with_budget(&self, budget: Budget) -> Self {
        Self {
            budget,
            ..self.clone()
        }
    }

    pub fn candidate_count(&self) -> usize {
        self.prompts.iter().map(|p| p.candidates.len()).sum()
    }

    pub fn candidates(&self) -> impl Iterator<Item = &Candidate> {
        self.prompts.iter().flat_map(|p| p.candidates.iter())
    }

    pub fn is_valid(&self) -> bool {
        validate_instance(self).iter().all(|v| v.severity == Severity::Warning)
    }
}

/// Minimum and maximum relevance/price ratio over all candidates.
pub fn tight_ratio_bounds(prompts: &[PromptArrival]) -> Option<(f64, f64)> {
    let mut ratios = prompts.iter().flat_map(|p| p.candidates.iter()).map(Candidate::ratio);
    let first = ratios.next()?;
    Some(ratios.fold((first, first), |(lo, hi), r| (lo.min(r), hi.max(r))))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Outcome {
    Enriched { candidate: Candidate },
    Passthrough,
}

/// Irrevocable per-prompt outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Decision {
    pub prompt_id: String,
    pub outcome: Outcome,
    /// Budget fraction in use when the prompt arrived.
    pub z_at_decision: f64,
}

impl Decision {
    pub fn selected(&self) -> Option<&Candidate> {
        match &self.outcome {
            Outcome::Enriched { candidate } => Some(candidate),
            Outcome::Passthrough => None,
        }
    }

    pub fn is_enriched(&self) -> bool {
        self.selected().is_some()
    }
}

/// Offline solution entries, keyed by prompt id.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Assignment {
    pub selections: BTreeMap<String, Candidate>,
}

impl Assignment {
    pub fn spent(&self) -> f64 {
        self.selections.values().map(|c| c.price).sum()
    }

    pub fn objective(&self) -> f64 {
        self.selections.values().map(|c| c.relevance).sum()
    }

    /// Checks the one-per-prompt and budget constraints against `instance`.
    /// Every selected candidate must also appear in its prompt's list.
    pub fn is_feasible(&self, instance: &Instance) -> bool {
        let by_id: BTreeMap<&str, &PromptArrival> =
            instance.prompts.iter().map(|p| (p.prompt_id.as_str(), p)).collect();
        let members_ok = self.selections.iter().all(|(pid, cand)| {
            by_id
                .get(pid.as_str())
                .is_some_and(|p| p.candidates.iter().any(|c| c == cand))
        });
        members_ok && self.spent() <= instance.budget.as_f64() + FEASIBILITY_TOL
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Severity {
    Error,
    Warning,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub severity: Severity,
    pub message: String,
}

impl Violation {
    fn error(message: String) -> Self {
        Self {
            severity: Severity::Error,
            message,
        }
    }

    fn warning(message: String) -> Self {
        Self {
            severity: Severity::Warning,
            message,
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.severity {
            Severity::Error => write!(f, "error: {}", self.message),
            Severity::Warning => write!(f, "warning: {}", self.message),
        }
    }
}

/// Reports every violated invariant, plus soft warnings for candidates whose
/// `price / budget` exceeds [`DEFAULT_EPSILON_WARN`]. Empty means valid.
pub fn validate_instance(instance: &Instance) -> Vec<Violation> {
    validate_instance_with(instance, DEFAULT_EPSILON_WARN)
}

pub fn validate_instance_with(instance: &Instance, epsilon_warn: f64) -> Vec<Violation> {
    let mut out = Vec::new();
    let (lo, hi) = (instance.ratio_lower, instance.ratio_upper);
    if !(lo > 0.0 && lo.is_finite()) {
        out.push(Violation::error(format!("ratio_lower must be > 0 and finite, got {lo}")));
    }
    if !(hi >= lo && hi.is_finite()) {
        out.push(Violation::error(format!(
            "ratio_upper must be finite and >= ratio_lower, got {hi} < {lo}"
        )));
    }
    if let Budget::Finite(b) = instance.budget {
        if !(b >= 0.0) {
            out.push(Violation::error(format!("budget must be >= 0, got {b}")));
        }
    }

    let mut prompt_ids = HashSet::new();
    for prompt in &instance.prompts {
        if !prompt_ids.insert(prompt.prompt_id.as_str()) {
            out.push(Violation::error(format!("duplicate prompt_id {}", prompt.prompt_id)));
        }
        let mut chunk_ids = HashSet::new();
        for cand in &prompt.candidates {
            let at = format!("prompt {} chunk {}", prompt.prompt_id, cand.chunk_id);
            if !chunk_ids.insert(cand.chunk_id.as_str()) {
                out.push(Violation::error(format!("{at}: duplicate chunk_id within prompt")));
            }
            if !(cand.relevance > 0.0 && cand.relevance <= 1.0) {
                out.push(Violation::error(format!(
                    "{at}: relevance must be in (0, 1], got {}",
                    cand.relevance
                )));
            }
            if !(cand.price > 0.0 && cand.price.is_finite()) {
                out.push(Violation::error(format!("{at}: price must be > 0, got {}", cand.price)));
                continue;
            }
            let ratio = cand.ratio();
            if ratio < lo || ratio > hi {
                out.push(Violation::error(format!(
                    "{at}: relevance/price ratio {ratio} outside [{lo}, {hi}]"
                )));
            }
            if let Budget::Finite(b) = instance.budget {
                if b > 0.0 && cand.price / b > epsilon_warn {
                    out.push(Violation::warning(format!(
                        "{at}: price/budget {} exceeds {epsilon_warn}",
                        cand.price / b
                    )));
                }
            }
        }
    }
    out
}

pub fn errors_only(violations: &[Violation]) -> Vec<&Violation> {
    violations.iter().filter(|v| v.severity == Severity::Error).collect()
}
