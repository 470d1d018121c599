//! Online selection policies.
//!
//! Each step consumes one [`PromptArrival`] and appends one irrevocable
//! [`Decision`] to the [`SelectorState`]. The threshold policy admits a
//! candidate when its relevance/price ratio clears
//! `psi(z) = (U e / L)^z * (L / e)`, where `z` is the budget fraction already
//! spent when the prompt arrives, then takes the most relevant admitted chunk.
//!
//! All finite-budget policies refuse a candidate whose price would overdraw
//! the remaining budget. The open-budget policy ignores the budget and only
//! accumulates spend for billing.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{Budget, Candidate, Decision, Outcome, PromptArrival};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SelectorError {
    #[error("budget fraction z = {0} outside [0, 1]")]
    FractionOutOfDomain(f64),
    #[error("invalid ratio bounds: need 0 < L <= U < inf, got L = {lower}, U = {upper}")]
    InvalidBounds { lower: f64, upper: f64 },
    #[error("unknown policy {0:?}")]
    UnknownPolicy(String),
    #[error("policy {0} needs the stream length up front")]
    MissingStreamLength(PolicyKind),
}

/// The known bounds `L <= R/P <= U`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdParams {
    pub ratio_lower: f64,
    pub ratio_upper: f64,
}

impl ThresholdParams {
    pub fn new(ratio_lower: f64, ratio_upper: f64) -> Result<Self, SelectorError> {
        let ok = ratio_lower > 0.0 && ratio_upper >= ratio_lower && ratio_upper.is_finite();
        if !ok {
            return Err(SelectorError::InvalidBounds {
                lower: ratio_lower,
                upper: ratio_upper,
            });
        }
        Ok(Self {
            ratio_lower,
            ratio_upper,
        })
    }

    /// Breakpoint `1 / (1 + ln(U/L))` below which the threshold stays at or under `L`.
    pub fn low_regime_end(&self) -> f64 {
        1.0 / (1.0 + (self.ratio_upper / self.ratio_lower).ln())
    }
}

/// Admission threshold at budget fraction `z`.
///
/// Evaluated as `L * exp(z * (1 + ln(U/L)) - 1)`, which is algebraically
/// `(U e / L)^z * (L / e)` and hits `L/e`, `L` and `U` at `z = 0`, the
/// low-regime breakpoint, and `z = 1` to within a few ulps.
pub fn psi(z: f64, params: &ThresholdParams) -> Result<f64, SelectorError> {
    if !(0.0..=1.0).contains(&z) {
        return Err(SelectorError::FractionOutOfDomain(z));
    }
    Ok(psi_unchecked(z, params))
}

fn psi_unchecked(z: f64, params: &ThresholdParams) -> f64 {
    let growth = 1.0 + (params.ratio_upper / params.ratio_lower).ln();
    params.ratio_lower * (z * growth - 1.0).exp()
}

/// Running budget and decision log. Single writer.
#[derive(Debug, Clone, PartialEq)]
pub struct SelectorState {
    budget: Budget,
    spent: f64,
    decisions: Vec<Decision>,
}

impl SelectorState {
    pub fn new(budget: Budget) -> Self {
        Self {
            budget,
            spent: 0.0,
            decisions: Vec::new(),
        }
    }

    /// State that has already consumed `spent` outside the log.
    pub fn with_spent(budget: Budget, spent: f64) -> Self {
        Self {
            budget,
            spent,
            decisions: Vec::new(),
        }
    }

    pub fn budget(&self) -> Budget {
        self.budget
    }

    pub fn spent(&self) -> f64 {
        self.spent
    }

    pub fn remaining(&self) -> f64 {
        self.budget.remaining(self.spent)
    }

    /// Fraction of the budget used so far; 0 for the open budget.
    pub fn z(&self) -> f64 {
        self.budget.fraction_used(self.spent)
    }

    pub fn decisions(&self) -> &[Decision] {
        &self.decisions
    }

    pub fn into_decisions(self) -> Vec<Decision> {
        self.decisions
    }

    fn affordable(&self, cand: &Candidate) -> bool {
        self.budget.admits(self.spent, cand.price)
    }

    fn commit(&mut self, arrival: &PromptArrival, z: f64, pick: Option<&Candidate>) -> Decision {
        let outcome = match pick {
            Some(c) => {
                self.spent += c.price;
                Outcome::Enriched { candidate: c.clone() }
            }
            None => Outcome::Passthrough,
        };
        let decision = Decision {
            prompt_id: arrival.prompt_id.clone(),
            outcome,
            z_at_decision: z,
        };
        self.decisions.push(decision.clone());
        decision
    }
}

/// Highest relevance first, then lowest price, then smallest chunk id.
fn preference(a: &Candidate, b: &Candidate) -> Ordering {
    a.relevance
        .total_cmp(&b.relevance)
        .then_with(|| b.price.total_cmp(&a.price))
        .then_with(|| b.chunk_id.cmp(&a.chunk_id))
}

pub(crate) fn most_relevant<'a>(cands: impl Iterator<Item = &'a Candidate>) -> Option<&'a Candidate> {
    cands.max_by(|a, b| preference(a, b))
}

pub fn ucosa_step(state: &mut SelectorState, arrival: &PromptArrival, params: &ThresholdParams) -> Decision {
    let z = state.z();
    let threshold = psi_unchecked(z, params);
    let pick = most_relevant(
        arrival
            .candidates
            .iter()
            .filter(|c| c.ratio() >= threshold && state.affordable(c)),
    );
    state.commit(arrival, z, pick)
}

pub fn relevance_greedy_step(state: &mut SelectorState, arrival: &PromptArrival) -> Decision {
    let z = state.z();
    let pick = most_relevant(arrival.candidates.iter().filter(|c| state.affordable(c)));
    state.commit(arrival, z, pick)
}

/// Uniform pick among affordable candidates.
pub fn random_step<R: Rng + ?Sized>(state: &mut SelectorState, arrival: &PromptArrival, rng: &mut R) -> Decision {
    let z = state.z();
    let affordable: Vec<&Candidate> = arrival.candidates.iter().filter(|c| state.affordable(c)).collect();
    let pick = match affordable.len() {
        0 => None,
        1 => Some(affordable[0]),
        n => Some(affordable[rng.random_range(0..n)]),
    };
    state.commit(arrival, z, pick)
}

/// Equal per-prompt allowance `B / total_prompts`, no rollover.
pub fn budget_balance_step(state: &mut SelectorState, arrival: &PromptArrival, total_prompts: usize) -> Decision {
    let z = state.z();
    let allowance = match state.budget() {
        Budget::Infinite => f64::INFINITY,
        Budget::Finite(_) if total_prompts == 0 => 0.0,
        Budget::Finite(b) => b / total_prompts as f64,
    };
    let pick = most_relevant(
        arrival
            .candidates
            .iter()
            .filter(|c| c.price <= allowance && state.affordable(c)),
    );
    state.commit(arrival, z, pick)
}

/// Most relevant candidate regardless of price; spend accrues for billing.
pub fn open_budget_step(state: &mut SelectorState, arrival: &PromptArrival) -> Decision {
    let z = state.z();
    let pick = most_relevant(arrival.candidates.iter());
    state.commit(arrival, z, pick)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PolicyKind {
    Ucosa,
    Greedy,
    Random,
    Balance,
    Open,
}

impl PolicyKind {
    pub const ALL: [PolicyKind; 5] = [
        PolicyKind::Ucosa,
        PolicyKind::Greedy,
        PolicyKind::Random,
        PolicyKind::Balance,
        PolicyKind::Open,
    ];

    pub fn name(self) -> &'static str {
        match self {
            PolicyKind::Ucosa => "ucosa",
            PolicyKind::Greedy => "greedy",
            PolicyKind::Random => "random",
            PolicyKind::Balance => "balance",
            PolicyKind::Open => "open",
        }
    }

    /// Whether the policy honours a finite budget.
    pub fn respects_budget(self) -> bool {
        self != PolicyKind::Open
    }
}

impl fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PolicyKind {
    type Err = SelectorError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        PolicyKind::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| SelectorError::UnknownPolicy(s.to_string()))
    }
}

/// A policy bound to its state: the uniform online interface the harness and
/// the service drive.
#[derive(Debug, Clone)]
pub struct Selector {
    kind: PolicyKind,
    state: SelectorState,
    params: ThresholdParams,
    total_prompts: Option<usize>,
    rng: ChaCha8Rng,
}

impl Selector {
    pub fn new(
        kind: PolicyKind,
        budget: Budget,
        params: ThresholdParams,
        total_prompts: Option<usize>,
        seed: u64,
    ) -> Result<Self, SelectorError> {
        if kind == PolicyKind::Balance && total_prompts.is_none() {
            return Err(SelectorError::MissingStreamLength(kind));
        }
        Ok(Self {
            kind,
            state: SelectorState::new(budget),
            params,
            total_prompts,
            rng: ChaCha8Rng::seed_from_u64(seed),
        })
    }

    pub fn kind(&self) -> PolicyKind {
        self.kind
    }

    pub fn params(&self) -> &ThresholdParams {
        &self.params
    }

    pub fn state(&self) -> &SelectorState {
        &self.state
    }

    pub fn into_state(self) -> SelectorState {
        self.state
    }

    /// Threshold the next arrival will face (threshold policy only).
    pub fn current_threshold(&self) -> Option<f64> {
        (self.kind == PolicyKind::Ucosa).then(|| psi_unchecked(self.state.z(), &self.params))
    }

    pub fn step(&mut self, arrival: &PromptArrival) -> Decision {
        match self.kind {
            PolicyKind::Ucosa => ucosa_step(&mut self.state, arrival, &self.params),
            PolicyKind::Greedy => relevance_greedy_step(&mut self.state, arrival),
            PolicyKind::Random => random_step(&mut self.state, arrival, &mut self.rng),
            PolicyKind::Balance => {
                budget_balance_step(&mut self.state, arrival, self.total_prompts.unwrap_or(0))
            }
            PolicyKind::Open => open_budget_step(&mut self.state, arrival),
        }
    }
}
