//! Simulation harness: drives policies over shuffled prompt streams and
//! aggregates per-run metrics.
//!
//! Repetition `r` of an experiment with master seed `s` uses permutation seed
//! `mix64(s ^ r)`, where `mix64` is the SplitMix64 finaliser. The permutation
//! is a Fisher-Yates shuffle of `0..n` driven by ChaCha8 seeded with that
//! value; the random baseline draws from a second ChaCha8 stream seeded with
//! `mix64(permutation_seed ^ RANDOM_POLICY_SALT)`. The offline optimum is
//! permutation-invariant and is solved once per budget point on the stream
//! as given.

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::io::results::{Repetition, ResultRow};
use crate::metrics::{compute_metrics, RunMetrics};
use crate::model::{Budget, Decision, Instance};
use crate::offline::{solve_dp, OfflineError, DEFAULT_QUANTUM};
use crate::selectors::{PolicyKind, Selector, SelectorError, ThresholdParams};

pub const RANDOM_POLICY_SALT: u64 = 0x5EED_0F_4A4D_0115;
pub const DEFAULT_REPETITIONS: usize = 100;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HarnessError {
    #[error("unknown policy {0:?}")]
    UnknownPolicy(String),
    #[error("repetitions must be >= 1")]
    NoRepetitions,
    #[error("permutation is not a reordering of 0..{0}")]
    InvalidPermutation(usize),
    #[error(transparent)]
    Selector(#[from] SelectorError),
    #[error("offline solver: {0}")]
    Offline(#[from] OfflineError),
}

/// SplitMix64 finaliser.
pub fn mix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

pub fn permutation_seed(master_seed: u64, repetition: usize) -> u64 {
    mix64(master_seed ^ repetition as u64)
}

/// Seed for the random policy's generator, kept apart from the shuffle stream.
pub fn selector_seed(seed: u64) -> u64 {
    mix64(seed ^ RANDOM_POLICY_SALT)
}

pub fn permutation(len: usize, seed: u64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..len).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    order
}

/// A policy name as accepted by experiment plans: an online policy or the
/// offline optimum.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PlanPolicy {
    Online(PolicyKind),
    Offline,
}

impl PlanPolicy {
    pub fn name(self) -> &'static str {
        match self {
            PlanPolicy::Online(kind) => kind.name(),
            PlanPolicy::Offline => "offline",
        }
    }
}

impl fmt::Display for PlanPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PlanPolicy {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "offline" {
            return Ok(PlanPolicy::Offline);
        }
        s.parse()
            .map(PlanPolicy::Online)
            .map_err(|_| HarnessError::UnknownPolicy(s.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub policy: PlanPolicy,
    pub repetition: usize,
    pub permutation_seed: u64,
    pub budget: Budget,
    pub decisions: Vec<Decision>,
    pub metrics: RunMetrics,
}

impl RunRecord {
    pub fn to_row(&self) -> ResultRow {
        metrics_row(self.policy.name(), Repetition::Index(self.repetition), self.budget, &self.metrics)
    }
}

fn metrics_row(policy: &str, repetition: Repetition, budget: Budget, m: &RunMetrics) -> ResultRow {
    ResultRow {
        policy: policy.to_string(),
        repetition,
        budget,
        nep: m.nep as f64,
        ar: m.ar,
        nep_times_ar: m.nep_times_ar,
        total_relevance: m.total_relevance,
        spent: m.spent,
        perf_to_budget: m.perf_to_budget,
    }
}

fn params_of(instance: &Instance) -> Result<ThresholdParams, SelectorError> {
    ThresholdParams::new(instance.ratio_lower, instance.ratio_upper)
}

/// Feeds the prompts to `policy` one at a time in `order`.
///
/// `seed` drives the random baseline and is recorded as the permutation seed.
pub fn run_stream(
    instance: &Instance,
    policy: PolicyKind,
    order: &[usize],
    seed: u64,
) -> Result<RunRecord, HarnessError> {
    let n = instance.prompts.len();
    let mut seen = vec![false; n];
    let valid = order.len() == n && order.iter().all(|&i| i < n && !std::mem::replace(&mut seen[i], true));
    if !valid {
        return Err(HarnessError::InvalidPermutation(n));
    }
    let mut selector = Selector::new(
        policy,
        instance.budget,
        params_of(instance)?,
        Some(n),
        selector_seed(seed),
    )?;
    for &i in order {
        selector.step(&instance.prompts[i]);
    }
    let decisions = selector.into_state().into_decisions();
    let metrics = compute_metrics(&decisions);
    Ok(RunRecord {
        policy: PlanPolicy::Online(policy),
        repetition: 0,
        permutation_seed: seed,
        budget: instance.budget,
        decisions,
        metrics,
    })
}

/// Offline optimum as a run record (stream order, repetition 0).
pub fn run_offline(instance: &Instance, quantum: f64) -> Result<RunRecord, HarnessError> {
    let solution = solve_dp(instance, quantum)?;
    let decisions = solution.to_decisions(instance);
    let metrics = compute_metrics(&decisions);
    Ok(RunRecord {
        policy: PlanPolicy::Offline,
        repetition: 0,
        permutation_seed: 0,
        budget: instance.budget,
        decisions,
        metrics,
    })
}

/// Chunk spend of the open-budget policy on the stream as given.
pub fn open_budget_spend(instance: &Instance) -> f64 {
    let order: Vec<usize> = (0..instance.prompts.len()).collect();
    run_stream(&instance.with_budget(Budget::Infinite), PolicyKind::Open, &order, 0)
        .map(|r| r.metrics.spent)
        .unwrap_or(0.0)
}

/// Budget fractions of the default sweep: doubling from 1% up to 200% of the
/// open-budget spend, closed at 200%.
pub fn default_sweep_fractions() -> Vec<f64> {
    let mut out = Vec::new();
    let mut f = 0.01;
    while f < 2.0 {
        out.push(f);
        f *= 2.0;
    }
    out.push(2.0);
    out
}

pub fn default_budget_grid(instance: &Instance) -> Vec<Budget> {
    let spend = open_budget_spend(instance);
    default_sweep_fractions()
        .into_iter()
        .map(|f| Budget::Finite(spend * f))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentPlan {
    pub policies: Vec<PlanPolicy>,
    pub repetitions: usize,
    pub master_seed: u64,
    /// `None` runs at the instance's own budget.
    pub budget_sweep: Option<Vec<Budget>>,
    /// Price grid for the offline solver.
    pub quantum: f64,
}

impl ExperimentPlan {
    pub fn new(policies: Vec<PlanPolicy>) -> Self {
        Self {
            policies,
            repetitions: DEFAULT_REPETITIONS,
            master_seed: 0,
            budget_sweep: None,
            quantum: DEFAULT_QUANTUM,
        }
    }
}

/// Per-metric values of an aggregate; undefined metrics are averaged over
/// the runs where they are defined and are `None` if none are.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub nep: f64,
    pub ar: Option<f64>,
    pub nep_times_ar: f64,
    pub total_relevance: f64,
    pub spent: f64,
    pub perf_to_budget: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Aggregate {
    pub policy: PlanPolicy,
    pub budget: Budget,
    pub runs: usize,
    pub mean: MetricSummary,
    /// Sample standard deviation (0 for a single run).
    pub stddev: MetricSummary,
}

impl Aggregate {
    /// Standard error of the mean `NEP x AR`.
    pub fn stderr_nep_times_ar(&self) -> f64 {
        self.stddev.nep_times_ar / (self.runs as f64).sqrt()
    }

    pub fn to_row(&self) -> ResultRow {
        let m = &self.mean;
        ResultRow {
            policy: self.policy.name().to_string(),
            repetition: Repetition::Mean,
            budget: self.budget,
            nep: m.nep,
            ar: m.ar,
            nep_times_ar: m.nep_times_ar,
            total_relevance: m.total_relevance,
            spent: m.spent,
            perf_to_budget: m.perf_to_budget,
        }
    }
}

fn mean_std(values: &[f64]) -> Option<(f64, f64)> {
    if values.is_empty() {
        return None;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = if values.len() > 1 {
        values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    Some((mean, var.sqrt()))
}

/// Summarises records sharing one policy and budget.
pub fn summarize(records: &[&RunRecord]) -> Option<Aggregate> {
    let first = records.first()?;
    let column = |f: &dyn Fn(&RunMetrics) -> Option<f64>| -> Option<(f64, f64)> {
        let values: Vec<f64> = records.iter().filter_map(|r| f(&r.metrics)).collect();
        mean_std(&values)
    };
    let nep = column(&|m| Some(m.nep as f64)).expect("non-empty");
    let ar = column(&|m| m.ar);
    let nxa = column(&|m| Some(m.nep_times_ar)).expect("non-empty");
    let total = column(&|m| Some(m.total_relevance)).expect("non-empty");
    let spent = column(&|m| Some(m.spent)).expect("non-empty");
    let ptb = column(&|m| m.perf_to_budget);
    Some(Aggregate {
        policy: first.policy,
        budget: first.budget,
        runs: records.len(),
        mean: MetricSummary {
            nep: nep.0,
            ar: ar.map(|v| v.0),
            nep_times_ar: nxa.0,
            total_relevance: total.0,
            spent: spent.0,
            perf_to_budget: ptb.map(|v| v.0),
        },
        stddev: MetricSummary {
            nep: nep.1,
            ar: ar.map(|v| v.1),
            nep_times_ar: nxa.1,
            total_relevance: total.1,
            spent: spent.1,
            perf_to_budget: ptb.map(|v| v.1),
        },
    })
}

/// Groups records by (policy, budget) in first-seen order and summarises each group.
pub fn aggregate(records: &[RunRecord]) -> Vec<Aggregate> {
    let mut keys: Vec<(PlanPolicy, Budget)> = Vec::new();
    for r in records {
        if !keys.iter().any(|&(p, b)| p == r.policy && b == r.budget) {
            keys.push((r.policy, r.budget));
        }
    }
    keys.into_iter()
        .filter_map(|(p, b)| {
            let group: Vec<&RunRecord> = records.iter().filter(|r| r.policy == p && r.budget == b).collect();
            summarize(&group)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentReport {
    pub records: Vec<RunRecord>,
    pub aggregates: Vec<Aggregate>,
}

impl ExperimentReport {
    pub fn aggregate_for(&self, policy: PlanPolicy, budget: Budget) -> Option<&Aggregate> {
        self.aggregates.iter().find(|a| a.policy == policy && a.budget == budget)
    }

    /// Per-run rows followed by one `mean` row per (policy, budget).
    pub fn rows(&self) -> Vec<ResultRow> {
        self.records
            .iter()
            .map(RunRecord::to_row)
            .chain(self.aggregates.iter().map(Aggregate::to_row))
            .collect()
    }
}

pub fn run_experiment(instance: &Instance, plan: &ExperimentPlan) -> Result<ExperimentReport, HarnessError> {
    if plan.repetitions == 0 {
        return Err(HarnessError::NoRepetitions);
    }
    params_of(instance)?;
    let budgets = plan.budget_sweep.clone().unwrap_or_else(|| vec![instance.budget]);
    let n = instance.prompts.len();
    let mut records = Vec::new();
    for &policy in &plan.policies {
        for &budget in &budgets {
            let at_budget = instance.with_budget(budget);
            match policy {
                PlanPolicy::Offline => records.push(run_offline(&at_budget, plan.quantum)?),
                PlanPolicy::Online(kind) => {
                    let runs: Result<Vec<RunRecord>, HarnessError> = (0..plan.repetitions)
                        .into_par_iter()
                        .map(|rep| {
                            let seed = permutation_seed(plan.master_seed, rep);
                            let mut record = run_stream(&at_budget, kind, &permutation(n, seed), seed)?;
                            record.repetition = rep;
                            Ok(record)
                        })
                        .collect();
                    records.extend(runs?);
                }
            }
        }
    }
    let aggregates = aggregate(&records);
    Ok(ExperimentReport { records, aggregates })
}
