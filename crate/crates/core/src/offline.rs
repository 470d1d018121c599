//! Offline optimum: the best assignment when the whole stream is known.
//!
//! This is a multiple-choice knapsack (one group per prompt, at most one chunk
//! per group). Two exact solvers are provided: exhaustive enumeration for tiny
//! instances and a dynamic program over integer price units for instances
//! whose prices sit on a fixed grid. Among optimal assignments both prefer
//! the one that spends least.

use thiserror::Error;

use crate::model::{Assignment, Budget, Candidate, Decision, Instance, Outcome, FEASIBILITY_TOL};
use crate::selectors::most_relevant;

/// Largest `prod_i (|candidates_i| + 1)` the enumerator accepts.
pub const BRUTEFORCE_CAP: f64 = 1e7;
/// Largest number of capacity states per prompt row in the DP.
pub const DP_STATE_CAP: u64 = 10_000_000;
pub const DEFAULT_QUANTUM: f64 = 0.01;

const QUANTIZE_TOL: f64 = 1e-9;
/// Objectives closer than this are treated as tied.
const OBJECTIVE_TIE: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OfflineError {
    #[error("instance too large for enumeration: {combinations:.3e} combinations exceeds {cap:.0e}")]
    TooLarge { combinations: f64, cap: f64 },
    #[error("price {price} is not a multiple of quantum {quantum}")]
    Quantization { price: f64, quantum: f64 },
    #[error("quantum must be positive and finite, got {0}")]
    InvalidQuantum(f64),
    #[error("{states} capacity states exceed the limit of {DP_STATE_CAP}")]
    TooManyStates { states: u64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct OfflineSolution {
    pub assignment: Assignment,
    /// Sum of selected relevances.
    pub objective: f64,
    pub spent: f64,
}

impl OfflineSolution {
    fn from_picks(instance: &Instance, picks: &[Option<usize>]) -> Self {
        let mut assignment = Assignment::default();
        for (prompt, pick) in instance.prompts.iter().zip(picks) {
            if let Some(j) = pick {
                assignment
                    .selections
                    .insert(prompt.prompt_id.clone(), prompt.candidates[*j].clone());
            }
        }
        let objective = assignment.objective();
        let spent = assignment.spent();
        Self {
            assignment,
            objective,
            spent,
        }
    }

    /// The solution replayed as a decision log in stream order, so the same
    /// metrics code applies to it.
    pub fn to_decisions(&self, instance: &Instance) -> Vec<Decision> {
        let mut spent = 0.0;
        instance
            .prompts
            .iter()
            .map(|p| {
                let z = instance.budget.fraction_used(spent);
                let outcome = match self.assignment.selections.get(&p.prompt_id) {
                    Some(c) => {
                        spent += c.price;
                        Outcome::Enriched { candidate: c.clone() }
                    }
                    None => Outcome::Passthrough,
                };
                Decision {
                    prompt_id: p.prompt_id.clone(),
                    outcome,
                    z_at_decision: z,
                }
            })
            .collect()
    }
}

fn unconstrained(instance: &Instance) -> OfflineSolution {
    let picks: Vec<Option<usize>> = instance
        .prompts
        .iter()
        .map(|p| {
            most_relevant(p.candidates.iter())
                .map(|best| p.candidates.iter().position(|c| std::ptr::eq(c, best)).unwrap())
        })
        .collect();
    OfflineSolution::from_picks(instance, &picks)
}

fn improves(obj: f64, spent: f64, best_obj: f64, best_spent: f64) -> bool {
    obj > best_obj + OBJECTIVE_TIE || (obj >= best_obj - OBJECTIVE_TIE && spent < best_spent - OBJECTIVE_TIE)
}

/// Exhaustive search over every feasible combination.
///
/// Options per prompt are visited as "skip" first, then candidates in list
/// order; the first optimum found under (max objective, min spent) wins.
pub fn solve_bruteforce(instance: &Instance) -> Result<OfflineSolution, OfflineError> {
    let combinations: f64 = instance
        .prompts
        .iter()
        .map(|p| (p.candidates.len() + 1) as f64)
        .product();
    if combinations > BRUTEFORCE_CAP {
        return Err(OfflineError::TooLarge {
            combinations,
            cap: BRUTEFORCE_CAP,
        });
    }
    let Budget::Finite(budget) = instance.budget else {
        return Ok(unconstrained(instance));
    };

    struct Search<'a> {
        groups: Vec<&'a [Candidate]>,
        limit: f64,
        current: Vec<Option<usize>>,
        best: Vec<Option<usize>>,
        best_obj: f64,
        best_spent: f64,
    }

    impl Search<'_> {
        fn visit(&mut self, depth: usize, obj: f64, spent: f64) {
            if depth == self.groups.len() {
                if improves(obj, spent, self.best_obj, self.best_spent) {
                    self.best_obj = obj;
                    self.best_spent = spent;
                    self.best.clone_from(&self.current);
                }
                return;
            }
            self.current[depth] = None;
            self.visit(depth + 1, obj, spent);
            for j in 0..self.groups[depth].len() {
                let c = &self.groups[depth][j];
                if spent + c.price <= self.limit {
                    self.current[depth] = Some(j);
                    self.visit(depth + 1, obj + c.relevance, spent + c.price);
                }
            }
            self.current[depth] = None;
        }
    }

    let n = instance.prompts.len();
    let mut search = Search {
        groups: instance.prompts.iter().map(|p| p.candidates.as_slice()).collect(),
        limit: budget + FEASIBILITY_TOL,
        current: vec![None; n],
        best: vec![None; n],
        best_obj: 0.0,
        best_spent: 0.0,
    };
    search.visit(0, 0.0, 0.0);
    Ok(OfflineSolution::from_picks(instance, &search.best))
}

fn to_units(value: f64, quantum: f64) -> Result<u64, OfflineError> {
    let scaled = value / quantum;
    let rounded = scaled.round();
    if (scaled - rounded).abs() > QUANTIZE_TOL || rounded < 0.0 {
        return Err(OfflineError::Quantization { price: value, quantum });
    }
    Ok(rounded as u64)
}

/// Exact dynamic program over integer multiples of `quantum`.
///
/// Every price must be a multiple of `quantum` (within 1e-9 units). The
/// budget is floored to whole units, which is exact for the constraint since
/// any feasible spend is itself a whole number of units.
pub fn solve_dp(instance: &Instance, quantum: f64) -> Result<OfflineSolution, OfflineError> {
    if !(quantum > 0.0 && quantum.is_finite()) {
        return Err(OfflineError::InvalidQuantum(quantum));
    }
    let weights: Vec<Vec<u64>> = instance
        .prompts
        .iter()
        .map(|p| p.candidates.iter().map(|c| to_units(c.price, quantum)).collect())
        .collect::<Result<_, _>>()?;
    let Budget::Finite(budget) = instance.budget else {
        return Ok(unconstrained(instance));
    };

    let max_useful: u64 = weights.iter().map(|w| w.iter().copied().max().unwrap_or(0)).sum();
    let budget_units = (budget / quantum + QUANTIZE_TOL).floor().max(0.0);
    let capacity = budget_units.min(max_useful as f64) as u64;
    if capacity > DP_STATE_CAP {
        return Err(OfflineError::TooManyStates { states: capacity });
    }
    let capacity = capacity as usize;

    // best[c]: max relevance with exactly c units spent; choice[i][c]: option taken at row i.
    let n = instance.prompts.len();
    let mut best = vec![f64::NEG_INFINITY; capacity + 1];
    best[0] = 0.0;
    let mut choice = vec![0u32; n * (capacity + 1)];
    let mut next = best.clone();
    for (i, prompt) in instance.prompts.iter().enumerate() {
        next.copy_from_slice(&best);
        let row = &mut choice[i * (capacity + 1)..(i + 1) * (capacity + 1)];
        for (j, cand) in prompt.candidates.iter().enumerate() {
            let w = weights[i][j] as usize;
            if w > capacity {
                continue;
            }
            for c in w..=capacity {
                let from = best[c - w];
                if from == f64::NEG_INFINITY {
                    continue;
                }
                let value = from + cand.relevance;
                if value > next[c] {
                    next[c] = value;
                    row[c] = j as u32 + 1;
                }
            }
        }
        std::mem::swap(&mut best, &mut next);
    }

    let top = best.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut c = best
        .iter()
        .position(|&v| v >= top - OBJECTIVE_TIE)
        .expect("zero spend is always reachable");
    let mut picks = vec![None; n];
    for i in (0..n).rev() {
        let option = choice[i * (capacity + 1) + c];
        if option > 0 {
            let j = option as usize - 1;
            picks[i] = Some(j);
            c -= weights[i][j] as usize;
        }
    }
    Ok(OfflineSolution::from_picks(instance, &picks))
}
