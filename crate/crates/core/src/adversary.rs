//! Lower-bound instance family for online chunk selection.
//!
//! Fix `eta > 0` and let `k` be the largest integer with `(1+eta)^k <= U/L`.
//! Instance `I_0` is `B` unit-price prompts of relevance `L`; `I_{m+1}` is
//! `I_m` followed by `B` more unit-price prompts of relevance `(1+eta)^{m+1} L`.
//! Each prompt carries a single chunk. Drawing `I_m` with probability
//! `p_m = eta / H` for `m < k` and `p_k = (1+eta) / H`, where
//! `H = (k+1) eta + 1`, caps the expected `A/OPT` of any online strategy at
//! `(1+eta) / H`, which tends to `1 / (ln(U/L) + 1)` as `eta -> 0`.

use log::warn;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{Budget, Candidate, Instance, PromptArrival};
use crate::selectors::{PolicyKind, Selector, ThresholdParams};

/// Below this many unit prompts the `price / budget` assumption is badly violated.
pub const SMALL_BUDGET_WARN: u64 = 100;

const SPLIT_TOL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AdversaryError {
    #[error("eta must be > 0, got {0}")]
    NonPositiveEta(f64),
    #[error("need U > L > 0, got L = {lower}, U = {upper}")]
    InvalidBounds { lower: f64, upper: f64 },
    #[error("budget_units must be >= 1")]
    ZeroBudget,
    #[error("tier {tier} outside 0..={k}")]
    TierOutOfRange { tier: usize, k: usize },
    #[error("split has {got} entries, family has {expected} tiers")]
    SplitLength { got: usize, expected: usize },
    #[error("split entries must be >= 0 and sum to at most 1, sum is {0}")]
    InfeasibleSplit(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdversarialFamily {
    pub eta: f64,
    pub k: usize,
    pub budget_units: u64,
    pub ratio_lower: f64,
    pub ratio_upper: f64,
    pub probabilities: Vec<f64>,
}

/// Largest `k` with `(1+eta)^k <= ratio`, robust to rounding at exact powers.
fn top_tier(ratio: f64, eta: f64) -> usize {
    let growth = 1.0 + eta;
    let fits = |k: usize| growth.powi(k as i32) <= ratio * (1.0 + 1e-12);
    let mut k = (ratio.ln() / growth.ln()).floor().max(0.0) as usize;
    while k > 0 && !fits(k) {
        k -= 1;
    }
    while fits(k + 1) {
        k += 1;
    }
    k
}

pub fn build_family(
    ratio_lower: f64,
    ratio_upper: f64,
    eta: f64,
    budget_units: u64,
) -> Result<AdversarialFamily, AdversaryError> {
    if !(eta > 0.0 && eta.is_finite()) {
        return Err(AdversaryError::NonPositiveEta(eta));
    }
    if !(ratio_lower > 0.0 && ratio_upper > ratio_lower && ratio_upper.is_finite()) {
        return Err(AdversaryError::InvalidBounds {
            lower: ratio_lower,
            upper: ratio_upper,
        });
    }
    if budget_units == 0 {
        return Err(AdversaryError::ZeroBudget);
    }
    let k = top_tier(ratio_upper / ratio_lower, eta);
    let h = (k as f64 + 1.0) * eta + 1.0;
    let mut probabilities = vec![eta / h; k + 1];
    probabilities[k] = (1.0 + eta) / h;
    Ok(AdversarialFamily {
        eta,
        k,
        budget_units,
        ratio_lower,
        ratio_upper,
        probabilities,
    })
}

impl AdversarialFamily {
    /// Normaliser `H = (k+1) eta + 1`.
    pub fn h(&self) -> f64 {
        (self.k as f64 + 1.0) * self.eta + 1.0
    }

    /// Best achievable `E[A/OPT]`: `(1+eta) / H`.
    pub fn bound(&self) -> f64 {
        (1.0 + self.eta) / self.h()
    }

    /// The `eta -> 0` limit of [`Self::bound`]: `1 / (ln(U/L) + 1)`.
    pub fn limit_bound(&self) -> f64 {
        1.0 / ((self.ratio_upper / self.ratio_lower).ln() + 1.0)
    }

    pub fn tier_ratio(&self, tier: usize) -> f64 {
        (1.0 + self.eta).powi(tier as i32) * self.ratio_lower
    }

    fn check_tier(&self, tier: usize) -> Result<(), AdversaryError> {
        if tier > self.k {
            return Err(AdversaryError::TierOutOfRange { tier, k: self.k });
        }
        Ok(())
    }

    /// OPT on `I_m`: the whole budget on the top tier present.
    pub fn opt_value(&self, tier: usize) -> Result<f64, AdversaryError> {
        self.check_tier(tier)?;
        Ok(self.budget_units as f64 * self.tier_ratio(tier))
    }

    /// `E[A/OPT]` for a strategy that spends fraction `split[m]` of the budget
    /// on tier `m`. Each tier's contribution collapses to `(1+eta) / H`.
    pub fn expected_ratio(&self, split: &[f64]) -> Result<f64, AdversaryError> {
        if split.len() != self.k + 1 {
            return Err(AdversaryError::SplitLength {
                got: split.len(),
                expected: self.k + 1,
            });
        }
        let total: f64 = split.iter().sum();
        if split.iter().any(|&b| !(b >= 0.0)) || total > 1.0 + SPLIT_TOL {
            return Err(AdversaryError::InfeasibleSplit(total));
        }
        Ok(total * self.bound())
    }

    /// Price and relevance scale that keeps the top tier's relevance within 1.
    /// Ratios, and hence every `A/OPT`, are unaffected.
    pub fn price_scale(&self) -> f64 {
        let top = self.tier_ratio(self.k);
        if top > 1.0 {
            1.0 / top
        } else {
            1.0
        }
    }

    /// Concrete instance `I_m`: `(m+1) * B` single-chunk prompts.
    pub fn materialize(&self, tier: usize) -> Result<Instance, AdversaryError> {
        self.check_tier(tier)?;
        if self.budget_units < SMALL_BUDGET_WARN {
            warn!(
                "budget_units = {} < {SMALL_BUDGET_WARN}: unit prices are a large budget share",
                self.budget_units
            );
        }
        let scale = self.price_scale();
        let mut prompts = Vec::with_capacity((tier + 1) * self.budget_units as usize);
        for t in 0..=tier {
            let relevance = self.tier_ratio(t) * scale;
            for n in 0..self.budget_units {
                prompts.push(PromptArrival::new(
                    format!("t{t}-{n}"),
                    vec![Candidate::new("chunk", "adversary", relevance, scale)],
                ));
            }
        }
        Ok(Instance::new(
            prompts,
            Budget::Finite(self.budget_units as f64 * scale),
            self.ratio_lower,
            self.ratio_upper,
        ))
    }

    /// `A/OPT` of the threshold policy on every tier instance.
    ///
    /// Each `I_m` is a prefix of `I_k` and the policy never looks ahead, so
    /// one pass over `I_k` yields every tier's value at its block boundary.
    /// Arrivals within a block are identical, so after the first passthrough
    /// the state is frozen and the rest of the block is skipped.
    pub fn ucosa_ratios(&self) -> Vec<f64> {
        let params = ThresholdParams {
            ratio_lower: self.ratio_lower,
            ratio_upper: self.ratio_upper,
        };
        let scale = self.price_scale();
        let budget = Budget::Finite(self.budget_units as f64 * scale);
        let mut sel = Selector::new(PolicyKind::Ucosa, budget, params, None, 0).expect("valid policy");
        let mut relevance = 0.0;
        (0..=self.k)
            .map(|tier| {
                let arrival = PromptArrival::new(
                    format!("t{tier}"),
                    vec![Candidate::new("chunk", "adversary", self.tier_ratio(tier) * scale, scale)],
                );
                for _ in 0..self.budget_units {
                    match sel.step(&arrival).selected() {
                        Some(c) => relevance += c.relevance,
                        None => break,
                    }
                }
                relevance / (self.opt_value(tier).expect("tier in range") * scale)
            })
            .collect()
    }

    /// Draws a tier index according to the family probabilities.
    pub fn sample_tier<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for (m, p) in self.probabilities.iter().enumerate() {
            acc += p;
            if u < acc {
                return m;
            }
        }
        self.k
    }
}

/// Monte-Carlo estimate of the threshold policy's `E[A/OPT]` on the family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FamilyEstimate {
    pub samples: usize,
    pub mean: f64,
    pub stderr: f64,
    /// Exact expectation `sum_m p_m * A(I_m)/OPT(I_m)`.
    pub exact: f64,
}

pub fn estimate_ucosa<R: Rng + ?Sized>(family: &AdversarialFamily, samples: usize, rng: &mut R) -> FamilyEstimate {
    let per_tier = family.ucosa_ratios();
    let exact = per_tier.iter().zip(&family.probabilities).map(|(r, p)| r * p).sum();
    let draws: Vec<f64> = (0..samples).map(|_| per_tier[family.sample_tier(rng)]).collect();
    let n = draws.len().max(1) as f64;
    let mean = draws.iter().sum::<f64>() / n;
    let var = if draws.len() > 1 {
        draws.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    FamilyEstimate {
        samples,
        mean,
        stderr: (var / n).sqrt(),
        exact,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::E;

    #[test]
    fn unit_e_half_eta() {
        let f = build_family(1.0, E, 0.5, 10).unwrap();
        assert_eq!(f.k, 2);
        assert!((f.h() - 2.5).abs() < 1e-15);
        assert!((f.probabilities[2] - 0.6).abs() < 1e-15);
        assert!((f.probabilities[0] - 0.2).abs() < 1e-15);
        assert!((f.probabilities[1] - 0.2).abs() < 1e-15);
        assert!((f.bound() - 0.6).abs() < 1e-15);
    }

    #[test]
    fn exact_power_boundary_is_included() {
        let f = build_family(1.0, 4.0, 1.0, 10).unwrap();
        assert_eq!(f.k, 2);
        let f = build_family(0.25, 1.0, 1.0, 10).unwrap();
        assert_eq!(f.k, 2);
    }

    #[test]
    fn opt_values() {
        let f = build_family(1.0, E, 0.5, 10).unwrap();
        assert_eq!(f.opt_value(0).unwrap(), 10.0);
        assert!((f.opt_value(1).unwrap() - 15.0).abs() < 1e-12);
        assert!((f.opt_value(2).unwrap() - 22.5).abs() < 1e-12);
        assert!(f.opt_value(3).is_err());
    }

    #[test]
    fn expected_ratio_examples() {
        let f = build_family(1.0, E, 0.5, 10).unwrap();
        assert!((f.expected_ratio(&[0.0, 0.0, 1.0]).unwrap() - 0.6).abs() < 1e-15);
        assert_eq!(f.expected_ratio(&[0.0, 0.0, 0.0]).unwrap(), 0.0);
        assert!(matches!(f.expected_ratio(&[0.5, 0.5, 0.5]), Err(AdversaryError::InfeasibleSplit(_))));
        assert!(matches!(f.expected_ratio(&[1.0]), Err(AdversaryError::SplitLength { .. })));
        assert!(f.expected_ratio(&[-0.1, 0.0, 0.5]).is_err());
    }

    #[test]
    fn invalid_inputs() {
        assert_eq!(build_family(1.0, E, 0.0, 10), Err(AdversaryError::NonPositiveEta(0.0)));
        assert!(build_family(1.0, E, -1.0, 10).is_err());
        assert!(build_family(2.0, 1.0, 0.5, 10).is_err());
        assert_eq!(build_family(1.0, E, 0.5, 0), Err(AdversaryError::ZeroBudget));
    }

    #[test]
    fn materialized_instances_nest() {
        let f = build_family(0.1, 0.8, 0.5, 4).unwrap();
        let i1 = f.materialize(1).unwrap();
        let i2 = f.materialize(2).unwrap();
        assert_eq!(i1.prompts.len(), 8);
        assert_eq!(i2.prompts.len(), 12);
        assert_eq!(&i2.prompts[..8], &i1.prompts[..]);
        assert_eq!(f.price_scale(), 1.0);
    }

    #[test]
    fn scaled_materialization_keeps_ratios() {
        let f = build_family(1.0, E, 0.5, 100).unwrap();
        let inst = f.materialize(2).unwrap();
        assert!(inst.candidates().all(|c| c.relevance <= 1.0));
        let top = inst.prompts.last().unwrap().candidates[0].ratio();
        assert!((top - 2.25).abs() < 1e-12);
    }

    #[test]
    fn ucosa_meets_its_guarantee_on_family() {
        let f = build_family(1.0, E, 0.5, 400).unwrap();
        let guarantee = 1.0 / ((f.ratio_upper / f.ratio_lower).ln() + 2.0);
        for r in f.ucosa_ratios() {
            assert!(r >= guarantee - 0.01, "{r} < {guarantee}");
            assert!(r <= 1.0 + 1e-12);
        }
    }
}
