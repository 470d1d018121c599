#![allow(dead_code)]

use caas_core::{Budget, Candidate, Instance, PromptArrival};
use rand::Rng;

/// Random instance: up to `max_prompts` prompts with `0..=max_candidates`
/// candidates each, prices on the `quantum` grid (1 to 10 steps), relevance
/// in `[0.01, 1]` at two decimals, tight ratio bounds.
pub fn random_instance<R: Rng>(rng: &mut R, max_prompts: usize, max_candidates: usize, quantum: f64) -> Instance {
    let n = rng.random_range(1..=max_prompts);
    let prompts: Vec<PromptArrival> = (0..n)
        .map(|i| {
            let m = rng.random_range(0..=max_candidates);
            let candidates = (0..m)
                .map(|j| {
                    let relevance = rng.random_range(1..=100) as f64 / 100.0;
                    let price = rng.random_range(1..=10) as f64 * quantum;
                    Candidate::new(format!("c{i}-{j}"), format!("s{}", j % 3), relevance, price)
                })
                .collect();
            PromptArrival::new(format!("p{i}"), candidates)
        })
        .collect();
    let max_spend: f64 = prompts
        .iter()
        .map(|p| p.candidates.iter().map(|c| c.price).fold(0.0, f64::max))
        .sum();
    let budget = Budget::Finite(rng.random_range(0.0..=max_spend.max(quantum)));
    Instance::with_tight_bounds(prompts.clone(), budget).unwrap_or_else(|| Instance::new(prompts, budget, 1.0, 1.0))
}

pub fn identity(instance: &Instance) -> Vec<usize> {
    (0..instance.prompts.len()).collect()
}
