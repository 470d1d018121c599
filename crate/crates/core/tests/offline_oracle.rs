mod common;

use caas_core::harness::run_stream;
use caas_core::offline::{solve_bruteforce, solve_dp, BRUTEFORCE_CAP};
use caas_core::{Budget, Instance, PolicyKind};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn enumeration_size(inst: &Instance) -> f64 {
    inst.prompts.iter().map(|p| (p.candidates.len() + 1) as f64).product()
}

#[test]
fn dp_matches_bruteforce_on_small_instances() {
    let mut rng = ChaCha8Rng::seed_from_u64(0xD9);
    let mut checked = 0;
    while checked < 300 {
        let inst = common::random_instance(&mut rng, 12, 3, 0.1);
        if enumeration_size(&inst) > BRUTEFORCE_CAP {
            continue;
        }
        let brute = solve_bruteforce(&inst).unwrap();
        let dp = solve_dp(&inst, 0.1).unwrap();
        assert!((brute.objective - dp.objective).abs() <= 1e-9, "{} vs {}", brute.objective, dp.objective);
        assert!(dp.assignment.is_feasible(&inst));
        assert!((dp.assignment.objective() - dp.objective).abs() <= 1e-9);
        checked += 1;
    }
}

fn instance() -> impl Strategy<Value = Instance> {
    any::<u64>().prop_map(|seed| common::random_instance(&mut ChaCha8Rng::seed_from_u64(seed), 25, 5, 0.1))
}

proptest! {
    #[test]
    fn opt_dominates_online_policies(inst in instance(), seed in any::<u64>()) {
        let opt = solve_dp(&inst, 0.1).unwrap().objective;
        let order = caas_core::harness::permutation(inst.prompts.len(), seed);
        for policy in [PolicyKind::Ucosa, PolicyKind::Greedy, PolicyKind::Random, PolicyKind::Balance] {
            let run = run_stream(&inst, policy, &order, seed).unwrap();
            prop_assert!(run.metrics.total_relevance <= opt + 1e-9, "{policy:?}");
        }
    }

    #[test]
    fn opt_grows_with_budget(inst in instance(), a in 0u32..200, b in 0u32..200) {
        let (lo, hi) = (a.min(b) as f64 * 0.1, a.max(b) as f64 * 0.1);
        let small = solve_dp(&inst.with_budget(Budget::Finite(lo)), 0.1).unwrap().objective;
        let large = solve_dp(&inst.with_budget(Budget::Finite(hi)), 0.1).unwrap().objective;
        prop_assert!(small <= large + 1e-9);
    }
}
