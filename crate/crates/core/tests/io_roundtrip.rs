mod common;

use caas_core::io::instance::{instance_to_string, parse_instance, BudgetField};
use caas_core::io::results::{format_results, parse_results};
use caas_core::io::synth::{RelevanceDist, SourceSpec};
use caas_core::io::{generate_synthetic, Repetition, ResultRow, SyntheticSpec};
use caas_core::Budget;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::path::Path;

proptest! {
    #[test]
    fn instances_survive_write_and_load(seed in any::<u64>(), inf in any::<bool>()) {
        let mut inst = common::random_instance(&mut ChaCha8Rng::seed_from_u64(seed), 20, 5, 0.1);
        if inf {
            inst.budget = Budget::Infinite;
        }
        let text = instance_to_string(&inst);
        let back = parse_instance(&text, Path::new("mem.json")).unwrap();
        prop_assert_eq!(back, inst);
    }

    #[test]
    fn result_rows_survive_write_and_read(
        nep in 0u32..1000,
        ar in prop::option::of(0.0f64..1.0),
        spent in 0.0f64..1e4,
        budget in prop::option::of(0.0f64..1e4),
    ) {
        let row = ResultRow {
            policy: "ucosa".into(),
            repetition: Repetition::Index(3),
            budget: budget.map_or(Budget::Infinite, Budget::Finite),
            nep: nep as f64,
            ar,
            nep_times_ar: nep as f64 * ar.unwrap_or(0.0),
            total_relevance: nep as f64 * ar.unwrap_or(0.0),
            spent,
            perf_to_budget: (spent > 0.0).then(|| nep as f64 / spent),
        };
        let text = format_results(std::slice::from_ref(&row));
        let back = parse_results(&text, Path::new("r.csv")).unwrap();
        prop_assert_eq!(back.len(), 1);
        let rel = |a: f64, b: f64| (a - b).abs() <= 1e-8 * a.abs().max(b.abs()).max(1e-300);
        prop_assert_eq!(back[0].budget.is_finite(), row.budget.is_finite());
        prop_assert!(rel(back[0].spent, row.spent));
        prop_assert_eq!(back[0].ar.is_some(), row.ar.is_some());
        prop_assert_eq!(back[0].perf_to_budget.is_some(), row.perf_to_budget.is_some());
    }
}

#[test]
fn generated_ratios_stay_within_declared_bounds() {
    let sources = [("A", 0.8), ("B", 0.2), ("C", 0.1)]
        .into_iter()
        .map(|(id, price)| SourceSpec {
            source_id: id.into(),
            price_per_chunk: price,
            weight: 1.0,
        })
        .collect::<Vec<_>>();
    for seed in 0..1000 {
        let spec = SyntheticSpec {
            num_prompts: 12,
            top_k: 8,
            min_candidates: Some(0),
            empty_fraction: 0.1,
            chunks_per_source: 200,
            sources: sources.clone(),
            relevance: RelevanceDist::default(),
            budget: BudgetField::Amount(5.0),
            seed,
        };
        let inst = generate_synthetic(&spec).unwrap();
        assert!(inst.ratio_lower > 0.0);
        for c in inst.candidates() {
            assert!(c.ratio() >= inst.ratio_lower && c.ratio() <= inst.ratio_upper, "seed {seed}");
        }
    }
}
