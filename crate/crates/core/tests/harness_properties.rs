mod common;

use caas_core::harness::{
    permutation, permutation_seed, run_experiment, run_stream, ExperimentPlan, PlanPolicy,
};
use caas_core::metrics::compute_metrics;
use caas_core::offline::solve_dp;
use caas_core::{Candidate, PolicyKind, PromptArrival};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn opt_ignores_arrival_order() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for _ in 0..50 {
        let inst = common::random_instance(&mut rng, 20, 4, 0.1);
        let base = solve_dp(&inst, 0.1).unwrap().objective;
        for rep in 0..5 {
            let order = permutation(inst.prompts.len(), permutation_seed(3, rep));
            let mut shuffled = inst.clone();
            shuffled.prompts = order.iter().map(|&i| inst.prompts[i].clone()).collect();
            assert!((solve_dp(&shuffled, 0.1).unwrap().objective - base).abs() <= 1e-9);
        }
    }
}

#[test]
fn later_arrivals_never_change_earlier_decisions() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for _ in 0..100 {
        let inst = common::random_instance(&mut rng, 20, 4, 0.1);
        let n = inst.prompts.len();
        let cut = rng.random_range(0..=n);
        let mut mutated = inst.clone();
        for (i, p) in mutated.prompts.iter_mut().enumerate().skip(cut) {
            let m = rng.random_range(0..=4);
            *p = PromptArrival::new(
                format!("tail{i}"),
                (0..m)
                    .map(|j| {
                        Candidate::new(
                            format!("t{i}-{j}"),
                            "t",
                            rng.random_range(1..=100) as f64 / 100.0,
                            rng.random_range(1..=10) as f64 / 10.0,
                        )
                    })
                    .collect(),
            );
        }
        let order = common::identity(&inst);
        for policy in PolicyKind::ALL {
            let a = run_stream(&inst, policy, &order, 4).unwrap();
            let b = run_stream(&mutated, policy, &order, 4).unwrap();
            assert_eq!(a.decisions[..cut], b.decisions[..cut], "{policy:?}");
        }
    }
}

#[test]
fn aggregates_recompute_from_records() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let inst = common::random_instance(&mut rng, 25, 4, 0.1);
    let mut plan = ExperimentPlan::new(vec![
        PlanPolicy::Online(PolicyKind::Ucosa),
        PlanPolicy::Online(PolicyKind::Random),
    ]);
    plan.repetitions = 17;
    plan.master_seed = 5;
    let report = run_experiment(&inst, &plan).unwrap();
    assert_eq!(report.records.len(), 34);
    for agg in &report.aggregates {
        let runs: Vec<_> = report.records.iter().filter(|r| r.policy == agg.policy).collect();
        assert_eq!(runs.len(), agg.runs);
        let vals: Vec<f64> = runs.iter().map(|r| r.metrics.nep_times_ar).collect();
        let mean = vals.iter().sum::<f64>() / vals.len() as f64;
        let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (vals.len() - 1) as f64;
        assert!((agg.mean.nep_times_ar - mean).abs() <= 1e-12);
        assert!((agg.stddev.nep_times_ar - var.sqrt()).abs() <= 1e-12);
        let spent = runs.iter().map(|r| r.metrics.spent).sum::<f64>() / runs.len() as f64;
        assert!((agg.mean.spent - spent).abs() <= 1e-12);
    }
    for r in &report.records {
        assert_eq!(compute_metrics(&r.decisions), r.metrics);
        assert_eq!(r.decisions.len(), inst.prompts.len());
    }
}

#[test]
fn repetitions_follow_the_documented_seeds() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let inst = common::random_instance(&mut rng, 15, 3, 0.1);
    let mut plan = ExperimentPlan::new(vec![PlanPolicy::Online(PolicyKind::Random)]);
    plan.repetitions = 4;
    plan.master_seed = 77;
    let report = run_experiment(&inst, &plan).unwrap();
    for (rep, record) in report.records.iter().enumerate() {
        let seed = permutation_seed(77, rep);
        let direct = run_stream(&inst, PolicyKind::Random, &permutation(inst.prompts.len(), seed), seed).unwrap();
        assert_eq!(record.repetition, rep);
        assert_eq!(record.decisions, direct.decisions);
    }
}

#[test]
fn single_repetition_report_is_the_run() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let inst = common::random_instance(&mut rng, 15, 3, 0.1);
    let mut plan = ExperimentPlan::new(vec![PlanPolicy::Online(PolicyKind::Ucosa)]);
    plan.repetitions = 1;
    let report = run_experiment(&inst, &plan).unwrap();
    let m = &report.records[0].metrics;
    let a = &report.aggregates[0];
    assert_eq!(a.mean.nep, m.nep as f64);
    assert_eq!(a.mean.nep_times_ar, m.nep_times_ar);
    assert_eq!(a.mean.spent, m.spent);
    assert_eq!(a.stddev.nep_times_ar, 0.0);
}
