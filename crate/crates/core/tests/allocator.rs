mod common;

use std::sync::{Arc, Mutex};

use eri_core::allocator::{tune, MockWorkload, SyntheticKernel, Workload, WorkloadConfig};
use eri_core::compiler::EriClass;
use eri_core::validation::{allocator_hardware, allocator_mock_cases, allocator_principle};
use proptest::prelude::*;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

fn class(i: usize) -> EriClass {
    EriClass([(i % 3) as u32, (i / 3 % 3) as u32, (i / 9 % 3) as u32, 0])
}

#[test]
fn mock_cost_models_reach_known_granularity() {
    for case in allocator_mock_cases().unwrap() {
        assert!(case.passed, "{}: expected {:?}, found {:?}", case.name, case.expected, case.found);
    }
}

#[test]
fn latency_bound_kernel_prefers_coarser_tasks() {
    let p = allocator_principle().unwrap();
    assert!(p.passed, "{p:?}");
}

#[test]
fn synthetic_kernel_spill_penalty() {
    let k = SyntheticKernel {
        tasks: 1024,
        workers: 4,
        compute: 1.0,
        latency: 10.0,
        regs_per_task: 8.0,
        reg_budget: 64.0,
    };
    assert!(k.cap() >= 1);
    // 256 waves of one task plus latency.
    assert!((k.time(1) - 256.0 * 11.0).abs() < 1e-9);
    // Up to 8 tasks fit the budget.
    assert!((k.time(8) - 32.0 * 18.0).abs() < 1e-9);
    // One wave of 256 tasks using 2048 registers: 31 budgets over, so 32x compute.
    assert!((k.time(256) - (256.0 * 32.0 + 10.0)).abs() < 1e-9);
}

#[test]
fn noisy_costs_still_give_monotone_accepted_times() {
    let rng = Arc::new(Mutex::new(StdRng::seed_from_u64(9)));
    let mut w = MockWorkload::new();
    for i in 0..4 {
        let rng = rng.clone();
        let centre = 2.0 + i as f64;
        w = w.with(class(i), 512, move |g| {
            let noise: f64 = rng.lock().unwrap().gen_range(0.8..1.2);
            (((g as f64).log2() - centre).powi(2) + 1.0) * noise
        });
    }
    let out = tune(&mut w, WorkloadConfig::default(), 3).unwrap();
    for h in out.state.classes.values() {
        assert!(h.accepted_times().windows(2).all(|p| p[1] <= p[0]));
    }
}

#[test]
fn tuning_real_blocks_is_not_slower() {
    let check = allocator_hardware(&common::water(), 1, 4).unwrap();
    assert!(check.monotone);
    assert!(check.granularity.values().all(|&g| g >= 1));
    // Wall time on a shared machine is reported, not asserted here.
    println!("untuned {:.4}s tuned {:.4}s", check.untuned_s, check.tuned_s);
}

fn log2_ceil(n: usize) -> usize {
    (usize::BITS - (n.max(1) - 1).leading_zeros()) as usize
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn tuner_terminates_and_stays_monotone(
        tables in prop::collection::vec(prop::collection::vec(0.1f64..10.0, 13), 1..5),
        caps in prop::collection::vec(1usize..=4096, 5),
    ) {
        let mut w = MockWorkload::new();
        for (i, table) in tables.iter().enumerate() {
            let table = table.clone();
            w = w.with(class(i), caps[i], move |g| table[log2_ceil(g).min(12)]);
        }
        let out = tune(&mut w, WorkloadConfig::default(), 1).unwrap();
        let bound: usize = (0..tables.len()).map(|i| log2_ceil(caps[i])).sum();
        prop_assert!(out.state.accepted_steps <= bound);
        prop_assert!(out.state.sweeps <= bound + 1);
        for (i, _) in tables.iter().enumerate() {
            let g = out.config.get(class(i));
            prop_assert!(g >= 1 && g <= caps[i]);
            let h = &out.state.classes[&class(i).to_string()];
            prop_assert!(h.accepted_times().windows(2).all(|p| p[1] < p[0]));
        }
        // Each (class, g) is measured once plus a warm-up.
        let distinct: usize = (0..tables.len()).map(|i| log2_ceil(caps[i]) + 1).sum();
        prop_assert!(w.runs <= 2 * distinct);
        prop_assert_eq!(w.classes().len(), tables.len());
    }
}
