// SPDX-License-Identifier: Apache-2.0

mod common;

use std::collections::BTreeSet;
use std::time::{Duration, Instant};

use common::oracle;
use nocsynth::{
    check_reconstruction, decompose, enumerate_matches, Acg, Constraints, DecomposeError, DecomposeOptions,
    EnergyModel, Library,
};

const HOSTS: u64 = 120;

fn model(seed: u64) -> EnergyModel {
    match seed % 3 {
        0 => EnergyModel::unit(),
        1 => EnergyModel::unit().with_lambda(1.0),
        _ => EnergyModel::linear(1.0, 0.5),
    }
}

fn host(seed: u64, lib: &Library) -> Acg {
    oracle::random_host(seed, 10, 14, lib)
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-9 * a.abs().max(b.abs()).max(1.0)
}

#[test]
fn matcher_finds_every_brute_force_placement() {
    let lib = Library::builtin();
    let em = EnergyModel::unit();
    for seed in 0..40 {
        let g = host(seed, &lib);
        let brute = oracle::brute_matches(&g, &lib, &em);
        for p in lib.iter() {
            let want: BTreeSet<Vec<(u32, u32)>> = brute
                .iter()
                .filter(|m| m.primitive_id == p.id)
                .map(|m| m.covered.iter().copied().collect())
                .collect();
            let list = enumerate_matches(&g, p, Duration::from_secs(10));
            assert!(!list.truncated);
            let got: BTreeSet<Vec<(u32, u32)>> = list.matches.iter().map(|m| m.covered.to_vec()).collect();
            assert_eq!(got, want, "seed {seed}, primitive {}", p.name);
        }
    }
}

#[test]
fn optimum_equals_exhaustive_subset_enumeration() {
    let lib = Library::builtin();
    let started = Instant::now();
    let mut nontrivial = 0;
    for seed in 0..HOSTS {
        let g = host(seed, &lib);
        let em = model(seed);
        let brute = oracle::brute_matches(&g, &lib, &em);
        let want = oracle::exhaustive_optimum(&g, &em, &brute);
        let d = decompose(&g, &lib, &em, &Constraints::unlimited(), &DecomposeOptions::default()).unwrap();
        assert!(!d.truncated, "seed {seed}");
        assert!(close(d.cost, want), "seed {seed}: got {}, exhaustive {want}", d.cost);
        assert_eq!(oracle::check_partition(&d, &g, &lib), Ok(()), "seed {seed}");
        assert_eq!(check_reconstruction(&d, &g, &lib), Ok(()), "seed {seed}");
        assert_eq!(d.stats.reconstruction_failures, 0);
        assert!(close(oracle::decomposition_cost(&d, &g, &lib, &em), d.cost), "seed {seed}");
        if !d.matches.is_empty() {
            nontrivial += 1;
        }
    }
    assert!(nontrivial >= HOSTS / 3, "only {nontrivial} hosts had matches");
    assert!(started.elapsed() < Duration::from_secs(60));
}

#[test]
fn pruning_and_threads_leave_the_answer_unchanged() {
    let lib = Library::builtin();
    for seed in 0..40 {
        let g = host(seed, &lib);
        let em = model(seed);
        let c = Constraints::unlimited();
        let base = decompose(&g, &lib, &em, &c, &DecomposeOptions::default()).unwrap();
        let plain = DecomposeOptions {
            prune: false,
            ..DecomposeOptions::default()
        };
        let threaded = DecomposeOptions {
            threads: 4,
            ..DecomposeOptions::default()
        };
        for opts in [plain, threaded] {
            let d = decompose(&g, &lib, &em, &c, &opts).unwrap();
            assert_eq!(d.matches, base.matches, "seed {seed}");
            assert_eq!(d.remainder, base.remainder, "seed {seed}");
        }
    }
}

fn max_demand(g: &Acg, lib: &Library, em: &EnergyModel) -> f64 {
    let d = decompose(g, lib, em, &Constraints::unlimited(), &DecomposeOptions::default()).unwrap();
    oracle::link_demand(&d, g, lib).values().copied().fold(0.0, f64::max)
}

#[test]
fn capped_optimum_equals_filtered_exhaustive_enumeration() {
    let lib = Library::builtin();
    let mut infeasible = 0;
    let mut checked = 0;
    for seed in 0..60 {
        let g = oracle::random_host(1000 + seed, 7, 10, &lib);
        if g.edge_count() == 0 {
            continue;
        }
        let em = model(seed);
        let brute = oracle::brute_matches(&g, &lib, &em);
        let top = max_demand(&g, &lib, &em);
        let cap = top - 1.0;
        let c = Constraints {
            max_link_bandwidth: Some(cap),
            max_bisection_bandwidth: None,
        };
        let want = oracle::exhaustive_optimum_capped(&g, &lib, &em, &brute, cap);
        checked += 1;
        match (decompose(&g, &lib, &em, &c, &DecomposeOptions::default()), want) {
            (Ok(d), Some(w)) => {
                assert!(close(d.cost, w), "seed {seed}: got {}, exhaustive {w}", d.cost);
                assert!(oracle::link_demand(&d, &g, &lib).values().all(|&v| v <= cap));
                assert_eq!(oracle::check_partition(&d, &g, &lib), Ok(()));
            }
            (Err(DecomposeError::Infeasible { .. }), None) => infeasible += 1,
            (got, want) => panic!("seed {seed}: got {got:?}, exhaustive {want:?}"),
        }
    }
    assert!(checked > 30);
    assert!(infeasible < checked);
}

#[test]
fn relaxation_guided_search_agrees_with_unpruned_search() {
    let lib = Library::builtin();
    let em = EnergyModel::unit();
    let mut large = 0;
    for seed in 0..12 {
        let spec = nocsynth::workloads::bench_spec(12, seed, &lib);
        let g = nocsynth::workloads::planted_acg(seed, &spec, &lib).unwrap().acg;
        if g.edge_count() >= 20 {
            large += 1;
        }
        let c = Constraints::unlimited();
        let fast = decompose(&g, &lib, &em, &c, &DecomposeOptions::default()).unwrap();
        let plain = DecomposeOptions {
            prune: false,
            ..DecomposeOptions::default()
        };
        let slow = decompose(&g, &lib, &em, &c, &plain).unwrap();
        assert!(close(fast.cost, slow.cost), "seed {seed}");
        assert_eq!(fast.matches, slow.matches, "seed {seed}");
        assert_eq!(fast.remainder, slow.remainder, "seed {seed}");
    }
    assert!(large > 0);
}
