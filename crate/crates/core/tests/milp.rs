mod common;

use modelfree::lp::{LinearProgram, Relation};
use modelfree::milp::{solve_milp, MilpOptions, MilpProblem, MilpStatus};
use proptest::prelude::*;
use rand::Rng;

fn random_binary_problem(seed: u64) -> MilpProblem {
    let mut rng = common::rng(seed);
    let n = rng.gen_range(1..=8);
    let mut lp = LinearProgram::new();
    for _ in 0..n {
        lp.add_var(rng.gen_range(-5..=5) as f64, 0.0, 1.0);
    }
    for _ in 0..rng.gen_range(1..=4) {
        let c: Vec<(usize, f64)> = (0..n)
            .map(|j| (j, rng.gen_range(-3..=3) as f64))
            .filter(|(_, v)| *v != 0.0)
            .collect();
        let rel = if rng.gen_bool(0.8) { Relation::Le } else { Relation::Ge };
        lp.add_row(c, rel, rng.gen_range(-2..=4) as f64);
    }
    MilpProblem {
        lp,
        binaries: (0..n).collect(),
    }
}

fn brute_force(p: &MilpProblem) -> Option<f64> {
    let n = p.lp.num_vars();
    (0..1u32 << n)
        .filter_map(|mask| {
            let x: Vec<f64> = (0..n).map(|j| f64::from((mask >> j) & 1)).collect();
            (p.lp.max_violation(&x) <= 1e-12).then(|| p.lp.objective_value(&x))
        })
        .min_by(|a, b| a.total_cmp(b))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn exact_search_matches_enumeration(seed in any::<u64>()) {
        let p = random_binary_problem(seed);
        let r = solve_milp(&p, &MilpOptions::default(), None).unwrap();
        match brute_force(&p) {
            None => prop_assert_eq!(r.status, MilpStatus::Infeasible),
            Some(v) => {
                prop_assert_eq!(r.status, MilpStatus::Optimal);
                prop_assert!((r.upper - v).abs() <= 1e-9);
                prop_assert!(r.lower <= v + 1e-9);
                let x = r.incumbent.unwrap();
                prop_assert!(p.lp.max_violation(&x) <= 1e-9);
            }
        }
    }

    #[test]
    fn loose_gap_still_brackets_optimum(seed in any::<u64>()) {
        let p = random_binary_problem(seed);
        let opts = MilpOptions { gap: 0.8, ..MilpOptions::default() };
        let r = solve_milp(&p, &opts, None).unwrap();
        if let Some(v) = brute_force(&p) {
            prop_assert!(r.lower <= v + 1e-9, "lower {} above optimum {}", r.lower, v);
            prop_assert!(r.upper >= v - 1e-9);
        }
    }

    #[test]
    fn pool_entries_are_feasible(seed in any::<u64>()) {
        let p = random_binary_problem(seed);
        let r = solve_milp(&p, &MilpOptions::default(), None).unwrap();
        for e in &r.pool {
            prop_assert!(p.lp.max_violation(&e.x) <= 1e-9);
            prop_assert!((p.lp.objective_value(&e.x) - e.objective).abs() <= 1e-9);
        }
    }
}

#[test]
fn node_limit_is_reported() {
    // many equivalent optima keep the tree wide
    let n = 14;
    let mut lp = LinearProgram::new();
    for _ in 0..n {
        lp.add_var(-1.0, 0.0, 1.0);
    }
    lp.add_row((0..n).map(|j| (j, 2.0)).collect(), Relation::Le, n as f64 + 1.0);
    let p = MilpProblem {
        lp,
        binaries: (0..n).collect(),
    };
    let opts = MilpOptions {
        node_limit: 3,
        ..MilpOptions::default()
    };
    let r = solve_milp(&p, &opts, None).unwrap();
    assert!(r.nodes <= 3);
    assert!(r.lower <= -(n as f64 / 2.0).floor() + 1e-9);
}
