//! Solver invariants as property tests over seeded small instances.

use proptest::prelude::*;
use ucn_precode::baselines::{
    gd_solve, nagd_solve, random_init, wmmse_iterate, LineSearchConfig, StopRule,
};
use ucn_precode::harness::{gradcheck_scenario, Instance, ScenarioConfig};
use ucn_precode::objective::relative_error;
use ucn_precode::symplectic::{solve, step_controller, SolverConfig};
use ucn_precode::{BlockVector, PowerBudget};

fn small(seed: u64, cluster_size: usize, power_dbm: f64) -> (Instance, BlockVector) {
    let cfg = ScenarioConfig {
        cluster_size,
        ..gradcheck_scenario()
    };
    let inst = Instance::build(&cfg, seed, power_dbm).unwrap();
    let p0 = random_init(inst.objective.layout().clone(), &inst.rho, seed ^ 0xabcd).unwrap();
    (inst, p0)
}

fn budget_residual(p: &BlockVector, rho: &PowerBudget) -> f64 {
    (0..rho.len())
        .filter(|&l| !p.bs_slice(l).is_empty())
        .map(|l| {
            let n: f64 = p.bs_slice(l).iter().map(|x| x * x).sum();
            (n - rho.get(l)).abs() / rho.get(l)
        })
        .fold(0.0, f64::max)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn gradient_matches_differences(seed in 0u64..10_000, b_sc in 1usize..=3, power in 10.0f64..30.0) {
        let (inst, p) = small(seed, b_sc, power);
        let g = inst.objective.gradient(&p).unwrap();
        let fd = inst.objective.fd_gradient(&p, 1e-5).unwrap();
        prop_assert!(relative_error(g.as_slice(), fd.as_slice()) < 1e-6);
    }

    #[test]
    fn symplectic_stays_on_both_constraints(seed in 0u64..10_000, h in 1e-4f64..5e-3, theta in 0.0f64..1.0) {
        let (inst, p0) = small(seed, 2, 24.0);
        let cfg = SolverConfig { h0: h, h_max: h, theta, max_iters: 40, ..SolverConfig::default() };
        let r = solve(&inst.objective, &inst.rho, &p0, &cfg).unwrap();
        let mut best = r.initial_wsr_bits;
        for t in &r.trace {
            prop_assert!(t.constraint_residual <= 1e-12);
            prop_assert!(t.hidden_residual <= 1e-9);
            prop_assert!(t.h_used <= h * (1.0 + 1e-15));
            prop_assert!(t.best_wsr_bits >= best);
            best = t.best_wsr_bits;
        }
        prop_assert!(budget_residual(&r.precoder, &inst.rho) <= 1e-12);
        prop_assert_eq!(r.best_wsr_bits, inst.objective.wsr(&r.precoder).unwrap());
    }

    #[test]
    fn wmmse_never_decreases(seed in 0u64..10_000, b_sc in 1usize..=3) {
        let (inst, p0) = small(seed, b_sc, 24.0);
        let r = wmmse_iterate(&inst.objective, &inst.rho, &p0, 15, 1e-12).unwrap().solve;
        for w in r.wsr_history().windows(2) {
            prop_assert!(w[1] >= w[0] - 1e-8);
        }
        for t in &r.trace {
            prop_assert!(t.max_power_ratio <= 1.0 + 1e-8);
        }
    }

    #[test]
    fn line_search_methods_stay_feasible(seed in 0u64..10_000, mu in 0.0f64..0.95) {
        let (inst, p0) = small(seed, 2, 24.0);
        let stop = StopRule { max_iters: 25, ..StopRule::default() };
        let ls = LineSearchConfig::default();
        let gd = gd_solve(&inst.objective, &inst.rho, &p0, &ls, &stop).unwrap();
        let nagd = nagd_solve(&inst.objective, &inst.rho, &p0, mu, &ls, &stop).unwrap();
        for r in [&gd, &nagd] {
            prop_assert!(r.best_wsr_bits >= r.initial_wsr_bits);
            prop_assert!(budget_residual(&r.precoder, &inst.rho) <= 1e-12);
            for t in &r.trace {
                prop_assert!(t.constraint_residual <= 1e-12);
            }
        }
        // Plain GD with Armijo acceptance never goes downhill.
        for w in gd.wsr_history().windows(2) {
            prop_assert!(w[1] >= w[0]);
        }
    }

    #[test]
    fn controller_respects_clamps(delta in 0.0f64..1e6, h in 1e-6f64..2.0, theta in 1e-3f64..4.0) {
        let cfg = SolverConfig { theta, h_max: 1.0, ..SolverConfig::default() };
        let out = step_controller(delta, h, &cfg);
        prop_assert!(out >= cfg.h_min && out <= cfg.h_max);
        if delta > cfg.r_ctrl {
            prop_assert!(out <= h.max(cfg.h_min));
        }
    }
}
