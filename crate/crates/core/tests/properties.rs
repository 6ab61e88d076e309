mod common;

use common::gaussian_sequence;
use proptest::prelude::*;
use regret_core::augmentation::{augment_delay, augment_predictions, evaluate_delayed_cost};
use regret_core::controllers::{offline_noncausal, synthesize_h2, FeasibilityTest, RegretProblem};
use regret_core::linalg::{concat, quad, rel_frobenius};
use regret_core::oracle::{build_operators, causal_factor, FactorSide};
use regret_core::sim::{random_system, rollout, trial_rng, RandomSystemOptions};
use regret_core::system::{energy, evaluate_cost};
use regret_core::LqSystem;

fn plant(seed: u64, n: usize, m: usize, p: usize, horizon: usize) -> LqSystem {
    let opts = RandomSystemOptions {
        time_varying: seed.is_multiple_of(2),
        general_control_weight: !seed.is_multiple_of(3),
        terminal_weight: !seed.is_multiple_of(5),
        ..RandomSystemOptions::default()
    };
    random_system(&mut trial_rng(seed, 0), n, m, p, horizon, opts)
}

prop_compose! {
    fn plants(max_horizon: usize)(
        seed in any::<u64>(),
        n in 1usize..=3,
        m in 1usize..=3,
        p in 1usize..=3,
        horizon in 2usize..=max_horizon,
    ) -> (u64, LqSystem) {
        (seed, plant(seed, n, m, p, horizon))
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn stage_costs_add_up((seed, sys) in plants(10)) {
        let mut r = trial_rng(seed, 1);
        let w = gaussian_sequence(&mut r, sys.horizon(), sys.disturbance_dim());
        let u = gaussian_sequence(&mut r, sys.horizon(), sys.control_dim());
        let traj = evaluate_cost(&sys, &w, &u).unwrap();
        let sum: f64 = traj.stage_costs.iter().sum();
        prop_assert!((sum - traj.total_cost).abs() <= 1e-12 * (1.0 + sum.abs()));
        prop_assert!(traj.total_cost >= 0.0);
        let averaged = traj.time_averaged_costs();
        let last = averaged.last().copied().unwrap();
        prop_assert!((last * sys.horizon() as f64 - traj.total_cost).abs() <= 1e-10 * (1.0 + traj.total_cost));
        prop_assert_eq!(traj.s.len(), sys.horizon() + 1);
    }

    #[test]
    fn offline_never_loses((seed, sys) in plants(10)) {
        let mut r = trial_rng(seed, 2);
        let w = gaussian_sequence(&mut r, sys.horizon(), sys.disturbance_dim());
        let offline = evaluate_cost(&sys, &w, &offline_noncausal(&sys, &w).unwrap()).unwrap().total_cost;
        let h2 = rollout(&sys, &mut synthesize_h2(&sys).unwrap(), &w).unwrap().total_cost;
        let ops = build_operators(&sys).unwrap();
        let dense = quad(&ops.offline_cost_form().unwrap(), &concat(&w));
        prop_assert!(offline <= h2 * (1.0 + 1e-10) + 1e-12);
        prop_assert!((offline - dense).abs() <= 1e-8 * (1.0 + dense));
    }

    #[test]
    fn regret_stays_below_the_level((seed, sys) in plants(8), factor in 1.0f64..3.0) {
        let problem = RegretProblem::new(&sys).unwrap();
        let (search, _) = problem.optimal(1e-6, FeasibilityTest::Level1).unwrap();
        prop_assume!(search.gamma_opt > 0.0);
        let gamma = search.gamma_opt * factor;
        let syn = problem.synthesize(gamma, FeasibilityTest::Level1).unwrap();
        prop_assert!(syn.is_feasible());
        let mut ctrl = syn.controller().unwrap();
        let ops = build_operators(&sys).unwrap();
        let form = ops.offline_cost_form().unwrap();
        let mut r = trial_rng(seed, 3);
        for _ in 0..20 {
            let w = gaussian_sequence(&mut r, sys.horizon(), sys.disturbance_dim());
            let cost = rollout(&sys, ctrl.as_mut(), &w).unwrap().total_cost;
            let regret = cost - quad(&form, &concat(&w));
            prop_assert!(regret < gamma * gamma * energy(&w) + 1e-9);
        }
    }

    #[test]
    fn level_search_brackets_feasibility((_, sys) in plants(8)) {
        let problem = RegretProblem::new(&sys).unwrap();
        let tol = 1e-6;
        let (search, _) = problem.optimal(tol, FeasibilityTest::Level1).unwrap();
        prop_assume!(search.gamma_opt > 1e-6);
        let above = problem.feasibility(search.gamma_opt * (1.0 + tol), FeasibilityTest::Level1).unwrap().0;
        let below = problem.feasibility(search.gamma_opt * (1.0 - 2.0 * tol), FeasibilityTest::Level1).unwrap().0;
        prop_assert!(above);
        prop_assert!(!below);
    }

    #[test]
    fn augmentations_preserve_cost((seed, sys) in plants(8), h_frac in 0.0f64..=1.0, d_frac in 0.0f64..1.0) {
        let horizon = sys.horizon();
        let mut r = trial_rng(seed, 4);
        let w = gaussian_sequence(&mut r, horizon, sys.disturbance_dim());
        let u = gaussian_sequence(&mut r, horizon, sys.control_dim());
        let h = (h_frac * horizon as f64).floor() as usize;
        let aug = augment_predictions(&sys, h).unwrap();
        let base = evaluate_cost(&sys, &w, &u).unwrap().total_cost;
        let lifted = evaluate_cost(aug.system(), &aug.lift_disturbance(&w).unwrap(), &aug.lift_controls(&u).unwrap())
            .unwrap()
            .total_cost;
        prop_assert!((base - lifted).abs() <= 1e-10 * (1.0 + base));
        let d = (d_frac * horizon as f64).floor() as usize;
        let aug = augment_delay(&sys, d).unwrap();
        let base = evaluate_delayed_cost(&sys, d, &w, &u).unwrap().total_cost;
        let lifted = evaluate_cost(aug.system(), &w, &u).unwrap().total_cost;
        prop_assert!((base - lifted).abs() <= 1e-10 * (1.0 + base));
    }

    #[test]
    fn block_factors_reproduce_their_target(
        seed in any::<u64>(),
        blocks in 1usize..=6,
        block in 1usize..=3,
        upper in any::<bool>(),
    ) {
        let dim = blocks * block;
        let mut r = trial_rng(seed, 5);
        let root = nalgebra::DMatrix::from_vec(dim, dim, concat(&gaussian_sequence(&mut r, dim, dim)).as_slice().to_vec());
        let target = &root * root.transpose() + nalgebra::DMatrix::identity(dim, dim);
        let side = if upper { FactorSide::UpperLower } else { FactorSide::LowerUpper };
        let factor = causal_factor(&target, block, side).unwrap();
        prop_assert!(rel_frobenius(&factor.product(), &target) <= 1e-10);
        for i in 0..blocks {
            for j in (i + 1)..blocks {
                let corner = factor.factor.view((i * block, j * block), (block, block));
                prop_assert!(corner.iter().all(|v| *v == 0.0));
            }
        }
    }
}
