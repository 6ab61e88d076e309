mod common;

use common::*;
use nalgebra::DVector;
use rand::Rng;
use regret_core::augmentation::{augment_delay, augment_predictions, evaluate_delayed_cost, Pipeline};
use regret_core::controllers::{regret_optimal, ControllerSpec, FeasibilityTest, Level, RegretProblem};
use regret_core::linalg::{concat, max_abs_vec};
use regret_core::oracle::{build_operators, optimal_regret_level};
use regret_core::sim::{rollout, rollout_delayed};
use regret_core::system::evaluate_cost;
use regret_core::LqSystem;

fn gamma_opt(sys: &LqSystem) -> f64 {
    RegretProblem::new(sys)
        .unwrap()
        .optimal(1e-8, FeasibilityTest::Level1)
        .unwrap()
        .0
        .gamma_opt
}

#[test]
fn cost_equivalence_on_random_instances() {
    let mut r = rng(40);
    let systems = random_systems(41, 100, 8);
    for sys in &systems {
        let (horizon, m, p) = (sys.horizon(), sys.control_dim(), sys.disturbance_dim());
        let w = gaussian_sequence(&mut r, horizon, p);
        let u = gaussian_sequence(&mut r, horizon, m);
        let h = r.random_range(0..=horizon);
        let aug = augment_predictions(sys, h).unwrap();
        let base = evaluate_cost(sys, &w, &u).unwrap().total_cost;
        let lifted = evaluate_cost(aug.system(), &aug.lift_disturbance(&w).unwrap(), &aug.lift_controls(&u).unwrap())
            .unwrap()
            .total_cost;
        assert!((base - lifted).abs() <= 1e-10 * (1.0 + base.abs()));

        let d = r.random_range(0..horizon);
        let aug = augment_delay(sys, d).unwrap();
        let base = evaluate_delayed_cost(sys, d, &w, &u).unwrap().total_cost;
        let lifted = evaluate_cost(aug.system(), &w, &u).unwrap().total_cost;
        assert!((base - lifted).abs() <= 1e-10 * (1.0 + base.abs()));
    }
}

#[test]
fn lookahead_lowers_the_optimal_level() {
    for sys in std::iter::once(s1()).chain(random_systems(42, 4, 6)) {
        let mut previous = f64::INFINITY;
        for h in 0..=sys.horizon() {
            let g = gamma_opt(augment_predictions(&sys, h).unwrap().system());
            assert!(g <= previous * (1.0 + 1e-6), "h = {h}: {g} > {previous}");
            previous = g;
        }
        assert!(previous <= 1e-6, "full lookahead level {previous}");
    }
}

#[test]
fn one_step_delay_raises_the_level_on_s1() {
    let sys = s1();
    let g0 = gamma_opt(augment_delay(&sys, 0).unwrap().system());
    let g1 = gamma_opt(augment_delay(&sys, 1).unwrap().system());
    assert!(g1 >= g0);
}

/// The clairvoyant comparator is delayed too, so the optimal level need not
/// grow with the delay. Every value still matches the dense optimum.
#[test]
fn delayed_levels_match_dense_optimum() {
    let mut drops = 0;
    for sys in std::iter::once(s1()).chain(random_systems(43, 4, 6)) {
        let mut previous = 0.0;
        for d in 0..sys.horizon() {
            let aug = augment_delay(&sys, d).unwrap();
            let g = gamma_opt(aug.system());
            let dense = optimal_regret_level(&build_operators(aug.system()).unwrap()).unwrap().sqrt();
            assert!((g - dense).abs() <= 1e-6 * dense.max(1e-6), "d = {d}: {g} vs {dense}");
            if g < previous * (1.0 - 1e-6) {
                drops += 1;
            }
            previous = g;
        }
    }
    assert!(drops > 0);
}

#[test]
fn wrapped_rollout_matches_augmented_rollout() {
    let mut r = rng(44);
    for sys in std::iter::once(s1()).chain(random_systems(45, 5, 6)) {
        let w = gaussian_sequence(&mut r, sys.horizon(), sys.disturbance_dim());
        for h in [1, 2] {
            let aug = augment_predictions(&sys, h.min(sys.horizon())).unwrap();
            let (_, mut ctrl) = regret_optimal(aug.system(), 1e-6, FeasibilityTest::Level1).unwrap();
            let lifted = rollout(aug.system(), ctrl.as_mut(), &aug.lift_disturbance(&w).unwrap()).unwrap();
            let mut wrapped = aug.wrap(ctrl.boxed());
            let base = rollout(&sys, wrapped.as_mut(), &w).unwrap();
            assert!((lifted.total_cost - base.total_cost).abs() <= 1e-10 * (1.0 + base.total_cost));
            let projected = aug.project_controls(&lifted.u);
            assert!(max_abs_vec(&(concat(&projected) - concat(&base.u))) <= 1e-10);
        }
        let d = 1;
        let aug = augment_delay(&sys, d).unwrap();
        let (_, mut ctrl) = regret_optimal(aug.system(), 1e-6, FeasibilityTest::Level1).unwrap();
        let lifted = rollout(aug.system(), ctrl.as_mut(), &w).unwrap();
        let mut wrapped = aug.wrap(ctrl.boxed());
        let base = rollout_delayed(&sys, d, wrapped.as_mut(), &w).unwrap();
        assert!((lifted.total_cost - base.total_cost).abs() <= 1e-10 * (1.0 + base.total_cost));
        for t in 1..sys.horizon() {
            let transcript = lifted.x[t].rows(sys.state_dim(), sys.control_dim()).into_owned();
            assert!(max_abs_vec(&(transcript - &lifted.u[t - 1])) <= 1e-12);
            assert!(max_abs_vec(&(aug.project_state(&lifted.x[t]) - &base.x[t])) <= 1e-10);
        }
    }
}

#[test]
fn reductions_compose_in_either_order() {
    let mut r = rng(46);
    for sys in random_systems(47, 4, 6) {
        let (h, d) = (1, 1);
        let dp = augment_predictions(augment_delay(&sys, d).unwrap().system(), h).unwrap();
        let pd = augment_delay(augment_predictions(&sys, h).unwrap().system(), d).unwrap();
        let g1 = gamma_opt(dp.system());
        let g2 = gamma_opt(pd.system());
        assert!((g1 - g2).abs() <= 1e-6 * g1.max(1e-12), "{g1} vs {g2}");

        let w = gaussian_sequence(&mut r, sys.horizon(), sys.disturbance_dim());
        let u = gaussian_sequence(&mut r, sys.horizon(), sys.control_dim());
        let c1 = evaluate_cost(dp.system(), &dp.lift_disturbance(&w).unwrap(), &dp.lift_controls(&u).unwrap())
            .unwrap()
            .total_cost;
        let inner = augment_predictions(&sys, h).unwrap();
        let u_pd = inner.lift_controls(&u).unwrap();
        let c2 = evaluate_cost(pd.system(), &inner.lift_disturbance(&w).unwrap(), &u_pd).unwrap().total_cost;
        let base = evaluate_delayed_cost(&sys, d, &w, &u).unwrap().total_cost;
        assert!((c1 - base).abs() <= 1e-8 * (1.0 + base));
        assert!((c2 - base).abs() <= 1e-8 * (1.0 + base));
    }
}

#[test]
fn pipeline_controllers_run_on_the_base_plant() {
    let sys = s1();
    let w = seq(&[1.0, -1.0, 0.5]);
    let pipeline = Pipeline::new(&sys, 1, 1).unwrap();
    for spec in [
        ControllerSpec::H2,
        ControllerSpec::Hinf(Level::Auto),
        ControllerSpec::Regret(Level::Auto, FeasibilityTest::Level1),
        ControllerSpec::Offline,
    ] {
        let mut built = pipeline.build(&spec, 1e-6).unwrap();
        let traj = rollout_delayed(&sys, 1, built.controller.as_mut(), &w).unwrap();
        assert!(traj.total_cost.is_finite());
    }
    let zero = rollout_delayed(&sys, 1, &mut regret_core::controllers::ZeroController::new(1), &vec![DVector::zeros(1); 3])
        .unwrap();
    assert_eq!(zero.total_cost, 0.0);
}
