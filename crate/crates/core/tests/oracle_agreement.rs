mod common;

use common::*;
use regret_core::controllers::{offline_noncausal, synthesize_h2, Controller};
use regret_core::linalg::{concat, max_abs, max_abs_vec, rel_frobenius};
use regret_core::oracle::{
    build_operators, causal_factor, controller_operator, h2_operator_form, offline_optimal, output_covariance,
    regret_weight, FactorSide,
};
use regret_core::riccati::{backward_kalman, forward_kalman};
use regret_core::sim::rollout;
use regret_core::system::normalize_control_weight;

#[test]
fn kalman_factors_match_dense_targets() {
    for sys in random_systems(1, 25, 15) {
        let ops = build_operators(&sys).unwrap();
        let (norm, _) = normalize_control_weight(&sys);
        let fwd = forward_kalman(&norm).unwrap();
        let l = fwd.factor_matrix(&norm);
        let target = output_covariance(&ops);
        assert!(rel_frobenius(&(&l * l.transpose()), &target) <= 1e-8);
        let dense = causal_factor(&target, sys.state_dim(), FactorSide::LowerUpper).unwrap();
        assert!(rel_frobenius(&l, &dense.factor) <= 1e-6);
        for gamma in [0.5, 1.0, 2.0] {
            let bwd = backward_kalman(&norm, &fwd, gamma).unwrap();
            let delta = bwd.factor_matrix(&norm, &fwd);
            let target = regret_weight(&ops, gamma).unwrap();
            assert!(rel_frobenius(&(delta.transpose() * &delta), &target) <= 1e-8);
            let dense = causal_factor(&target, sys.disturbance_dim(), FactorSide::UpperLower).unwrap();
            assert!(rel_frobenius(&delta, &dense.factor) <= 1e-6);
        }
    }
}

#[test]
fn whitened_disturbance_map_matches_dense() {
    for sys in random_systems(2, 10, 10) {
        let ops = build_operators(&sys).unwrap();
        let (norm, _) = normalize_control_weight(&sys);
        let fwd = forward_kalman(&norm).unwrap();
        let l = fwd.factor_matrix(&norm);
        let expected = l.clone().lu().solve(&ops.g).unwrap();
        let got = fwd.whitened_disturbance_map(&norm).unwrap();
        assert!(max_abs(&(got - expected)) <= 1e-8);
    }
}

#[test]
fn state_space_offline_matches_dense() {
    let mut r = rng(3);
    for sys in random_systems(3, 25, 15) {
        let ops = build_operators(&sys).unwrap();
        for _ in 0..20 {
            let w = gaussian_sequence(&mut r, sys.horizon(), sys.disturbance_dim());
            let (dense, _) = offline_optimal(&ops, &w).unwrap();
            let state_space = offline_noncausal(&sys, &w).unwrap();
            let dense = concat(&dense);
            let scale = 1.0 + max_abs_vec(&dense);
            assert!(max_abs_vec(&(dense - concat(&state_space))) <= 1e-8 * scale);
        }
    }
}

#[test]
fn h2_state_space_matches_operator_form() {
    for sys in random_systems(4, 25, 15) {
        let ops = build_operators(&sys).unwrap();
        let mut ctrl = synthesize_h2(&sys).unwrap();
        let k_state = controller_operator(&sys, &mut ctrl).unwrap();
        let k_op = h2_operator_form(&ops).unwrap();
        assert!(max_abs(&(&k_state - &k_op)) <= 1e-8 * (1.0 + max_abs(&k_op)));
    }
}

#[test]
fn h2_on_impulse() {
    let sys = s1();
    let w = seq(&[1.0, 0.0, 0.0]);
    let mut ctrl = synthesize_h2(&sys).unwrap();
    let traj = rollout(&sys, &mut ctrl, &w).unwrap();
    let u: Vec<f64> = traj.u.iter().map(|v| v[0]).collect();
    for (got, want) in u.iter().zip([-0.6, -0.2, 0.0]) {
        assert!((got - want).abs() < 1e-12);
    }
    let ops = build_operators(&sys).unwrap();
    let from_op = h2_operator_form(&ops).unwrap() * concat(&w);
    for (got, want) in from_op.iter().zip([-0.6, -0.2, 0.0]) {
        assert!((got - want).abs() < 1e-12);
    }
    assert!((traj.total_cost - 0.6).abs() < 1e-12);
    assert_eq!(ctrl.name(), "h2");
}
