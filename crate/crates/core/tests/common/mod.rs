#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use regret_core::sim::{random_system, RandomSystemOptions};
use regret_core::system::validate_system;
use regret_core::{LqSystem, SystemData};

pub fn scalar(v: f64) -> DMatrix<f64> {
    DMatrix::from_element(1, 1, v)
}

/// Scalar plant `x_{t+1} = x_t + u_t + w_t`, `Q = R = 1`, `T = 3`.
pub fn s1() -> LqSystem {
    validate_system(SystemData::time_invariant(
        scalar(1.0),
        scalar(1.0),
        scalar(1.0),
        scalar(1.0),
        scalar(1.0),
        scalar(0.0),
        3,
    ))
    .unwrap()
}

pub fn seq(vals: &[f64]) -> Vec<DVector<f64>> {
    vals.iter().map(|v| DVector::from_element(1, *v)).collect()
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// `count` random plants with dimensions at most 3 and horizon at most 15.
pub fn random_systems(seed: u64, count: usize, max_horizon: usize) -> Vec<LqSystem> {
    use rand::Rng;
    let mut r = rng(seed);
    (0..count)
        .map(|k| {
            let n = r.random_range(1..=3);
            let m = r.random_range(1..=3);
            let p = r.random_range(1..=3);
            let horizon = r.random_range(2..=max_horizon);
            let opts = RandomSystemOptions {
                time_varying: k % 2 == 0,
                general_control_weight: k % 3 != 0,
                terminal_weight: k % 4 != 1,
                ..RandomSystemOptions::default()
            };
            random_system(&mut r, n, m, p, horizon, opts)
        })
        .collect()
}

pub fn gaussian_sequence(r: &mut ChaCha8Rng, horizon: usize, p: usize) -> Vec<DVector<f64>> {
    use rand::Rng;
    use rand_distr::StandardNormal;
    (0..horizon)
        .map(|_| DVector::from_fn(p, |_, _| r.sample::<f64, _>(StandardNormal)))
        .collect()
}
