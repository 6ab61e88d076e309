//! The inverted-pendulum experiment.
//!
//! Forward-Euler linearisation with unit step and friction `c = 0.1`:
//! `A = [[1, 1], [1, 1 - c]]`, `B_u = [0, 1]'`, `B_w = I`, `Q = I`, `R = 1`.

use serde_json::{json, Value};

use crate::config::{parse_config_value, ExperimentConfig};
use crate::error::Result;

pub const PENDULUM_FRICTION: f64 = 0.1;
pub const PENDULUM_HORIZON: usize = 100;
pub const PENDULUM_TRIALS: usize = 50;
pub const PENDULUM_SEED: u64 = 7;
pub const ALTERNATING_PERIOD: usize = 15;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PendulumMode {
    /// Components drawn independently from `N(0, 1)`.
    Stochastic,
    /// Components drawn from `N(1, 1)` and `N(-1, 1)`, switching every 15 steps.
    Alternating,
}

impl PendulumMode {
    pub fn parse(name: &str) -> Option<Self> {
        match name {
            "stochastic" => Some(PendulumMode::Stochastic),
            "alternating" => Some(PendulumMode::Alternating),
            _ => None,
        }
    }
}

/// The preset as a configuration document.
pub fn pendulum_document(mode: PendulumMode) -> Value {
    let c = PENDULUM_FRICTION;
    let disturbance = match mode {
        PendulumMode::Stochastic => json!({
            "kind": "gaussian",
            "mean": [0.0, 0.0],
            "covariance": [[1.0, 0.0], [0.0, 1.0]],
        }),
        PendulumMode::Alternating => json!({
            "kind": "alternating",
            "mean": 1.0,
            "period": ALTERNATING_PERIOD,
            "variance": 1.0,
        }),
    };
    json!({
        "system": { "lti": {
            "A": [[1.0, 1.0], [1.0, 1.0 - c]],
            "Bu": [[0.0], [1.0]],
            "Bw": [[1.0, 0.0], [0.0, 1.0]],
            "Q": [[1.0, 0.0], [0.0, 1.0]],
            "R": [[1.0]],
            "QT": [[0.0, 0.0], [0.0, 0.0]],
        } },
        "horizon": PENDULUM_HORIZON,
        "controllers": ["h2", { "hinf": "auto" }, { "regret": "auto" }],
        "disturbance": disturbance,
        "trials": PENDULUM_TRIALS,
        "seed": PENDULUM_SEED,
    })
}

pub fn pendulum_config(mode: PendulumMode) -> Result<ExperimentConfig> {
    parse_config_value(pendulum_document(mode))
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;

    #[test]
    fn matrices_match_the_linearisation() {
        let config = pendulum_config(PendulumMode::Stochastic).unwrap();
        let sys = &config.system;
        assert_eq!(sys.horizon(), 100);
        assert_eq!(sys.a(0), &DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 0.9]));
        assert_eq!(sys.bu(0), &DMatrix::from_row_slice(2, 1, &[0.0, 1.0]));
        assert_eq!(sys.bw(0), &DMatrix::identity(2, 2));
        assert_eq!(sys.q(0), &DMatrix::identity(2, 2));
        assert_eq!(sys.r(0), &DMatrix::identity(1, 1));
    }
}
