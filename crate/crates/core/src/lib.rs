//! Finite-horizon linear-quadratic control synthesis.
//!
//! The crate builds four controllers for a time-varying plant
//! `x_{t+1} = A_t x_t + B_{u,t} u_t + B_{w,t} w_t` with quadratic cost:
//!
//! * the H2 (LQR) controller,
//! * the suboptimal and optimal H-infinity controllers,
//! * the clairvoyant (noncausal) controller that sees the whole disturbance,
//! * the regret-optimal causal controller, which minimises the worst-case
//!   ratio between its excess cost over the clairvoyant controller and the
//!   disturbance energy.
//!
//! The regret-optimal controller is obtained by rewriting the regret problem
//! as an H-infinity problem on a `2n`-dimensional system whose construction
//! needs two Kalman-filter spectral factorizations (see [`riccati`]).
//!
//! [`oracle`] contains dense block-operator versions of every object so each
//! state-space result can be checked independently at small sizes.

pub mod augmentation;
pub mod controllers;
pub mod error;
pub mod linalg;
pub mod oracle;
pub mod riccati;
pub mod sim;
pub mod system;

pub use error::{Error, Result};
pub use system::{LqSystem, SystemData, Trajectory};
