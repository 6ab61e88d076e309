//! Controller syntheses and the common runtime interface.

mod bisection;
mod feedback;
mod offline;
mod regret;

use nalgebra::{DMatrix, DVector};

use crate::error::Result;
use crate::system::LqSystem;

pub use bisection::{bisect_level, disturbance_reaches_cost, BracketStep, GammaSearchResult, LOWER_BRACKET};
pub use feedback::{hinf_optimal, synthesize_h2, synthesize_hinf, FeedbackController};
pub use offline::{offline_noncausal, OfflineController};
pub use regret::{
    regret_game, regret_optimal, synthesize_regret, FeasibilityTest, RegretController, RegretProblem, RegretSynthesis,
    StructureReport,
};

/// A controller run step by step against a plant.
///
/// At step `t` the controller sees the current state and the disturbances
/// `w_0..=w_{min(t + lookahead, T-1)}`.
pub trait Controller: Send + Sync {
    fn name(&self) -> &str;

    /// Number of future disturbances the controller needs; `0` is causal and
    /// `usize::MAX` means the whole sequence.
    fn lookahead(&self) -> usize {
        0
    }

    /// Clears internal state before a new rollout.
    fn reset(&mut self);

    fn act(&mut self, t: usize, x: &DVector<f64>, w: &[DVector<f64>]) -> Result<DVector<f64>>;

    fn boxed(&self) -> Box<dyn Controller>;

    /// Gains of a linear state-feedback law, if the controller is one.
    fn gain_schedule(&self) -> Option<GainSchedule> {
        None
    }
}

/// `u_t = K_{ξ,t} ξ_t + K_{w,t} w_t` in original control coordinates, where
/// `ξ_t` is the state the controller reads (described by `state`).
#[derive(Debug, Clone, PartialEq)]
pub struct GainSchedule {
    pub state: String,
    pub gains: Vec<(DMatrix<f64>, DMatrix<f64>)>,
}

impl Clone for Box<dyn Controller> {
    fn clone(&self) -> Self {
        self.boxed()
    }
}

#[derive(Debug, Clone)]
pub struct ZeroController {
    m: usize,
}

impl ZeroController {
    pub fn new(m: usize) -> Self {
        ZeroController { m }
    }
}

impl Controller for ZeroController {
    fn name(&self) -> &str {
        "zero"
    }
    fn reset(&mut self) {}
    fn act(&mut self, _t: usize, _x: &DVector<f64>, _w: &[DVector<f64>]) -> Result<DVector<f64>> {
        Ok(DVector::zeros(self.m))
    }
    fn boxed(&self) -> Box<dyn Controller> {
        Box::new(self.clone())
    }
}

/// Attenuation level: fixed, or the smallest feasible one found by bisection.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Level {
    Auto,
    Fixed(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ControllerSpec {
    Zero,
    H2,
    Hinf(Level),
    Regret(Level, FeasibilityTest),
    Offline,
}

impl ControllerSpec {
    pub fn label(&self) -> &'static str {
        match self {
            ControllerSpec::Zero => "zero",
            ControllerSpec::H2 => "h2",
            ControllerSpec::Hinf(_) => "hinf",
            ControllerSpec::Regret(..) => "regret",
            ControllerSpec::Offline => "offline",
        }
    }

    /// Synthesises the controller on `sys`; `tol` is the bisection tolerance.
    pub fn build(&self, sys: &LqSystem, tol: f64) -> Result<BuiltController> {
        let (controller, gamma, search): (Box<dyn Controller>, _, _) = match *self {
            ControllerSpec::Zero => (Box::new(ZeroController::new(sys.control_dim())), None, None),
            ControllerSpec::H2 => (Box::new(synthesize_h2(sys)?), None, None),
            ControllerSpec::Offline => (Box::new(OfflineController::new(sys)?), None, None),
            ControllerSpec::Hinf(Level::Fixed(g)) => (Box::new(synthesize_hinf(sys, g)?), Some(g), None),
            ControllerSpec::Hinf(Level::Auto) => {
                let (search, ctrl) = hinf_optimal(sys, tol)?;
                (ctrl, Some(search.gamma_opt), Some(search))
            }
            ControllerSpec::Regret(Level::Fixed(g), test) => {
                let synthesis = synthesize_regret(sys, g, test)?;
                (synthesis.controller()?, Some(g), None)
            }
            ControllerSpec::Regret(Level::Auto, test) => {
                let (search, ctrl) = regret_optimal(sys, tol, test)?;
                (ctrl, Some(search.gamma_opt), Some(search))
            }
        };
        Ok(BuiltController {
            controller,
            gamma,
            search,
        })
    }
}

pub struct BuiltController {
    pub controller: Box<dyn Controller>,
    /// Attenuation level the controller was synthesised at, if any.
    pub gamma: Option<f64>,
    pub search: Option<GammaSearchResult>,
}
