use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use super::bisection::{bisect_level, disturbance_reaches_cost, GammaSearchResult};
use super::{Controller, GainSchedule, ZeroController};
use crate::error::{Error, Result};
use crate::riccati::{backward_hinf, backward_lqr, Feasibility};
use crate::system::LqSystem;

/// Full-information state feedback `u_t = K_{x,t} x_t + K_{w,t} w_t`.
#[derive(Debug, Clone)]
pub struct FeedbackController {
    name: String,
    gains: Arc<Vec<(DMatrix<f64>, DMatrix<f64>)>>,
}

impl FeedbackController {
    pub fn new(name: impl Into<String>, gains: Vec<(DMatrix<f64>, DMatrix<f64>)>) -> Self {
        FeedbackController {
            name: name.into(),
            gains: Arc::new(gains),
        }
    }

    pub fn gains(&self) -> &[(DMatrix<f64>, DMatrix<f64>)] {
        &self.gains
    }
}

impl Controller for FeedbackController {
    fn name(&self) -> &str {
        &self.name
    }
    fn reset(&mut self) {}
    fn act(&mut self, t: usize, x: &DVector<f64>, w: &[DVector<f64>]) -> Result<DVector<f64>> {
        let (kx, kw) = self.gains.get(t).ok_or(Error::OutOfRange {
            what: "t".into(),
            value: t as f64,
            bound: format!("< {}", self.gains.len()),
        })?;
        Ok(kx * x + kw * &w[t])
    }
    fn boxed(&self) -> Box<dyn Controller> {
        Box::new(self.clone())
    }
    fn gain_schedule(&self) -> Option<GainSchedule> {
        Some(GainSchedule {
            state: "x".into(),
            gains: self.gains.to_vec(),
        })
    }
}

/// The H2 (LQR with current-disturbance preview) controller.
pub fn synthesize_h2(sys: &LqSystem) -> Result<FeedbackController> {
    let tape = backward_lqr(sys, sys.qt())?;
    let gains = (0..sys.horizon())
        .map(|t| tape.feedback(sys, t))
        .collect::<Result<Vec<_>>>()?;
    Ok(FeedbackController::new("h2", gains))
}

/// H-infinity controller at level `gamma`; fails with `Infeasible` if the
/// recursion breaks down.
pub fn synthesize_hinf(sys: &LqSystem, gamma: f64) -> Result<FeedbackController> {
    let tape = backward_hinf(sys, gamma)?;
    if let Feasibility::Infeasible { step, margin } = tape.feasibility {
        return Err(Error::Infeasible { gamma, step, margin });
    }
    let gains = (0..sys.horizon())
        .map(|t| tape.feedback(sys, t))
        .collect::<Result<Vec<_>>>()?;
    Ok(FeedbackController::new("hinf", gains))
}

/// Bisects for the optimal H-infinity level and returns the controller at
/// the upper end of the final bracket.
pub fn hinf_optimal(sys: &LqSystem, tol: f64) -> Result<(GammaSearchResult, Box<dyn Controller>)> {
    if !disturbance_reaches_cost(sys) {
        return Ok((GammaSearchResult::degenerate(), Box::new(ZeroController::new(sys.control_dim()))));
    }
    let search = bisect_level(tol, |g| {
        let tape = backward_hinf(sys, g)?;
        Ok((tape.is_feasible(), tape.margins))
    })?;
    let ctrl = synthesize_hinf(sys, search.gamma_opt)?;
    Ok((search, Box::new(ctrl)))
}
