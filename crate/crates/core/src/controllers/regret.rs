//! Regret-optimal synthesis.
//!
//! The regret bound `cost(u, w) - cost(u*, w) <= γ² ‖w‖²` is equivalent to
//! `cost(u, w) <= ‖Δ w‖²`, where `Δ'Δ = γ² I + G'(I + F F')^{-1} G` is the
//! causal factor computed by the backward Kalman filter. Writing the plant
//! in terms of `z = Δ w` with augmented state `[x; ν̂]` turns the problem
//! into a full-information H-infinity problem at level one.
//!
//! The same problem written in the original disturbance is the game
//! [`regret_game`]: state `[x; ν]`, weight `diag(Q, -Q^{1/2} R_e^{-1} Q^{1/2})`,
//! level `γ`. Its recursion avoids the `R^{b,-1/2}` scaling, which grows
//! like `1/γ`, and is used for the default feasibility test and gains.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use super::bisection::{bisect_level, disturbance_reaches_cost, GammaSearchResult};
use super::offline::{offline_is_causal, OfflineController};
use super::{Controller, GainSchedule};
use crate::error::{Error, Result};
use crate::linalg::{block_diag, block2, max_abs, spd_solve, sym, vstack};
use crate::riccati::{
    backward_hinf, backward_kalman, backward_lqr, forward_kalman, BackwardKalmanTape, Feasibility, ForwardKalmanTape,
    HinfTape, LqrTape,
};
use crate::system::{normalize_control_weight, validate_system, ControlScaling, LqSystem, SystemData};

/// Which recursion decides feasibility and supplies the gains.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FeasibilityTest {
    /// H-infinity recursion at level one, evaluated in `w` coordinates
    /// (see [`regret_game`]).
    #[default]
    Level1,
    /// LQR-type recursion on the transformed plant with the margin
    /// `-γ² I + B̂_w' Ŝ B̂_w`.
    Printed,
}

/// State shared by every level tried for one plant.
#[derive(Debug, Clone)]
pub struct RegretProblem {
    base: Arc<LqSystem>,
    scaling: Arc<ControlScaling>,
    forward: Arc<ForwardKalmanTape>,
    lqr: Arc<LqrTape>,
    game: Arc<SystemData>,
    zero_regret: bool,
}

impl RegretProblem {
    pub fn new(sys: &LqSystem) -> Result<Self> {
        let (base, scaling) = normalize_control_weight(sys);
        let forward = forward_kalman(&base)?;
        let lqr = backward_lqr(&base, base.qt())?;
        let zero_regret = !disturbance_reaches_cost(&base) || offline_is_causal(&base)?;
        Ok(RegretProblem {
            game: Arc::new(regret_game(&base, &forward)),
            base: Arc::new(base),
            scaling: Arc::new(scaling),
            forward: Arc::new(forward),
            lqr: Arc::new(lqr),
            zero_regret,
        })
    }

    /// Plant with unit control weight on which the synthesis runs.
    pub fn normalized(&self) -> &LqSystem {
        &self.base
    }

    pub fn forward(&self) -> &ForwardKalmanTape {
        &self.forward
    }

    /// Whether a causal controller attains zero regret, i.e. the clairvoyant
    /// policy never uses future disturbances.
    pub fn has_zero_regret(&self) -> bool {
        self.zero_regret
    }

    /// Feasibility and margins at `gamma` without building the controller.
    pub fn feasibility(&self, gamma: f64, test: FeasibilityTest) -> Result<(bool, Vec<f64>)> {
        match test {
            FeasibilityTest::Level1 => {
                let tape = backward_hinf(&*self.game, gamma)?;
                Ok((tape.is_feasible(), tape.margins))
            }
            FeasibilityTest::Printed => {
                let syn = self.synthesize(gamma, test)?;
                Ok((syn.is_feasible(), syn.margins))
            }
        }
    }

    pub fn synthesize(&self, gamma: f64, test: FeasibilityTest) -> Result<RegretSynthesis> {
        let backward = backward_kalman(&self.base, &self.forward, gamma)?;
        let transformed = transformed_system(&self.base, &self.forward, &backward)?;
        let printed = backward_lqr(&transformed, transformed.qt())?;
        let game_tape = backward_hinf(&*self.game, gamma)?;
        let (margins, feasibility) = match test {
            FeasibilityTest::Level1 => (game_tape.margins.clone(), game_tape.feasibility),
            FeasibilityTest::Printed => printed_margins(&transformed, &printed, gamma)?,
        };
        let mut syn = RegretSynthesis {
            gamma,
            test,
            base: self.base.clone(),
            scaling: self.scaling.clone(),
            forward: self.forward.clone(),
            lqr: self.lqr.clone(),
            game: self.game.clone(),
            backward,
            transformed,
            printed,
            game_tape,
            margins,
            feasibility,
            gains: Vec::new(),
        };
        if syn.is_feasible() {
            syn.gains = (0..syn.base.horizon())
                .map(|t| match test {
                    FeasibilityTest::Level1 => syn.game_tape.feedback(&*syn.game, t),
                    FeasibilityTest::Printed => {
                        let z_gains = syn.printed.feedback(&syn.transformed, t)?;
                        Ok(syn.to_w_coordinates(t, z_gains))
                    }
                })
                .collect::<Result<Vec<_>>>()?;
        }
        Ok(syn)
    }

    /// Bisects for the optimal level. Returns no synthesis when zero regret
    /// is attainable; the optimum is then the clairvoyant policy itself.
    pub fn optimal(&self, tol: f64, test: FeasibilityTest) -> Result<(GammaSearchResult, Option<RegretSynthesis>)> {
        if self.zero_regret {
            return Ok((GammaSearchResult::degenerate(), None));
        }
        let search = bisect_level(tol, |g| self.feasibility(g, test))?;
        let syn = self.synthesize(search.gamma_opt, test)?;
        Ok((search, Some(syn)))
    }
}

/// `Â_t = [[A, -B_w K^b'], [0, Ã - B_w K^b']]`, `B̂_u = [B_u; 0]`,
/// `B̂_w = [B_w; B_w] R^{b,-1/2}`, `Q̂ = diag(Q, 0)`, `R̂ = I`.
fn transformed_system(
    base: &LqSystem,
    fwd: &ForwardKalmanTape,
    bwd: &BackwardKalmanTape,
) -> Result<LqSystem> {
    let (horizon, n, m) = (base.horizon(), base.state_dim(), base.control_dim());
    let zero_n = DMatrix::zeros(n, n);
    let mut data = SystemData {
        a: Vec::with_capacity(horizon),
        bu: Vec::with_capacity(horizon),
        bw: Vec::with_capacity(horizon),
        q: Vec::with_capacity(horizon),
        r: Vec::with_capacity(horizon),
        qt: block_diag(&[base.qt().clone(), zero_n.clone()]),
    };
    for t in 0..horizon {
        let bw = base.bw(t);
        let feedthrough = bw * bwd.kb[t].transpose();
        data.a.push(block2(base.a(t), &(-&feedthrough), &zero_n, &(&fwd.a_tilde[t] - &feedthrough)));
        data.bu.push(vstack(base.bu(t), &DMatrix::zeros(n, m)));
        let scaled = bw * &bwd.rb_inv_half[t];
        data.bw.push(vstack(&scaled, &scaled));
        data.q.push(block_diag(&[base.q(t).clone(), zero_n.clone()]));
        data.r.push(DMatrix::identity(m, m));
    }
    validate_system(data)
}

/// Plant on `[x; ν]` driven by `w`, with `ν_{t+1} = Ã_t ν_t + B_{w,t} w_t`
/// and state weight `diag(Q_t, -Q_t^{1/2} R_{e,t}^{-1} Q_t^{1/2})`, so that the
/// stage sum is `cost(u, w) - w'G'(I + F F')^{-1} G w`.
pub fn regret_game(base: &LqSystem, fwd: &ForwardKalmanTape) -> SystemData {
    let (horizon, n, m) = (base.horizon(), base.state_dim(), base.control_dim());
    let penalty = |t: usize| -sym(&(base.q_half(t) * &fwd.re_inv[t] * base.q_half(t)));
    let mut data = SystemData {
        a: Vec::with_capacity(horizon),
        bu: Vec::with_capacity(horizon),
        bw: Vec::with_capacity(horizon),
        q: Vec::with_capacity(horizon),
        r: Vec::with_capacity(horizon),
        qt: block_diag(&[base.qt().clone(), penalty(horizon)]),
    };
    for t in 0..horizon {
        data.a.push(block_diag(&[base.a(t).clone(), fwd.a_tilde[t].clone()]));
        data.bu.push(vstack(base.bu(t), &DMatrix::zeros(n, m)));
        data.bw.push(vstack(base.bw(t), base.bw(t)));
        data.q.push(block_diag(&[base.q(t).clone(), penalty(t)]));
        data.r.push(DMatrix::identity(m, m));
    }
    data
}

fn printed_margins(
    sys: &LqSystem,
    tape: &LqrTape,
    gamma: f64,
) -> Result<(Vec<f64>, Feasibility)> {
    let p_dim = sys.disturbance_dim();
    let mut margins = vec![f64::NAN; sys.horizon()];
    let mut feasibility = Feasibility::Feasible;
    for t in (0..sys.horizon()).rev() {
        let p = &tape.p[t + 1];
        let pb = p * sys.bu(t);
        let s = p - &pb * spd_solve(&tape.h[t], &pb.transpose(), "Ĥ_t")?;
        let bw = sys.bw(t);
        let m = sym(&(bw.transpose() * s * bw - DMatrix::identity(p_dim, p_dim) * (gamma * gamma)));
        let margin = crate::linalg::max_eigenvalue(&m);
        margins[t] = margin;
        if margin >= 0.0 && feasibility == Feasibility::Feasible {
            feasibility = Feasibility::Infeasible { step: t, margin };
        }
    }
    Ok((margins, feasibility))
}

/// Everything computed for one level `γ`.
#[derive(Debug, Clone)]
pub struct RegretSynthesis {
    pub gamma: f64,
    pub test: FeasibilityTest,
    base: Arc<LqSystem>,
    scaling: Arc<ControlScaling>,
    forward: Arc<ForwardKalmanTape>,
    lqr: Arc<LqrTape>,
    game: Arc<SystemData>,
    pub backward: BackwardKalmanTape,
    /// Plant in `(ζ, ν̂)` coordinates driven by `z = Δ w`.
    pub transformed: LqSystem,
    /// LQR-type tape on the transformed plant, `P̂_T = diag(Q_T, 0)`.
    pub printed: LqrTape,
    /// H-infinity tape of [`regret_game`] at level `γ`.
    pub game_tape: HinfTape,
    pub margins: Vec<f64>,
    pub feasibility: Feasibility,
    /// `(K_ξ, K_w)` per step, in normalised control coordinates.
    gains: Vec<(DMatrix<f64>, DMatrix<f64>)>,
}

impl RegretSynthesis {
    pub fn is_feasible(&self) -> bool {
        self.feasibility == Feasibility::Feasible
    }

    pub fn worst_margin(&self) -> f64 {
        self.margins
            .iter()
            .copied()
            .filter(|m| !m.is_nan())
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn forward(&self) -> &ForwardKalmanTape {
        &self.forward
    }

    pub fn game(&self) -> &SystemData {
        &self.game
    }

    /// Gains `(K_ξ, K_w)` of `u'_t = K_ξ [x_t; ν_t] + K_w w_t`.
    pub fn gains(&self) -> &[(DMatrix<f64>, DMatrix<f64>)] {
        &self.gains
    }

    /// Rewrites `u' = K_ξ ξ + K_z z` with `z = R^{b,1/2} (K^b' ν + w)` in terms of `w`.
    fn to_w_coordinates(
        &self,
        t: usize,
        (k_xi, k_z): (DMatrix<f64>, DMatrix<f64>),
    ) -> (DMatrix<f64>, DMatrix<f64>) {
        let n = self.base.state_dim();
        let k_w = &k_z * &self.backward.rb_half[t];
        let mut k = k_xi;
        let extra = &k_w * self.backward.kb[t].transpose();
        let mut nu = k.columns_mut(n, n);
        nu += extra;
        (k, k_w)
    }

    pub fn controller(&self) -> Result<Box<dyn Controller>> {
        if let Feasibility::Infeasible { step, margin } = self.feasibility {
            return Err(Error::Infeasible {
                gamma: self.gamma,
                step,
                margin,
            });
        }
        Ok(Box::new(RegretController {
            synthesis: Arc::new(self.clone()),
            nu: DVector::zeros(self.base.state_dim()),
        }))
    }

    /// Checks the block structure of the transformed tapes: the upper-left
    /// block of the LQR-type tape equals the plain LQR tape, the level-one
    /// gains on the transformed plant agree with their block expansion, and
    /// (when feasible) they coincide with the gains in use.
    pub fn structure_check(&self) -> Result<StructureReport> {
        let (horizon, n) = (self.base.horizon(), self.base.state_dim());
        let mut h2_block = 0.0_f64;
        for t in 0..=horizon {
            let p11 = self.printed.p[t].view((0, 0), (n, n)).into_owned();
            let reference = &self.lqr.p[t];
            h2_block = h2_block.max(max_abs(&(p11 - reference)) / (1.0 + max_abs(reference)));
        }
        let level_one = backward_hinf(&self.transformed, 1.0)?;
        let mut h2_gain = 0.0_f64;
        let mut expansion = 0.0_f64;
        let mut coordinates = 0.0_f64;
        for t in 0..horizon {
            let (kx, _) = self.lqr.feedback(&self.base, t)?;
            let (k_zeta, _, _) = self.block_gains(t, &self.printed.p[t + 1], &self.printed.h[t])?;
            h2_gain = h2_gain.max(max_abs(&(k_zeta - &kx)) / (1.0 + max_abs(&kx)));
            if level_one.is_feasible() {
                let full = level_one.feedback(&self.transformed, t)?;
                let (k_zeta, k_nu, k_z) = self.block_gains(t, &level_one.p[t + 1], &level_one.h[t])?;
                let scale = 1.0 + max_abs(&full.0).max(max_abs(&full.1));
                let d1 = max_abs(&(full.0.columns(0, n).into_owned() - k_zeta));
                let d2 = max_abs(&(full.0.columns(n, n).into_owned() - k_nu));
                let d3 = max_abs(&(&full.1 - k_z));
                expansion = expansion.max(d1.max(d2).max(d3) / scale);
                if self.is_feasible() && self.test == FeasibilityTest::Level1 {
                    let (k_xi, k_w) = self.to_w_coordinates(t, full);
                    let (a_xi, a_w) = &self.gains[t];
                    let scale = 1.0 + max_abs(a_xi).max(max_abs(a_w));
                    let d = max_abs(&(k_xi - a_xi)).max(max_abs(&(k_w - a_w)));
                    coordinates = coordinates.max(d / scale);
                }
            }
        }
        let report = StructureReport {
            h2_block_residual: h2_block,
            h2_gain_residual: h2_gain,
            expansion_residual: expansion,
            coordinate_residual: coordinates,
        };
        // The z-coordinate recursion loses accuracy like 1/|margin| near the
        // boundary, so that comparison gets a looser bound there.
        let margin = level_one
            .margins
            .iter()
            .copied()
            .filter(|m| m.is_finite())
            .fold(f64::NEG_INFINITY, f64::max);
        let coordinate_bound = 1e-8 * (1.0 + 1.0 / margin.abs().max(1e-12)).min(1e4);
        for (what, residual, bound) in [
            ("upper-left block of the transformed tape", h2_block, 1e-8),
            ("block expansion of the regret gains", expansion, 1e-8),
            ("level-one gains in z and w coordinates", coordinates, coordinate_bound),
        ] {
            if residual > bound {
                return Err(Error::StructuralMismatch {
                    what: what.into(),
                    residual,
                });
            }
        }
        Ok(report)
    }

    /// `u' = K_ζ ζ + K_ν ν̂ + K_z z` from the blocks of `P̂_{t+1}`:
    /// `K_ζ = -Ĥ^{-1} B_u' P11 A`,
    /// `K_ν = -Ĥ^{-1} B_u' (P12 (Ã - B_w K^b') - P11 B_w K^b')`,
    /// `K_z = -Ĥ^{-1} B_u' (P11 + P12) B_w R^{b,-1/2}`.
    fn block_gains(
        &self,
        t: usize,
        p: &DMatrix<f64>,
        h: &DMatrix<f64>,
    ) -> Result<(DMatrix<f64>, DMatrix<f64>, DMatrix<f64>)> {
        let n = self.base.state_dim();
        let p11 = p.view((0, 0), (n, n)).into_owned();
        let p12 = p.view((0, n), (n, n)).into_owned();
        let bu_t = self.base.bu(t).transpose();
        let bw = self.base.bw(t);
        let feedthrough = bw * self.backward.kb[t].transpose();
        let k_zeta = -spd_solve(h, &(&bu_t * &p11 * self.base.a(t)), "Ĥ_t")?;
        let nu_map = &p12 * (&self.forward.a_tilde[t] - &feedthrough) - &p11 * &feedthrough;
        let k_nu = -spd_solve(h, &(&bu_t * nu_map), "Ĥ_t")?;
        let k_z = -spd_solve(h, &(&bu_t * (&p11 + &p12) * bw * &self.backward.rb_inv_half[t]), "Ĥ_t")?;
        Ok((k_zeta, k_nu, k_z))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StructureReport {
    /// `max_t ‖P̂_{11,t} - P_t‖ / (1 + ‖P_t‖)` for the LQR-type tape.
    pub h2_block_residual: f64,
    /// Same comparison for the state-feedback gain on `ζ`.
    pub h2_gain_residual: f64,
    /// Mismatch between level-one gains and their block expansion.
    pub expansion_residual: f64,
    /// Mismatch between level-one gains mapped to `w` coordinates and the
    /// gains in use.
    pub coordinate_residual: f64,
}

/// Runs the regret-optimal policy. Keeps the disturbance state
/// `ν_{t+1} = Ã_t ν_t + B_{w,t} w_t` and reads `x_t` from the plant.
#[derive(Debug, Clone)]
pub struct RegretController {
    synthesis: Arc<RegretSynthesis>,
    nu: DVector<f64>,
}

impl RegretController {
    pub fn synthesis(&self) -> &RegretSynthesis {
        &self.synthesis
    }
}

impl Controller for RegretController {
    fn name(&self) -> &str {
        "regret"
    }
    fn reset(&mut self) {
        self.nu.fill(0.0);
    }
    fn act(&mut self, t: usize, x: &DVector<f64>, w: &[DVector<f64>]) -> Result<DVector<f64>> {
        let syn = &*self.synthesis;
        let (k_xi, k_w) = syn.gains.get(t).ok_or(Error::OutOfRange {
            what: "t".into(),
            value: t as f64,
            bound: format!("< {}", syn.gains.len()),
        })?;
        let w_t = &w[t];
        let n = x.len();
        let u = k_xi.columns(0, n) * x + k_xi.columns(n, n) * &self.nu + k_w * w_t;
        self.nu = &syn.forward.a_tilde[t] * &self.nu + syn.base.bw(t) * w_t;
        Ok(syn.scaling.to_original(t, &u))
    }
    fn boxed(&self) -> Box<dyn Controller> {
        Box::new(self.clone())
    }
    fn gain_schedule(&self) -> Option<GainSchedule> {
        let syn = &*self.synthesis;
        let gains = syn
            .gains
            .iter()
            .enumerate()
            .map(|(t, (k_xi, k_w))| {
                let back = syn.scaling.r_inv_half(t);
                (back * k_xi, back * k_w)
            })
            .collect();
        Some(GainSchedule {
            state: "[x; nu]".into(),
            gains,
        })
    }
}

pub fn synthesize_regret(sys: &LqSystem, gamma: f64, test: FeasibilityTest) -> Result<RegretSynthesis> {
    RegretProblem::new(sys)?.synthesize(gamma, test)
}

/// Bisects for the optimal regret level and returns the controller at the
/// upper end of the final bracket.
pub fn regret_optimal(
    sys: &LqSystem,
    tol: f64,
    test: FeasibilityTest,
) -> Result<(GammaSearchResult, Box<dyn Controller>)> {
    let (search, syn) = RegretProblem::new(sys)?.optimal(tol, test)?;
    let ctrl = match syn {
        Some(syn) => syn.controller()?,
        None => Box::new(OfflineController::new(sys)?.into_causal("regret")),
    };
    Ok((search, ctrl))
}
