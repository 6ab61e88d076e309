//! Backward and forward Riccati recursions.
//!
//! * [`backward_lqr`]: the H2 value recursion.
//! * [`backward_hinf`]: the indefinite recursion of the full-information
//!   H-infinity problem, with per-step feasibility margins.
//! * [`forward_kalman`]: Kalman filter for the model
//!   `ξ_{t+1} = A_t ξ_t + B_{u,t} u_t`, `y_t = Q_t^{1/2} ξ_t + v_t`, whose
//!   innovations representation is a causal `L` with `L L' = I + F F'`.
//! * [`backward_kalman`]: backwards-time filter that factors
//!   `γ² I + G'(I + F F')^{-1} G = Δ'Δ` with causal `Δ`.
//!
//! Every iterate is symmetrised after each step.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::linalg::{block_diag, hstack, max_eigenvalue, pd_inv_sqrt, psd_sqrt, shifted_psd_roots, spd_inverse, spd_solve, sym};
use crate::system::{LqSystem, SystemData};

/// Per-step matrices read by the recursions. Implemented for validated
/// plants and for raw [`SystemData`], whose state weight may be indefinite.
pub trait StageModel {
    fn horizon(&self) -> usize;
    fn a(&self, t: usize) -> &DMatrix<f64>;
    fn bu(&self, t: usize) -> &DMatrix<f64>;
    fn bw(&self, t: usize) -> &DMatrix<f64>;
    fn q(&self, t: usize) -> &DMatrix<f64>;
    fn r(&self, t: usize) -> &DMatrix<f64>;
    fn qt(&self) -> &DMatrix<f64>;
    fn disturbance_dim(&self) -> usize {
        self.bw(0).ncols()
    }
}

impl StageModel for LqSystem {
    fn horizon(&self) -> usize {
        LqSystem::horizon(self)
    }
    fn a(&self, t: usize) -> &DMatrix<f64> {
        LqSystem::a(self, t)
    }
    fn bu(&self, t: usize) -> &DMatrix<f64> {
        LqSystem::bu(self, t)
    }
    fn bw(&self, t: usize) -> &DMatrix<f64> {
        LqSystem::bw(self, t)
    }
    fn q(&self, t: usize) -> &DMatrix<f64> {
        LqSystem::q(self, t)
    }
    fn r(&self, t: usize) -> &DMatrix<f64> {
        LqSystem::r(self, t)
    }
    fn qt(&self) -> &DMatrix<f64> {
        LqSystem::qt(self)
    }
    fn disturbance_dim(&self) -> usize {
        LqSystem::disturbance_dim(self)
    }
}

impl StageModel for SystemData {
    fn horizon(&self) -> usize {
        self.a.len()
    }
    fn a(&self, t: usize) -> &DMatrix<f64> {
        &self.a[t]
    }
    fn bu(&self, t: usize) -> &DMatrix<f64> {
        &self.bu[t]
    }
    fn bw(&self, t: usize) -> &DMatrix<f64> {
        &self.bw[t]
    }
    fn q(&self, t: usize) -> &DMatrix<f64> {
        &self.q[t]
    }
    fn r(&self, t: usize) -> &DMatrix<f64> {
        &self.r[t]
    }
    fn qt(&self) -> &DMatrix<f64> {
        &self.qt
    }
}

/// Backward LQR tape: `P_t` for `t = 0..=T`, `H_t` for `t < T`.
#[derive(Debug, Clone)]
pub struct LqrTape {
    pub p: Vec<DMatrix<f64>>,
    pub h: Vec<DMatrix<f64>>,
}

impl LqrTape {
    pub fn horizon(&self) -> usize {
        self.h.len()
    }

    /// Gains `(K_x, K_w)` of `u_t = K_x x_t + K_w w_t`, where
    /// `u_t = -H_t^{-1} B_u' P_{t+1} (A x_t + B_w w_t)`.
    pub fn feedback(&self, sys: &LqSystem, t: usize) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
        feedback_gains(sys, t, &self.p[t + 1], &self.h[t])
    }
}

pub(crate) fn feedback_gains<S: StageModel + ?Sized>(
    sys: &S,
    t: usize,
    p_next: &DMatrix<f64>,
    h: &DMatrix<f64>,
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let bp = sys.bu(t).transpose() * p_next;
    let kx = -spd_solve(h, &(&bp * sys.a(t)), "H_t")?;
    let kw = -spd_solve(h, &(&bp * sys.bw(t)), "H_t")?;
    Ok((kx, kw))
}

/// `S = P - P B_u H^{-1} B_u' P` together with `H = R + B_u' P B_u`.
fn control_schur<S: StageModel + ?Sized>(
    sys: &S,
    t: usize,
    p_next: &DMatrix<f64>,
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let bu = sys.bu(t);
    let h = sym(&(sys.r(t) + bu.transpose() * p_next * bu));
    let pb = p_next * bu;
    let s = p_next - &pb * spd_solve(&h, &pb.transpose(), &format!("H_{t}"))?;
    Ok((sym(&s), h))
}

/// Backward Riccati recursion of the H2 controller from `P_T = terminal`.
pub fn backward_lqr(sys: &LqSystem, terminal: &DMatrix<f64>) -> Result<LqrTape> {
    let horizon = sys.horizon();
    let mut p = vec![DMatrix::zeros(0, 0); horizon + 1];
    let mut h = vec![DMatrix::zeros(0, 0); horizon];
    p[horizon] = sym(terminal);
    for t in (0..horizon).rev() {
        let (s, ht) = control_schur(sys, t, &p[t + 1])?;
        let a = sys.a(t);
        p[t] = sym(&(sys.q(t) + a.transpose() * &s * a));
        h[t] = ht;
    }
    Ok(LqrTape { p, h })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Feasibility {
    Feasible,
    /// The first step (scanning backwards from `T-1`) whose margin is `>= 0`.
    Infeasible { step: usize, margin: f64 },
}

/// Tape of the H-infinity recursion at level `γ`.
///
/// `margins[t] = λ_max(-γ² I + B_w' P_{t+1} B_w - B_w' P_{t+1} B_u H_t^{-1} B_u' P_{t+1} B_w)`.
/// When infeasible, the recursion stops at the failing step: entries of
/// `p`, `h`, `h_hat` and `margins` at or before that step are left empty
/// (zero-sized matrices, `NaN` margins).
#[derive(Debug, Clone)]
pub struct HinfTape {
    pub gamma: f64,
    pub p: Vec<DMatrix<f64>>,
    pub h: Vec<DMatrix<f64>>,
    /// `diag(R_t, -γ² I) + B̂_t' P_{t+1} B̂_t` with `B̂_t = [B_u B_w]`.
    pub h_hat: Vec<DMatrix<f64>>,
    pub margins: Vec<f64>,
    pub feasibility: Feasibility,
}

impl HinfTape {
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

    pub fn feedback<S: StageModel + ?Sized>(&self, sys: &S, t: usize) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
        feedback_gains(sys, t, &self.p[t + 1], &self.h[t])
    }
}

/// Backward H-infinity recursion with `P_T = Q_T`.
///
/// The update is done by eliminating the control first and then the
/// disturbance, which is algebraically identical to the joint `Ĥ_t` form
/// and keeps `P_t` PSD whenever the margin is negative.
pub fn backward_hinf<S: StageModel + ?Sized>(sys: &S, gamma: f64) -> Result<HinfTape> {
    if !(gamma > 0.0 && gamma.is_finite()) {
        return Err(Error::OutOfRange {
            what: "gamma".into(),
            value: gamma,
            bound: "must be positive and finite".into(),
        });
    }
    let horizon = sys.horizon();
    let p_dim = sys.disturbance_dim();
    let g2 = gamma * gamma;
    let mut p = vec![DMatrix::zeros(0, 0); horizon + 1];
    let mut h = vec![DMatrix::zeros(0, 0); horizon];
    let mut h_hat = vec![DMatrix::zeros(0, 0); horizon];
    let mut margins = vec![f64::NAN; horizon];
    p[horizon] = sys.qt().clone();
    for t in (0..horizon).rev() {
        let (s, ht) = control_schur(sys, t, &p[t + 1])?;
        let bw = sys.bw(t);
        let sbw = &s * bw;
        let neg_m = sym(&(DMatrix::identity(p_dim, p_dim) * g2 - bw.transpose() * &sbw));
        let margin = -crate::linalg::min_eigenvalue(&neg_m);
        margins[t] = margin;
        let b_hat = hstack(sys.bu(t), bw);
        h_hat[t] = sym(
            &(block_diag(&[sys.r(t).clone(), DMatrix::identity(p_dim, p_dim) * -g2])
                + b_hat.transpose() * &p[t + 1] * &b_hat),
        );
        h[t] = ht;
        if margin >= 0.0 {
            return Ok(HinfTape {
                gamma,
                p,
                h,
                h_hat,
                margins,
                feasibility: Feasibility::Infeasible { step: t, margin },
            });
        }
        let a = sys.a(t);
        let sa = &s * a;
        let coupling = sbw.transpose() * a;
        let worst = spd_solve(&neg_m, &coupling, "-M_t").map_err(|_| Error::Infeasible {
            gamma,
            step: t,
            margin,
        })?;
        p[t] = sym(&(sys.q(t) + a.transpose() * &sa + coupling.transpose() * worst));
    }
    Ok(HinfTape {
        gamma,
        p,
        h,
        h_hat,
        margins,
        feasibility: Feasibility::Feasible,
    })
}

/// Forward Kalman factorisation of `I + F F'`.
///
/// `p`, `re`, `re_half` have `T + 1` entries (the last belongs to the
/// terminal output row); `kp` and `a_tilde` have `T`.
#[derive(Debug, Clone)]
pub struct ForwardKalmanTape {
    pub p: Vec<DMatrix<f64>>,
    pub re: Vec<DMatrix<f64>>,
    pub re_half: Vec<DMatrix<f64>>,
    pub re_inv: Vec<DMatrix<f64>>,
    pub kp: Vec<DMatrix<f64>>,
    pub a_tilde: Vec<DMatrix<f64>>,
}

/// Runs the forward filter from `P_0 = 0`. Expects `R_t = I`.
pub fn forward_kalman(sys: &LqSystem) -> Result<ForwardKalmanTape> {
    debug_assert!(sys.has_unit_control_weight());
    let horizon = sys.horizon();
    let n = sys.state_dim();
    let mut tape = ForwardKalmanTape {
        p: Vec::with_capacity(horizon + 1),
        re: Vec::with_capacity(horizon + 1),
        re_half: Vec::with_capacity(horizon + 1),
        re_inv: Vec::with_capacity(horizon + 1),
        kp: Vec::with_capacity(horizon),
        a_tilde: Vec::with_capacity(horizon),
    };
    tape.p.push(DMatrix::zeros(n, n));
    for t in 0..=horizon {
        let qh = sys.q_half(t);
        let p = &tape.p[t];
        let re = sym(&(DMatrix::identity(n, n) + qh * p * qh));
        let re_inv = spd_inverse(&re, &format!("R_e_{t}"))?;
        tape.re_half.push(psd_sqrt(&re));
        if t < horizon {
            let a = sys.a(t);
            let bu = sys.bu(t);
            let kp = a * p * qh * &re_inv;
            let next = sym(&(a * p * a.transpose() + bu * bu.transpose() - &kp * &re * kp.transpose()));
            tape.a_tilde.push(a - &kp * qh);
            tape.kp.push(kp);
            tape.p.push(next);
        }
        tape.re.push(re);
        tape.re_inv.push(re_inv);
    }
    Ok(tape)
}

impl ForwardKalmanTape {
    /// Dense `L` (block size `n`, `T + 1` blocks) realised by
    /// `ξ̂_{t+1} = A_t ξ̂_t + K_{p,t} R_{e,t}^{1/2} e_t`, `y_t = Q_t^{1/2} ξ̂_t + R_{e,t}^{1/2} e_t`.
    pub fn factor_matrix(&self, sys: &LqSystem) -> DMatrix<f64> {
        let n = sys.state_dim();
        let blocks = sys.horizon() + 1;
        let mut out = DMatrix::zeros(blocks * n, blocks * n);
        for j in 0..blocks {
            out.view_mut((j * n, j * n), (n, n)).copy_from(&self.re_half[j]);
            if j + 1 < blocks {
                let mut state = &self.kp[j] * &self.re_half[j];
                for i in j + 1..blocks {
                    out.view_mut((i * n, j * n), (n, n)).copy_from(&(sys.q_half(i) * &state));
                    if i < sys.horizon() {
                        state = sys.a(i) * state;
                    }
                }
            }
        }
        out
    }

    /// Dense `L^{-1} G` realised by `ν_{t+1} = Ã_t ν_t + B_{w,t} w_t`,
    /// `e_t = R_{e,t}^{-1/2} Q_t^{1/2} ν_t`.
    pub fn whitened_disturbance_map(&self, sys: &LqSystem) -> Result<DMatrix<f64>> {
        let n = sys.state_dim();
        let p = sys.disturbance_dim();
        let horizon = sys.horizon();
        let out_maps = (0..=horizon)
            .map(|t| Ok(pd_inv_sqrt(&self.re[t], "R_e")? * sys.q_half(t)))
            .collect::<Result<Vec<_>>>()?;
        let mut out = DMatrix::zeros((horizon + 1) * n, horizon * p);
        for j in 0..horizon {
            let mut state = sys.bw(j).clone();
            for i in j + 1..=horizon {
                out.view_mut((i * n, j * p), (n, p)).copy_from(&(&out_maps[i] * &state));
                if i < horizon {
                    state = &self.a_tilde[i] * state;
                }
            }
        }
        Ok(out)
    }
}

/// Backwards-time Kalman factorisation producing `Δ`.
///
/// `pb` has `T + 1` entries with `pb[T] = 0`; `kb`, `rb`, `rb_half`,
/// `rb_inv_half` have `T`.
#[derive(Debug, Clone)]
pub struct BackwardKalmanTape {
    pub gamma: f64,
    pub pb: Vec<DMatrix<f64>>,
    pub kb: Vec<DMatrix<f64>>,
    pub rb: Vec<DMatrix<f64>>,
    pub rb_half: Vec<DMatrix<f64>>,
    pub rb_inv_half: Vec<DMatrix<f64>>,
}

pub fn backward_kalman(sys: &LqSystem, fwd: &ForwardKalmanTape, gamma: f64) -> Result<BackwardKalmanTape> {
    if !(gamma > 0.0 && gamma.is_finite()) {
        return Err(Error::OutOfRange {
            what: "gamma".into(),
            value: gamma,
            bound: "must be positive and finite".into(),
        });
    }
    let horizon = sys.horizon();
    let n = sys.state_dim();
    let g2 = gamma * gamma;
    let output_weight = |t: usize| sym(&(sys.q_half(t) * &fwd.re_inv[t] * sys.q_half(t)));

    let mut pb = vec![DMatrix::zeros(n, n); horizon + 1];
    // The terminal output row has no disturbance of its own, so the step
    // that would consume `pb[T]` reduces to its output weight.
    pb[horizon - 1] = output_weight(horizon);
    let mut kb = vec![DMatrix::zeros(0, 0); horizon];
    let mut rb = vec![DMatrix::zeros(0, 0); horizon];
    let mut rb_half = vec![DMatrix::zeros(0, 0); horizon];
    let mut rb_inv_half = vec![DMatrix::zeros(0, 0); horizon];
    for t in (0..horizon).rev() {
        let bw = sys.bw(t);
        let at = &fwd.a_tilde[t];
        // `pb` is PSD in exact arithmetic; clamping keeps `R^b >= γ² I` when
        // γ² is below the roundoff in `B_w' P^b B_w`.
        let (r, half, inv_half) = shifted_psd_roots(&(bw.transpose() * &pb[t] * bw), g2);
        let k = (&inv_half * &inv_half * bw.transpose() * &pb[t] * at).transpose();
        if t >= 1 {
            pb[t - 1] = sym(&(at.transpose() * &pb[t] * at + output_weight(t) - &k * &r * k.transpose()));
        }
        rb_half[t] = half;
        rb_inv_half[t] = inv_half;
        kb[t] = k;
        rb[t] = r;
    }
    Ok(BackwardKalmanTape {
        gamma,
        pb,
        kb,
        rb,
        rb_half,
        rb_inv_half,
    })
}

impl BackwardKalmanTape {
    /// Dense `Δ` (`T p × T p`) realised by `ν̂_{t+1} = Ã_t ν̂_t + B_{w,t} f_t`,
    /// `z_t = R^b_{e,t}^{1/2} (K^b_{l,t})' ν̂_t + R^b_{e,t}^{1/2} f_t`.
    pub fn factor_matrix(&self, sys: &LqSystem, fwd: &ForwardKalmanTape) -> DMatrix<f64> {
        let p = sys.disturbance_dim();
        let horizon = sys.horizon();
        let out_maps: Vec<DMatrix<f64>> = (0..horizon)
            .map(|t| &self.rb_half[t] * self.kb[t].transpose())
            .collect();
        let mut out = DMatrix::zeros(horizon * p, horizon * p);
        for j in 0..horizon {
            out.view_mut((j * p, j * p), (p, p)).copy_from(&self.rb_half[j]);
            let mut state = sys.bw(j).clone();
            for i in j + 1..horizon {
                out.view_mut((i * p, j * p), (p, p)).copy_from(&(&out_maps[i] * &state));
                state = &fwd.a_tilde[i] * state;
            }
        }
        out
    }
}

/// Smallest eigenvalue across a tape, for PSD assertions.
pub fn min_tape_eigenvalue(tape: &[DMatrix<f64>]) -> f64 {
    tape.iter()
        .filter(|m| m.nrows() > 0)
        .map(|m| -max_eigenvalue(&(-m)))
        .fold(f64::INFINITY, f64::min)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::system::{validate_system, SystemData};
    use approx::assert_relative_eq;

    fn scalar(v: f64) -> DMatrix<f64> {
        DMatrix::from_element(1, 1, v)
    }

    fn s1() -> LqSystem {
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

    #[test]
    fn lqr_tape_on_s1() {
        let sys = s1();
        let tape = backward_lqr(&sys, sys.qt()).unwrap();
        let p: Vec<f64> = tape.p.iter().map(|m| m[(0, 0)]).collect();
        for (got, want) in p.iter().zip([1.6, 1.5, 1.0, 0.0]) {
            assert_relative_eq!(*got, want, epsilon = 1e-14);
        }
    }

    #[test]
    fn zero_state_weight_gives_zero_tape() {
        let mut d = s1().into_data();
        d.q = vec![scalar(0.0); 3];
        let sys = validate_system(d).unwrap();
        let tape = backward_lqr(&sys, sys.qt()).unwrap();
        assert!(tape.p.iter().all(|m| m[(0, 0)] == 0.0));
    }

    #[test]
    fn hinf_large_gamma_is_feasible_and_close_to_h2() {
        let sys = s1();
        let hinf = backward_hinf(&sys, 1e6).unwrap();
        assert!(hinf.is_feasible());
        let h2 = backward_lqr(&sys, sys.qt()).unwrap();
        for t in 0..3 {
            let (kx, kw) = hinf.feedback(&sys, t).unwrap();
            let (kx2, kw2) = h2.feedback(&sys, t).unwrap();
            assert_relative_eq!(kx, kx2, epsilon = 1e-4);
            assert_relative_eq!(kw, kw2, epsilon = 1e-4);
        }
    }

    #[test]
    fn hinf_tiny_gamma_is_infeasible() {
        let sys = s1();
        let tape = backward_hinf(&sys, 1e-9).unwrap();
        assert!(matches!(tape.feasibility, Feasibility::Infeasible { .. }));
    }

    #[test]
    fn hinf_rejects_nonpositive_gamma() {
        assert!(backward_hinf(&s1(), 0.0).is_err());
        assert!(backward_hinf(&s1(), -1.0).is_err());
    }

    #[test]
    fn hinf_feasibility_is_monotone_on_grid() {
        let sys = s1();
        let flags: Vec<bool> = (1..=20)
            .map(|k| backward_hinf(&sys, 0.1 * k as f64).unwrap().is_feasible())
            .collect();
        let first = flags.iter().position(|&f| f).expect("some level is feasible");
        assert!(flags[first..].iter().all(|&f| f), "{flags:?}");
        assert!(first > 0);
    }

    #[test]
    fn forward_kalman_without_control_is_identity() {
        let mut d = s1().into_data();
        d.bu = vec![scalar(0.0); 3];
        let sys = validate_system(d).unwrap();
        let tape = forward_kalman(&sys).unwrap();
        assert!(tape.p.iter().all(|m| m[(0, 0)] == 0.0));
        assert_eq!(tape.factor_matrix(&sys), DMatrix::identity(4, 4));
    }

    #[test]
    fn backward_kalman_without_state_weight_is_scaled_identity() {
        let mut d = s1().into_data();
        d.q = vec![scalar(0.0); 3];
        let sys = validate_system(d).unwrap();
        let fwd = forward_kalman(&sys).unwrap();
        let bwd = backward_kalman(&sys, &fwd, 2.0).unwrap();
        assert_relative_eq!(bwd.factor_matrix(&sys, &fwd), DMatrix::identity(3, 3) * 2.0, epsilon = 1e-15);
    }
}
