use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use super::Controller;
use crate::error::{Error, Result};
use crate::linalg::{max_abs, spd_solve, spd_solve_vec, sym};
use crate::riccati::{backward_lqr, LqrTape};
use crate::system::LqSystem;

/// Clairvoyant optimum for a known disturbance sequence, via the LQR tape
/// and an affine backward correction `v_t`:
/// `u_t = -H_t^{-1} B_u' (P_{t+1}(A x_t + B_w w_t) + v_{t+1} / 2)`.
#[derive(Debug, Clone)]
pub struct OfflineController {
    sys: Arc<LqSystem>,
    tape: Arc<LqrTape>,
    /// `S_{t+1} = P - P B_u H^{-1} B_u' P` and `P B_u H^{-1} B_u'` per step.
    schur: Arc<Vec<(DMatrix<f64>, DMatrix<f64>)>>,
    v: Vec<DVector<f64>>,
    /// Replan every step from `w_0..=w_t` with the future set to zero.
    causal: Option<&'static str>,
}

impl OfflineController {
    pub fn new(sys: &LqSystem) -> Result<Self> {
        let tape = backward_lqr(sys, sys.qt())?;
        let schur = (0..sys.horizon())
            .map(|t| {
                let p = &tape.p[t + 1];
                let bu = sys.bu(t);
                let proj = p * bu * spd_solve(&tape.h[t], &bu.transpose(), "H_t")?;
                let s = sym(&(p - &proj * p));
                Ok((s, proj))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(OfflineController {
            sys: Arc::new(sys.clone()),
            tape: Arc::new(tape),
            schur: Arc::new(schur),
            v: Vec::new(),
            causal: None,
        })
    }

    /// Causal variant for plants where [`offline_is_causal`] holds: it only
    /// reads disturbances up to the current step.
    pub fn into_causal(mut self, name: &'static str) -> Self {
        self.causal = Some(name);
        self
    }

    fn plan(&mut self, w: &[DVector<f64>]) -> Result<()> {
        let sys = &self.sys;
        let horizon = sys.horizon();
        sys.check_sequence("w", w, sys.disturbance_dim())?;
        let mut v = vec![DVector::zeros(sys.state_dim()); horizon + 1];
        for t in (0..horizon).rev() {
            let (s, proj) = &self.schur[t];
            let a_t = sys.a(t).transpose();
            let carried = &v[t + 1] - proj * &v[t + 1];
            v[t] = &a_t * (s * (sys.bw(t) * &w[t])) * 2.0 + &a_t * carried;
        }
        self.v = v;
        Ok(())
    }
}

impl Controller for OfflineController {
    fn name(&self) -> &str {
        self.causal.unwrap_or("offline")
    }
    fn lookahead(&self) -> usize {
        if self.causal.is_some() {
            0
        } else {
            usize::MAX
        }
    }
    fn reset(&mut self) {
        self.v.clear();
    }
    fn act(&mut self, t: usize, x: &DVector<f64>, w: &[DVector<f64>]) -> Result<DVector<f64>> {
        if self.causal.is_some() {
            let mut padded = w[..=t].to_vec();
            padded.resize(self.sys.horizon(), DVector::zeros(self.sys.disturbance_dim()));
            self.plan(&padded)?;
        } else if self.v.is_empty() {
            if w.len() != self.sys.horizon() {
                return Err(Error::LengthMismatch {
                    what: "disturbance preview of the offline controller".into(),
                    expected: self.sys.horizon(),
                    found: w.len(),
                });
            }
            self.plan(w)?;
        }
        let sys = &self.sys;
        let y = sys.a(t) * x + sys.bw(t) * &w[t];
        let rhs = sys.bu(t).transpose() * (&self.tape.p[t + 1] * y + &self.v[t + 1] * 0.5);
        Ok(-spd_solve_vec(&self.tape.h[t], &rhs, "H_t")?)
    }
    fn boxed(&self) -> Box<dyn Controller> {
        Box::new(self.clone())
    }
}

/// Whether the clairvoyant policy ignores future disturbances, in which
/// case a causal controller attains zero regret.
///
/// The direct effect of `w_k` on `u_t` (`k > t`) is
/// `-H_t^{-1} B_{u,t}' M_{t+1,k} / 2`, where `M_{k,k} = 2 A_k' S_{k+1} B_{w,k}` and
/// `M_{j,k} = A_j' (I - P_{j+1} B_{u,j} H_j^{-1} B_{u,j}') M_{j+1,k}`. If every such
/// block vanishes, so does the whole anticausal part of the policy.
pub fn offline_is_causal(sys: &LqSystem) -> Result<bool> {
    let ctrl = OfflineController::new(sys)?;
    let horizon = sys.horizon();
    let mut scale = 0.0_f64;
    for t in 0..horizon {
        let (kx, kw) = ctrl.tape.feedback(sys, t)?;
        scale = scale.max(max_abs(&kx)).max(max_abs(&kw));
    }
    let tol = 1e-12 * (1.0 + scale);
    for k in 1..horizon {
        let (s, _) = &ctrl.schur[k];
        let mut m = sys.a(k).transpose() * s * sys.bw(k) * 2.0;
        for j in (1..=k).rev() {
            let t = j - 1;
            let direct = spd_solve(&ctrl.tape.h[t], &(sys.bu(t).transpose() * &m), "H_t")? * 0.5;
            if max_abs(&direct) > tol {
                return Ok(false);
            }
            if t >= 1 {
                let (_, proj) = &ctrl.schur[t];
                m = sys.a(t).transpose() * (&m - proj * &m);
            }
        }
    }
    Ok(true)
}

/// Clairvoyant control sequence for `w` in closed loop from `x_0 = 0`.
pub fn offline_noncausal(sys: &LqSystem, w: &[DVector<f64>]) -> Result<Vec<DVector<f64>>> {
    let mut ctrl = OfflineController::new(sys)?;
    ctrl.plan(w)?;
    let mut x = DVector::zeros(sys.state_dim());
    let mut u = Vec::with_capacity(sys.horizon());
    for t in 0..sys.horizon() {
        let ut = ctrl.act(t, &x, w)?;
        x = sys.step(t, &x, &ut, &w[t]);
        u.push(ut);
    }
    Ok(u)
}
