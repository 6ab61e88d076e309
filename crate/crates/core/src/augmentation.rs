//! Reductions of control with disturbance previews and with input delay to
//! the plain full-information problem.
//!
//! Prediction mode (lookahead `h`) prepends `h` loading steps that fill a
//! shift register with `w_0..w_{h-1}`; the augmented horizon is `T + h`
//! and augmented step `h + t` corresponds to base step `t`, with state
//! `[x_t; w_t; ..; w_{t+h-1}]`. Disturbances past `T - 1` are zero.
//!
//! Delay mode (delay `d`) keeps the horizon and uses the state
//! `[x_t; u_{t-1}; ..; u_{t-d}]`. The action emitted at `t - d` reaches
//! the state through `B_{u,t-d}`; actions before time zero are zero.

use std::collections::VecDeque;

use nalgebra::{DMatrix, DVector};

use crate::controllers::{BuiltController, Controller, ControllerSpec, GainSchedule};
use crate::error::{Error, Result};
use crate::system::{validate_system, LqSystem, SystemData, Trajectory};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AugmentationMode {
    Prediction { h: usize },
    Delay { d: usize },
}

#[derive(Debug, Clone)]
pub struct AugmentedSystem {
    base: LqSystem,
    mode: AugmentationMode,
    system: LqSystem,
}

fn shift_up(blocks: usize, size: usize) -> DMatrix<f64> {
    let dim = blocks * size;
    let mut s = DMatrix::zeros(dim, dim);
    for k in 0..blocks.saturating_sub(1) {
        s.view_mut((k * size, (k + 1) * size), (size, size)).fill_with_identity();
    }
    s
}

fn shift_down(blocks: usize, size: usize) -> DMatrix<f64> {
    shift_up(blocks, size).transpose()
}

fn pad_state_weight(q: &DMatrix<f64>, extra: usize) -> DMatrix<f64> {
    let n = q.nrows();
    let mut out = DMatrix::zeros(n + extra, n + extra);
    out.view_mut((0, 0), (n, n)).copy_from(q);
    out
}

pub fn augment_predictions(sys: &LqSystem, h: usize) -> Result<AugmentedSystem> {
    let horizon = sys.horizon();
    if h > horizon {
        return Err(Error::OutOfRange {
            what: "lookahead".into(),
            value: h as f64,
            bound: format!("0 <= h <= T = {horizon}"),
        });
    }
    let mode = AugmentationMode::Prediction { h };
    if h == 0 {
        return Ok(AugmentedSystem {
            base: sys.clone(),
            mode,
            system: sys.clone(),
        });
    }
    let (n, m, p) = (sys.state_dim(), sys.control_dim(), sys.disturbance_dim());
    let reg = h * p;
    let dim = n + reg;
    let shift = shift_up(h, p);
    let mut entry = DMatrix::zeros(dim, p);
    entry.view_mut((n + reg - p, 0), (p, p)).fill_with_identity();

    let mut data = SystemData {
        a: Vec::with_capacity(horizon + h),
        bu: Vec::with_capacity(horizon + h),
        bw: Vec::with_capacity(horizon + h),
        q: Vec::with_capacity(horizon + h),
        r: Vec::with_capacity(horizon + h),
        qt: pad_state_weight(sys.qt(), reg),
    };
    for _ in 0..h {
        let mut a = DMatrix::zeros(dim, dim);
        a.view_mut((0, 0), (n, n)).fill_with_identity();
        a.view_mut((n, n), (reg, reg)).copy_from(&shift);
        data.a.push(a);
        data.bu.push(DMatrix::zeros(dim, m));
        data.bw.push(entry.clone());
        data.q.push(DMatrix::zeros(dim, dim));
        data.r.push(DMatrix::identity(m, m));
    }
    for t in 0..horizon {
        let mut a = DMatrix::zeros(dim, dim);
        a.view_mut((0, 0), (n, n)).copy_from(sys.a(t));
        a.view_mut((0, n), (n, p)).copy_from(sys.bw(t));
        a.view_mut((n, n), (reg, reg)).copy_from(&shift);
        let mut bu = DMatrix::zeros(dim, m);
        bu.view_mut((0, 0), (n, m)).copy_from(sys.bu(t));
        data.a.push(a);
        data.bu.push(bu);
        data.bw.push(entry.clone());
        data.q.push(pad_state_weight(sys.q(t), reg));
        data.r.push(sys.r(t).clone());
    }
    Ok(AugmentedSystem {
        base: sys.clone(),
        mode,
        system: validate_system(data)?,
    })
}

pub fn augment_delay(sys: &LqSystem, d: usize) -> Result<AugmentedSystem> {
    let horizon = sys.horizon();
    if d >= horizon {
        return Err(Error::OutOfRange {
            what: "delay".into(),
            value: d as f64,
            bound: format!("0 <= d < T = {horizon}"),
        });
    }
    let mode = AugmentationMode::Delay { d };
    if d == 0 {
        return Ok(AugmentedSystem {
            base: sys.clone(),
            mode,
            system: sys.clone(),
        });
    }
    let (n, m) = (sys.state_dim(), sys.control_dim());
    let reg = d * m;
    let dim = n + reg;
    let shift = shift_down(d, m);
    let mut bu = DMatrix::zeros(dim, m);
    bu.view_mut((n, 0), (m, m)).fill_with_identity();

    let mut data = SystemData {
        a: Vec::with_capacity(horizon),
        bu: vec![bu; horizon],
        bw: Vec::with_capacity(horizon),
        q: Vec::with_capacity(horizon),
        r: Vec::with_capacity(horizon),
        qt: pad_state_weight(sys.qt(), reg),
    };
    for t in 0..horizon {
        let mut a = DMatrix::zeros(dim, dim);
        a.view_mut((0, 0), (n, n)).copy_from(sys.a(t));
        if t >= d {
            a.view_mut((0, n + reg - m), (n, m)).copy_from(sys.bu(t - d));
        }
        a.view_mut((n, n), (reg, reg)).copy_from(&shift);
        let mut bw = DMatrix::zeros(dim, sys.disturbance_dim());
        bw.view_mut((0, 0), (n, sys.disturbance_dim())).copy_from(sys.bw(t));
        data.a.push(a);
        data.bw.push(bw);
        data.q.push(pad_state_weight(sys.q(t), reg));
        data.r.push(sys.r(t).clone());
    }
    Ok(AugmentedSystem {
        base: sys.clone(),
        mode,
        system: validate_system(data)?,
    })
}

impl AugmentedSystem {
    pub fn base(&self) -> &LqSystem {
        &self.base
    }

    pub fn system(&self) -> &LqSystem {
        &self.system
    }

    pub fn mode(&self) -> AugmentationMode {
        self.mode
    }

    pub fn is_identity(&self) -> bool {
        matches!(
            self.mode,
            AugmentationMode::Prediction { h: 0 } | AugmentationMode::Delay { d: 0 }
        )
    }

    /// Augmented step index of base step `t`.
    pub fn augmented_step(&self, t: usize) -> usize {
        match self.mode {
            AugmentationMode::Prediction { h } => t + h,
            AugmentationMode::Delay { .. } => t,
        }
    }

    /// Disturbance sequence that drives the augmented system.
    pub fn lift_disturbance(&self, w: &[DVector<f64>]) -> Result<Vec<DVector<f64>>> {
        self.base.check_sequence("w", w, self.base.disturbance_dim())?;
        Ok(match self.mode {
            AugmentationMode::Prediction { h } => {
                let p = self.base.disturbance_dim();
                (0..self.base.horizon() + h)
                    .map(|k| w.get(k).cloned().unwrap_or_else(|| DVector::zeros(p)))
                    .collect()
            }
            AugmentationMode::Delay { .. } => w.to_vec(),
        })
    }

    /// Augmented control sequence; loading steps get zero.
    pub fn lift_controls(&self, u: &[DVector<f64>]) -> Result<Vec<DVector<f64>>> {
        self.base.check_sequence("u", u, self.base.control_dim())?;
        Ok(match self.mode {
            AugmentationMode::Prediction { h } => {
                let m = self.base.control_dim();
                std::iter::repeat_n(DVector::zeros(m), h).chain(u.iter().cloned()).collect()
            }
            AugmentationMode::Delay { .. } => u.to_vec(),
        })
    }

    pub fn project_controls(&self, u: &[DVector<f64>]) -> Vec<DVector<f64>> {
        match self.mode {
            AugmentationMode::Prediction { h } => u[h.min(u.len())..].to_vec(),
            AugmentationMode::Delay { .. } => u.to_vec(),
        }
    }

    /// Base state block of an augmented state.
    pub fn project_state(&self, xi: &DVector<f64>) -> DVector<f64> {
        xi.rows(0, self.base.state_dim()).into_owned()
    }

    /// Turns a controller for the augmented system into one for the base.
    pub fn wrap(&self, inner: Box<dyn Controller>) -> Box<dyn Controller> {
        if self.is_identity() {
            return inner;
        }
        match self.mode {
            AugmentationMode::Prediction { h } => Box::new(PredictionWrapper {
                inner,
                h,
                horizon: self.base.horizon(),
                p: self.base.disturbance_dim(),
                aug_dim: self.system.state_dim(),
            }),
            AugmentationMode::Delay { d } => Box::new(DelayWrapper {
                inner,
                d,
                m: self.base.control_dim(),
                transcript: VecDeque::new(),
            }),
        }
    }
}

/// Delay first, then predictions; the synthesis runs on the last system.
#[derive(Debug, Clone)]
pub struct Pipeline {
    base: LqSystem,
    stages: Vec<AugmentedSystem>,
}

impl Pipeline {
    pub fn new(sys: &LqSystem, lookahead: usize, delay: usize) -> Result<Self> {
        let delayed = augment_delay(sys, delay)?;
        let predicted = augment_predictions(delayed.system(), lookahead)?;
        Ok(Pipeline {
            base: sys.clone(),
            stages: vec![delayed, predicted],
        })
    }

    pub fn base(&self) -> &LqSystem {
        &self.base
    }

    pub fn system(&self) -> &LqSystem {
        self.stages.last().map_or(&self.base, |s| s.system())
    }

    pub fn stages(&self) -> &[AugmentedSystem] {
        &self.stages
    }

    pub fn wrap(&self, inner: Box<dyn Controller>) -> Box<dyn Controller> {
        self.stages.iter().rev().fold(inner, |ctrl, stage| stage.wrap(ctrl))
    }

    /// Synthesises on the augmented system and wraps for the base plant.
    pub fn build(&self, spec: &ControllerSpec, tol: f64) -> Result<BuiltController> {
        let built = spec.build(self.system(), tol)?;
        Ok(BuiltController {
            controller: self.wrap(built.controller),
            ..built
        })
    }
}

struct PredictionWrapper {
    inner: Box<dyn Controller>,
    h: usize,
    horizon: usize,
    p: usize,
    aug_dim: usize,
}

impl PredictionWrapper {
    fn lifted(&self, w: &[DVector<f64>], upto: usize) -> Vec<DVector<f64>> {
        (0..=upto)
            .map(|k| w.get(k).cloned().unwrap_or_else(|| DVector::zeros(self.p)))
            .collect()
    }

    fn register(&self, w: &[DVector<f64>], tau: usize) -> DVector<f64> {
        // Before augmented step `tau` the register holds `w_{tau-h}..w_{tau-1}`.
        let mut reg = DVector::zeros(self.h * self.p);
        for slot in 0..self.h {
            let k = (tau + slot) as isize - self.h as isize;
            if k >= 0 {
                if let Some(v) = w.get(k as usize) {
                    reg.rows_mut(slot * self.p, self.p).copy_from(v);
                }
            }
        }
        reg
    }

    fn augmented_state(&self, x: &DVector<f64>, w: &[DVector<f64>], tau: usize) -> DVector<f64> {
        let mut xi = DVector::zeros(self.aug_dim);
        xi.rows_mut(0, x.len()).copy_from(x);
        let reg = self.register(w, tau);
        xi.rows_mut(x.len(), reg.len()).copy_from(&reg);
        xi
    }

    fn visible(&self, w: &[DVector<f64>], tau: usize) -> Vec<DVector<f64>> {
        let last = tau.saturating_add(self.inner.lookahead()).min(self.horizon + self.h - 1);
        self.lifted(w, last)
    }
}

impl Controller for PredictionWrapper {
    fn name(&self) -> &str {
        self.inner.name()
    }
    fn lookahead(&self) -> usize {
        self.inner.lookahead().saturating_add(self.h)
    }
    fn reset(&mut self) {
        self.inner.reset();
    }
    fn act(&mut self, t: usize, x: &DVector<f64>, w: &[DVector<f64>]) -> Result<DVector<f64>> {
        if t >= self.horizon {
            return Err(Error::OutOfRange {
                what: "t".into(),
                value: t as f64,
                bound: format!("< {}", self.horizon),
            });
        }
        if t == 0 {
            let empty = DVector::zeros(x.len());
            for tau in 0..self.h {
                let xi = self.augmented_state(&empty, w, tau);
                let seen = self.visible(w, tau);
                self.inner.act(tau, &xi, &seen)?;
            }
        }
        let tau = t + self.h;
        let xi = self.augmented_state(x, w, tau);
        let seen = self.visible(w, tau);
        self.inner.act(tau, &xi, &seen)
    }
    fn gain_schedule(&self) -> Option<GainSchedule> {
        self.inner.gain_schedule()
    }
    fn boxed(&self) -> Box<dyn Controller> {
        Box::new(PredictionWrapper {
            inner: self.inner.boxed(),
            h: self.h,
            horizon: self.horizon,
            p: self.p,
            aug_dim: self.aug_dim,
        })
    }
}

struct DelayWrapper {
    inner: Box<dyn Controller>,
    d: usize,
    m: usize,
    /// Most recent action first.
    transcript: VecDeque<DVector<f64>>,
}

impl Controller for DelayWrapper {
    fn name(&self) -> &str {
        self.inner.name()
    }
    fn lookahead(&self) -> usize {
        self.inner.lookahead()
    }
    fn reset(&mut self) {
        self.inner.reset();
        self.transcript.clear();
    }
    fn act(&mut self, t: usize, x: &DVector<f64>, w: &[DVector<f64>]) -> Result<DVector<f64>> {
        if t == 0 {
            self.transcript.clear();
        }
        let n = x.len();
        let mut xi = DVector::zeros(n + self.d * self.m);
        xi.rows_mut(0, n).copy_from(x);
        for (slot, u) in self.transcript.iter().take(self.d).enumerate() {
            xi.rows_mut(n + slot * self.m, self.m).copy_from(u);
        }
        let u = self.inner.act(t, &xi, w)?;
        self.transcript.push_front(u.clone());
        self.transcript.truncate(self.d);
        Ok(u)
    }
    fn gain_schedule(&self) -> Option<GainSchedule> {
        self.inner.gain_schedule()
    }
    fn boxed(&self) -> Box<dyn Controller> {
        Box::new(DelayWrapper {
            inner: self.inner.boxed(),
            d: self.d,
            m: self.m,
            transcript: VecDeque::new(),
        })
    }
}

/// Rolls the delayed plant
/// `x_{t+1} = A_t x_t + B_{u,t-d} u_{t-d} + B_{w,t} w_t` forward for given controls.
pub fn evaluate_delayed_cost(
    sys: &LqSystem,
    d: usize,
    w: &[DVector<f64>],
    u: &[DVector<f64>],
) -> Result<Trajectory> {
    sys.check_sequence("w", w, sys.disturbance_dim())?;
    sys.check_sequence("u", u, sys.control_dim())?;
    let mut x = vec![DVector::zeros(sys.state_dim())];
    for t in 0..sys.horizon() {
        x.push(delayed_step(sys, d, t, &x[t], u, &w[t]));
    }
    Ok(Trajectory::from_states(sys, x, u.to_vec(), w.to_vec()))
}

pub(crate) fn delayed_step(
    sys: &LqSystem,
    d: usize,
    t: usize,
    x: &DVector<f64>,
    u: &[DVector<f64>],
    w: &DVector<f64>,
) -> DVector<f64> {
    let mut next = sys.a(t) * x + sys.bw(t) * w;
    if t >= d {
        next += sys.bu(t - d) * &u[t - d];
    }
    next
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::system::evaluate_cost;

    fn s1() -> LqSystem {
        let one = DMatrix::from_element(1, 1, 1.0);
        validate_system(SystemData::time_invariant(
            one.clone(),
            one.clone(),
            one.clone(),
            one.clone(),
            one,
            DMatrix::zeros(1, 1),
            3,
        ))
        .unwrap()
    }

    fn seq(vals: &[f64]) -> Vec<DVector<f64>> {
        vals.iter().map(|v| DVector::from_element(1, *v)).collect()
    }

    #[test]
    fn zero_lookahead_and_delay_are_identity() {
        let sys = s1();
        let p = augment_predictions(&sys, 0).unwrap();
        let d = augment_delay(&sys, 0).unwrap();
        assert_eq!(p.system().data(), sys.data());
        assert_eq!(d.system().data(), sys.data());
    }

    #[test]
    fn dimensions() {
        let two = DMatrix::<f64>::identity(2, 2);
        let sys = validate_system(SystemData::time_invariant(
            two.clone(),
            DMatrix::from_element(2, 1, 1.0),
            two.clone(),
            two.clone(),
            DMatrix::identity(1, 1),
            two,
            5,
        ))
        .unwrap();
        assert_eq!(augment_predictions(&sys, 3).unwrap().system().state_dim(), 8);
        assert_eq!(augment_delay(&sys, 2).unwrap().system().state_dim(), 4);
    }

    #[test]
    fn out_of_range() {
        let sys = s1();
        assert!(matches!(augment_predictions(&sys, 4), Err(Error::OutOfRange { .. })));
        assert!(matches!(augment_delay(&sys, 3), Err(Error::OutOfRange { .. })));
    }

    #[test]
    fn cost_equivalence_on_s1() {
        let sys = s1();
        let w = seq(&[1.0, -2.0, 0.5]);
        let u = seq(&[0.3, 0.1, -0.7]);
        for h in 0..=3 {
            let aug = augment_predictions(&sys, h).unwrap();
            let base = evaluate_cost(&sys, &w, &u).unwrap().total_cost;
            let lifted = evaluate_cost(aug.system(), &aug.lift_disturbance(&w).unwrap(), &aug.lift_controls(&u).unwrap())
                .unwrap()
                .total_cost;
            assert!((base - lifted).abs() < 1e-12);
        }
        for d in 0..3 {
            let aug = augment_delay(&sys, d).unwrap();
            let base = evaluate_delayed_cost(&sys, d, &w, &u).unwrap().total_cost;
            let lifted = evaluate_cost(aug.system(), &w, &u).unwrap().total_cost;
            assert!((base - lifted).abs() < 1e-12);
        }
    }
}
