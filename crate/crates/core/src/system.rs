//! Plant data, validation, control-weight normalisation and cost evaluation.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{min_eigenvalue, pd_inv_sqrt, psd_sqrt, quad, sym};

/// Unvalidated plant and cost data; one entry per step `t = 0..T-1`.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemData {
    pub a: Vec<DMatrix<f64>>,
    pub bu: Vec<DMatrix<f64>>,
    pub bw: Vec<DMatrix<f64>>,
    pub q: Vec<DMatrix<f64>>,
    pub r: Vec<DMatrix<f64>>,
    pub qt: DMatrix<f64>,
}

impl SystemData {
    /// Broadcasts a single matrix set over `horizon` steps.
    pub fn time_invariant(
        a: DMatrix<f64>,
        bu: DMatrix<f64>,
        bw: DMatrix<f64>,
        q: DMatrix<f64>,
        r: DMatrix<f64>,
        qt: DMatrix<f64>,
        horizon: usize,
    ) -> Self {
        SystemData {
            a: vec![a; horizon],
            bu: vec![bu; horizon],
            bw: vec![bw; horizon],
            q: vec![q; horizon],
            r: vec![r; horizon],
            qt,
        }
    }
}

/// A validated time-varying LQ plant with zero initial state.
///
/// Cost matrices are stored symmetrised; `Q_t^{1/2}` is cached for
/// `t = 0..=T` with index `T` holding the terminal weight.
#[derive(Debug, Clone)]
pub struct LqSystem {
    data: SystemData,
    q_half: Vec<DMatrix<f64>>,
    n: usize,
    m: usize,
    p: usize,
}

pub fn psd_tolerance(m: &DMatrix<f64>) -> f64 {
    1e-9 * (1.0 + m.norm())
}

fn pd_tolerance(m: &DMatrix<f64>) -> f64 {
    1e-12 * (1.0 + m.norm())
}

fn check_shape(
    m: &DMatrix<f64>,
    name: &str,
    step: Option<usize>,
    expected: (usize, usize),
) -> Result<()> {
    if m.shape() != expected {
        return Err(Error::DimensionMismatch {
            matrix: name.to_string(),
            step,
            expected,
            found: m.shape(),
        });
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::OutOfRange {
            what: match step {
                Some(t) => format!("{name}_{t}"),
                None => name.to_string(),
            },
            value: f64::NAN,
            bound: "entries must be finite".into(),
        });
    }
    Ok(())
}

/// Checks that a symmetric matrix is PSD within `1e-9 (1 + ‖M‖)`.
pub fn check_psd(m: &DMatrix<f64>, name: &str) -> Result<()> {
    let lo = min_eigenvalue(m);
    if lo < -psd_tolerance(m) {
        return Err(Error::NotDefinite {
            matrix: name.to_string(),
            requirement: "positive semidefinite",
            eigenvalue: lo,
        });
    }
    Ok(())
}

/// Checks that a symmetric matrix is positive definite.
pub fn check_pd(m: &DMatrix<f64>, name: &str) -> Result<()> {
    let lo = min_eigenvalue(m);
    if lo <= pd_tolerance(m) {
        return Err(Error::NotDefinite {
            matrix: name.to_string(),
            requirement: "positive definite",
            eigenvalue: lo,
        });
    }
    Ok(())
}

/// Validates shapes and definiteness, returning the system with
/// symmetry-projected cost matrices.
pub fn validate_system(data: SystemData) -> Result<LqSystem> {
    let horizon = data.a.len();
    if horizon == 0 {
        return Err(Error::OutOfRange {
            what: "horizon".into(),
            value: 0.0,
            bound: "must be at least 1".into(),
        });
    }
    for (what, len) in [
        ("Bu", data.bu.len()),
        ("Bw", data.bw.len()),
        ("Q", data.q.len()),
        ("R", data.r.len()),
    ] {
        if len != horizon {
            return Err(Error::LengthMismatch {
                what: format!("{what} sequence"),
                expected: horizon,
                found: len,
            });
        }
    }
    let n = data.a[0].nrows();
    let m = data.bu[0].ncols();
    let p = data.bw[0].ncols();
    for (what, d) in [("state dimension", n), ("control dimension", m), ("disturbance dimension", p)] {
        if d == 0 {
            return Err(Error::OutOfRange {
                what: what.into(),
                value: 0.0,
                bound: "must be positive".into(),
            });
        }
    }

    let mut data = data;
    for t in 0..horizon {
        check_shape(&data.a[t], "A", Some(t), (n, n))?;
        check_shape(&data.bu[t], "Bu", Some(t), (n, m))?;
        check_shape(&data.bw[t], "Bw", Some(t), (n, p))?;
        check_shape(&data.q[t], "Q", Some(t), (n, n))?;
        check_shape(&data.r[t], "R", Some(t), (m, m))?;
        data.q[t] = sym(&data.q[t]);
        data.r[t] = sym(&data.r[t]);
        check_psd(&data.q[t], &format!("Q_{t}"))?;
        check_pd(&data.r[t], &format!("R_{t}"))?;
    }
    check_shape(&data.qt, "QT", None, (n, n))?;
    data.qt = sym(&data.qt);
    check_psd(&data.qt, "QT")?;

    let q_half = data
        .q
        .iter()
        .chain(std::iter::once(&data.qt))
        .map(psd_sqrt)
        .collect();
    Ok(LqSystem { data, q_half, n, m, p })
}

impl LqSystem {
    pub fn horizon(&self) -> usize {
        self.data.a.len()
    }
    pub fn state_dim(&self) -> usize {
        self.n
    }
    pub fn control_dim(&self) -> usize {
        self.m
    }
    pub fn disturbance_dim(&self) -> usize {
        self.p
    }
    pub fn a(&self, t: usize) -> &DMatrix<f64> {
        &self.data.a[t]
    }
    pub fn bu(&self, t: usize) -> &DMatrix<f64> {
        &self.data.bu[t]
    }
    pub fn bw(&self, t: usize) -> &DMatrix<f64> {
        &self.data.bw[t]
    }
    pub fn q(&self, t: usize) -> &DMatrix<f64> {
        &self.data.q[t]
    }
    pub fn r(&self, t: usize) -> &DMatrix<f64> {
        &self.data.r[t]
    }
    pub fn qt(&self) -> &DMatrix<f64> {
        &self.data.qt
    }
    /// `Q_t^{1/2}` for `t < T`, `Q_T^{1/2}` for `t == T`.
    pub fn q_half(&self, t: usize) -> &DMatrix<f64> {
        &self.q_half[t]
    }
    /// State weight at `t = 0..=T` (terminal weight at `T`).
    pub fn state_weight(&self, t: usize) -> &DMatrix<f64> {
        if t == self.horizon() {
            &self.data.qt
        } else {
            &self.data.q[t]
        }
    }
    pub fn data(&self) -> &SystemData {
        &self.data
    }
    pub fn into_data(self) -> SystemData {
        self.data
    }

    pub fn has_unit_control_weight(&self) -> bool {
        let eye = DMatrix::<f64>::identity(self.m, self.m);
        self.data.r.iter().all(|r| r == &eye)
    }

    /// Next state under the undelayed dynamics.
    pub fn step(&self, t: usize, x: &DVector<f64>, u: &DVector<f64>, w: &DVector<f64>) -> DVector<f64> {
        self.a(t) * x + self.bu(t) * u + self.bw(t) * w
    }

    pub(crate) fn check_sequence(&self, what: &str, seq: &[DVector<f64>], dim: usize) -> Result<()> {
        if seq.len() != self.horizon() {
            return Err(Error::LengthMismatch {
                what: format!("{what} sequence"),
                expected: self.horizon(),
                found: seq.len(),
            });
        }
        for (t, v) in seq.iter().enumerate() {
            if v.len() != dim {
                return Err(Error::DimensionMismatch {
                    matrix: what.to_string(),
                    step: Some(t),
                    expected: (dim, 1),
                    found: (v.len(), 1),
                });
            }
        }
        Ok(())
    }
}

/// Per-step maps between original controls `u` and normalised controls
/// `u' = R_t^{1/2} u`.
#[derive(Debug, Clone)]
pub struct ControlScaling {
    r_half: Vec<DMatrix<f64>>,
    r_inv_half: Vec<DMatrix<f64>>,
}

impl ControlScaling {
    pub fn identity(m: usize, horizon: usize) -> Self {
        let eye = DMatrix::identity(m, m);
        ControlScaling {
            r_half: vec![eye.clone(); horizon],
            r_inv_half: vec![eye; horizon],
        }
    }
    pub fn to_normalized(&self, t: usize, u: &DVector<f64>) -> DVector<f64> {
        &self.r_half[t] * u
    }
    pub fn to_original(&self, t: usize, u_normalized: &DVector<f64>) -> DVector<f64> {
        &self.r_inv_half[t] * u_normalized
    }
    pub fn r_half(&self, t: usize) -> &DMatrix<f64> {
        &self.r_half[t]
    }
    pub fn r_inv_half(&self, t: usize) -> &DMatrix<f64> {
        &self.r_inv_half[t]
    }
}

/// Rescales controls so every `R_t` becomes the identity:
/// `B'_{u,t} = B_{u,t} R_t^{-1/2}`, `u'_t = R_t^{1/2} u_t`.
pub fn normalize_control_weight(sys: &LqSystem) -> (LqSystem, ControlScaling) {
    let horizon = sys.horizon();
    let m = sys.control_dim();
    let mut r_half = Vec::with_capacity(horizon);
    let mut r_inv_half = Vec::with_capacity(horizon);
    for t in 0..horizon {
        r_half.push(psd_sqrt(sys.r(t)));
        r_inv_half.push(pd_inv_sqrt(sys.r(t), &format!("R_{t}")).expect("validated R is positive definite"));
    }
    let mut data = sys.data.clone();
    for t in 0..horizon {
        data.bu[t] = sys.bu(t) * &r_inv_half[t];
        data.r[t] = DMatrix::identity(m, m);
    }
    let normalized = LqSystem {
        data,
        q_half: sys.q_half.clone(),
        n: sys.n,
        m: sys.m,
        p: sys.p,
    };
    (normalized, ControlScaling { r_half, r_inv_half })
}

/// A state, control and disturbance record with its cost.
///
/// `s` holds `Q_t^{1/2} x_t` for `t = 0..=T`; the final entry is the
/// terminal weighted state. `stage_costs[t]` is `x_t'Q_t x_t + u_t'R_t u_t`,
/// with the terminal cost folded into the last stage.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub x: Vec<DVector<f64>>,
    pub u: Vec<DVector<f64>>,
    pub w: Vec<DVector<f64>>,
    pub s: Vec<DVector<f64>>,
    pub stage_costs: Vec<f64>,
    pub total_cost: f64,
}

impl Trajectory {
    /// Builds the record from an already-simulated state sequence.
    pub fn from_states(
        sys: &LqSystem,
        x: Vec<DVector<f64>>,
        u: Vec<DVector<f64>>,
        w: Vec<DVector<f64>>,
    ) -> Self {
        let horizon = sys.horizon();
        let s = (0..=horizon).map(|t| sys.q_half(t) * &x[t]).collect();
        let mut stage_costs: Vec<f64> = (0..horizon)
            .map(|t| quad(sys.q(t), &x[t]) + quad(sys.r(t), &u[t]))
            .collect();
        if let Some(last) = stage_costs.last_mut() {
            *last += quad(sys.qt(), &x[horizon]);
        }
        let total_cost = stage_costs.iter().sum();
        Trajectory {
            x,
            u,
            w,
            s,
            stage_costs,
            total_cost,
        }
    }

    /// `(Σ_{k≤t} stage_k) / (t + 1)` for each `t`.
    pub fn time_averaged_costs(&self) -> Vec<f64> {
        let mut acc = 0.0;
        self.stage_costs
            .iter()
            .enumerate()
            .map(|(t, c)| {
                acc += c;
                acc / (t + 1) as f64
            })
            .collect()
    }

    pub fn disturbance_energy(&self) -> f64 {
        energy(&self.w)
    }
}

pub fn energy(w: &[DVector<f64>]) -> f64 {
    w.iter().map(|v| v.norm_squared()).sum()
}

/// Rolls the dynamics forward from `x_0 = 0` and evaluates the cost,
/// terminal term included.
pub fn evaluate_cost(sys: &LqSystem, w: &[DVector<f64>], u: &[DVector<f64>]) -> Result<Trajectory> {
    sys.check_sequence("w", w, sys.disturbance_dim())?;
    sys.check_sequence("u", u, sys.control_dim())?;
    let mut x = Vec::with_capacity(sys.horizon() + 1);
    x.push(DVector::zeros(sys.state_dim()));
    for t in 0..sys.horizon() {
        let next = sys.step(t, &x[t], &u[t], &w[t]);
        x.push(next);
    }
    Ok(Trajectory::from_states(sys, x, u.to_vec(), w.to_vec()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn scalar(v: f64) -> DMatrix<f64> {
        DMatrix::from_element(1, 1, v)
    }

    fn s1_data() -> SystemData {
        SystemData::time_invariant(scalar(1.0), scalar(1.0), scalar(1.0), scalar(1.0), scalar(1.0), scalar(0.0), 3)
    }

    fn seq(vals: &[f64]) -> Vec<DVector<f64>> {
        vals.iter().map(|&v| DVector::from_element(1, v)).collect()
    }

    #[test]
    fn s1_is_accepted() {
        let sys = validate_system(s1_data()).unwrap();
        assert_eq!((sys.horizon(), sys.state_dim(), sys.control_dim(), sys.disturbance_dim()), (3, 1, 1, 1));
    }

    #[test]
    fn zero_control_weight_is_rejected() {
        let mut d = s1_data();
        d.r[0] = scalar(0.0);
        match validate_system(d) {
            Err(Error::NotDefinite { matrix, .. }) => assert_eq!(matrix, "R_0"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn bad_shape_names_step() {
        let mut d = s1_data();
        d.bu[1] = DMatrix::zeros(2, 1);
        match validate_system(d) {
            Err(Error::DimensionMismatch { matrix, step, .. }) => {
                assert_eq!(matrix, "Bu");
                assert_eq!(step, Some(1));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn indefinite_state_weight_is_rejected() {
        let mut d = s1_data();
        d.q[2] = scalar(-0.5);
        let err = validate_system(d).unwrap_err();
        assert!(matches!(err, Error::NotDefinite { ref matrix, eigenvalue, .. } if matrix == "Q_2" && eigenvalue == -0.5));
    }

    #[test]
    fn cost_matrices_are_symmetrised() {
        let mut d = SystemData::time_invariant(
            DMatrix::identity(2, 2),
            DMatrix::from_row_slice(2, 1, &[0.0, 1.0]),
            DMatrix::identity(2, 2),
            DMatrix::from_row_slice(2, 2, &[1.0, 0.2, 0.0, 1.0]),
            scalar(1.0),
            DMatrix::zeros(2, 2),
            2,
        );
        d.q[1] = DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.4, 2.0]);
        let sys = validate_system(d).unwrap();
        assert_eq!(sys.q(0)[(0, 1)], 0.1);
        assert_eq!(sys.q(1)[(1, 0)], 0.2);
    }

    #[test]
    fn impulse_cost_on_s1() {
        let sys = validate_system(s1_data()).unwrap();
        let tr = evaluate_cost(&sys, &seq(&[1.0, 0.0, 0.0]), &seq(&[0.0, 0.0, 0.0])).unwrap();
        let xs: Vec<f64> = tr.x.iter().map(|v| v[0]).collect();
        assert_eq!(xs, vec![0.0, 1.0, 1.0, 1.0]);
        assert_relative_eq!(tr.total_cost, 2.0);
    }

    #[test]
    fn hand_minimised_cost_on_s1() {
        let sys = validate_system(s1_data()).unwrap();
        let tr = evaluate_cost(&sys, &seq(&[1.0, 0.0, 0.0]), &seq(&[-0.6, -0.2, 0.0])).unwrap();
        assert_relative_eq!(tr.total_cost, 0.6, epsilon = 1e-14);
    }

    #[test]
    fn terminal_cost_is_included() {
        let mut d = s1_data();
        d.qt = scalar(2.0);
        let sys = validate_system(d).unwrap();
        let tr = evaluate_cost(&sys, &seq(&[1.0, 0.0, 0.0]), &seq(&[0.0; 3])).unwrap();
        assert_relative_eq!(tr.total_cost, 4.0);
        assert_relative_eq!(*tr.stage_costs.last().unwrap(), 3.0);
    }

    #[test]
    fn zero_inputs_cost_nothing() {
        let sys = validate_system(s1_data()).unwrap();
        let tr = evaluate_cost(&sys, &seq(&[0.0; 3]), &seq(&[0.0; 3])).unwrap();
        assert_eq!(tr.total_cost, 0.0);
    }

    #[test]
    fn length_mismatch_is_reported() {
        let sys = validate_system(s1_data()).unwrap();
        let err = evaluate_cost(&sys, &seq(&[0.0; 2]), &seq(&[0.0; 3])).unwrap_err();
        assert!(matches!(err, Error::LengthMismatch { expected: 3, found: 2, .. }));
    }

    #[test]
    fn scalar_normalisation() {
        let mut d = s1_data();
        d.r = vec![scalar(4.0); 3];
        let sys = validate_system(d).unwrap();
        let (norm, scaling) = normalize_control_weight(&sys);
        assert_relative_eq!(norm.bu(0)[(0, 0)], 0.5, epsilon = 1e-15);
        assert_relative_eq!(norm.r(1)[(0, 0)], 1.0);
        assert_relative_eq!(scaling.to_original(0, &DVector::from_element(1, 1.0))[0], 0.5, epsilon = 1e-15);
    }

    #[test]
    fn unit_weight_normalisation_is_identity() {
        let sys = validate_system(s1_data()).unwrap();
        let (norm, _) = normalize_control_weight(&sys);
        assert_eq!(norm.data(), sys.data());
    }

    #[test]
    fn normalised_cost_matches_original() {
        let mut d = s1_data();
        d.r = vec![scalar(2.0); 3];
        let sys = validate_system(d).unwrap();
        let (norm, _) = normalize_control_weight(&sys);
        let w = seq(&[0.3, -1.2, 0.7]);
        let u = seq(&[0.1, 0.5, -0.4]);
        let scaled: Vec<_> = u.iter().map(|v| v * 2f64.sqrt()).collect();
        let a = evaluate_cost(&sys, &w, &u).unwrap().total_cost;
        let b = evaluate_cost(&norm, &w, &scaled).unwrap().total_cost;
        assert_relative_eq!(a, b, max_relative = 1e-13);
    }
}
