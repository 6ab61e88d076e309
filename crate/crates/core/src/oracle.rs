//! Dense block-operator representation of the plant and brute-force
//! certificates for the state-space syntheses.
//!
//! With `R_t = I` (after normalisation) the cost is `‖s‖² + ‖u‖²` where
//! `s = F u + G w` stacks the weighted states `Q_t^{1/2} x_t`,
//! `t = 0..=T` (the last block row carries the terminal weight). Everything
//! here is `O(T³)` and is capped by [`DENSE_CAP`].

use nalgebra::{DMatrix, DVector};

use crate::controllers::Controller;
use crate::error::{Error, Result};
use crate::linalg::{block_diag, concat, max_abs, rel_frobenius, solve, spd_solve, split, sym, top_eigenpair};
use crate::sim::rollout;
use crate::system::{normalize_control_weight, ControlScaling, LqSystem};

/// Largest `T · max(n, m, p)` the dense oracle accepts.
pub const DENSE_CAP: usize = 2000;

pub fn check_dense_size(sys: &LqSystem) -> Result<()> {
    let size = sys.horizon() * sys.state_dim().max(sys.control_dim()).max(sys.disturbance_dim());
    if size > DENSE_CAP {
        return Err(Error::OracleTooLarge { size, cap: DENSE_CAP });
    }
    Ok(())
}

/// `F` and `G` for a validated plant, in normalised control coordinates.
#[derive(Debug, Clone)]
pub struct OperatorPair {
    pub f: DMatrix<f64>,
    pub g: DMatrix<f64>,
    pub horizon: usize,
    pub n: usize,
    pub m: usize,
    pub p: usize,
    scaling: ControlScaling,
}

pub fn build_operators(sys: &LqSystem) -> Result<OperatorPair> {
    check_dense_size(sys)?;
    let (norm, scaling) = normalize_control_weight(sys);
    let (horizon, n, m, p) = (sys.horizon(), sys.state_dim(), sys.control_dim(), sys.disturbance_dim());
    let mut f = DMatrix::zeros((horizon + 1) * n, horizon * m);
    let mut g = DMatrix::zeros((horizon + 1) * n, horizon * p);
    for j in 0..horizon {
        let mut from_u = norm.bu(j).clone();
        let mut from_w = norm.bw(j).clone();
        for i in j + 1..=horizon {
            let qh = norm.q_half(i);
            f.view_mut((i * n, j * m), (n, m)).copy_from(&(qh * &from_u));
            g.view_mut((i * n, j * p), (n, p)).copy_from(&(qh * &from_w));
            if i < horizon {
                from_u = norm.a(i) * from_u;
                from_w = norm.a(i) * from_w;
            }
        }
    }
    Ok(OperatorPair { f, g, horizon, n, m, p, scaling })
}

impl OperatorPair {
    /// Block-diagonal `R^{1/2}` mapping original to normalised controls.
    pub fn control_scale(&self) -> DMatrix<f64> {
        block_diag(&(0..self.horizon).map(|t| self.scaling.r_half(t).clone()).collect::<Vec<_>>())
    }

    pub fn control_unscale(&self) -> DMatrix<f64> {
        block_diag(&(0..self.horizon).map(|t| self.scaling.r_inv_half(t).clone()).collect::<Vec<_>>())
    }

    /// `s = F R^{1/2} u + G w` for original-coordinate controls.
    pub fn weighted_states(&self, u: &[DVector<f64>], w: &[DVector<f64>]) -> Vec<DVector<f64>> {
        let s = &self.f * (self.control_scale() * concat(u)) + &self.g * concat(w);
        split(&s, self.n)
    }

    /// `G'(I + F F')^{-1} G`, the quadratic form of the clairvoyant cost.
    pub fn offline_cost_form(&self) -> Result<DMatrix<f64>> {
        let rows = self.f.nrows();
        let gram = DMatrix::identity(rows, rows) + &self.f * self.f.transpose();
        Ok(sym(&(self.g.transpose() * spd_solve(&gram, &self.g, "I + F F'")?)))
    }

    /// `-(I + F'F)^{-1} F'G` mapped back to original control coordinates.
    pub fn offline_operator(&self) -> Result<DMatrix<f64>> {
        let cols = self.f.ncols();
        let hess = DMatrix::identity(cols, cols) + self.f.transpose() * &self.f;
        let k = -spd_solve(&hess, &(self.f.transpose() * &self.g), "I + F'F")?;
        Ok(self.control_unscale() * k)
    }
}

/// Clairvoyant optimum `u* = -(I + F'F)^{-1} F'G w` (original coordinates)
/// and its cost `w'G'(I + F F')^{-1} G w`.
pub fn offline_optimal(ops: &OperatorPair, w: &[DVector<f64>]) -> Result<(Vec<DVector<f64>>, f64)> {
    if w.len() != ops.horizon {
        return Err(Error::LengthMismatch {
            what: "w sequence".into(),
            expected: ops.horizon,
            found: w.len(),
        });
    }
    let wv = concat(w);
    if wv.len() != ops.horizon * ops.p {
        return Err(Error::DimensionMismatch {
            matrix: "w".into(),
            step: None,
            expected: (ops.horizon * ops.p, 1),
            found: (wv.len(), 1),
        });
    }
    let u = ops.offline_operator()? * &wv;
    let cost = wv.dot(&(ops.offline_cost_form()? * &wv));
    Ok((split(&u, ops.m), cost))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FactorSide {
    /// `target = M M'`.
    LowerUpper,
    /// `target = M' M`.
    UpperLower,
}

/// Block-lower-triangular factor with symmetric positive-definite diagonal
/// blocks, which makes it unique.
#[derive(Debug, Clone)]
pub struct CausalFactor {
    pub factor: DMatrix<f64>,
    pub target: DMatrix<f64>,
    pub side: FactorSide,
    pub block: usize,
}

impl CausalFactor {
    pub fn product(&self) -> DMatrix<f64> {
        match self.side {
            FactorSide::LowerUpper => &self.factor * self.factor.transpose(),
            FactorSide::UpperLower => self.factor.transpose() * &self.factor,
        }
    }

    pub fn residual(&self) -> f64 {
        rel_frobenius(&self.product(), &self.target)
    }
}

/// Causal factorisation of a symmetric positive-definite block matrix with
/// uniform block size `block`.
pub fn causal_factor(target: &DMatrix<f64>, block: usize, side: FactorSide) -> Result<CausalFactor> {
    let dim = target.nrows();
    if target.ncols() != dim || block == 0 || !dim.is_multiple_of(block) {
        return Err(Error::DimensionMismatch {
            matrix: "causal factor target".into(),
            step: None,
            expected: (dim, dim),
            found: target.shape(),
        });
    }
    let target = sym(target);
    let factor = match side {
        FactorSide::LowerUpper => block_cholesky(&target, block)?,
        FactorSide::UpperLower => {
            // J M J = L L' with J the block reversal gives M = (J L' J)' (J L' J).
            let flip = block_reversal(dim, block);
            let lower = block_cholesky(&(&flip * &target * &flip), block)
                .map_err(|e| match e {
                    Error::NotPositiveDefinite { pivot, eigenvalue } => Error::NotPositiveDefinite {
                        pivot: dim / block - 1 - pivot,
                        eigenvalue,
                    },
                    other => other,
                })?;
            &flip * lower.transpose() * &flip
        }
    };
    Ok(CausalFactor { factor, target, side, block })
}

fn block_reversal(dim: usize, block: usize) -> DMatrix<f64> {
    let blocks = dim / block;
    let mut j = DMatrix::zeros(dim, dim);
    for k in 0..blocks {
        let r = blocks - 1 - k;
        j.view_mut((r * block, k * block), (block, block))
            .fill_with_identity();
    }
    j
}

fn block_cholesky(target: &DMatrix<f64>, block: usize) -> Result<DMatrix<f64>> {
    let dim = target.nrows();
    let blocks = dim / block;
    let reg = 1e-12 * target.trace().abs();
    let mut l = DMatrix::zeros(dim, dim);
    for k in 0..blocks {
        let kk = k * block;
        let mut pivot = target.view((kk, kk), (block, block)).into_owned();
        let row = l.view((kk, 0), (block, kk)).into_owned();
        pivot -= &row * row.transpose();
        let pivot = sym(&pivot);
        let eig = nalgebra::SymmetricEigen::new(pivot.clone());
        let lowest = eig.eigenvalues.min();
        if lowest < -reg || !lowest.is_finite() {
            return Err(Error::NotPositiveDefinite { pivot: k, eigenvalue: lowest });
        }
        let vals = eig.eigenvalues.map(|v| v.max(reg).sqrt());
        let root = sym(&(&eig.eigenvectors * DMatrix::from_diagonal(&vals) * eig.eigenvectors.transpose()));
        let inv_root = sym(&(&eig.eigenvectors * DMatrix::from_diagonal(&vals.map(|v| 1.0 / v)) * eig.eigenvectors.transpose()));
        l.view_mut((kk, kk), (block, block)).copy_from(&root);
        for i in k + 1..blocks {
            let ii = i * block;
            let mut rhs = target.view((ii, kk), (block, block)).into_owned();
            let other = l.view((ii, 0), (block, kk)).into_owned();
            rhs -= &other * row.transpose();
            l.view_mut((ii, kk), (block, block)).copy_from(&(rhs * &inv_root));
        }
    }
    Ok(l)
}

/// Keeps blocks `(i, j)` with `j <= i`.
pub fn causal_part(m: &DMatrix<f64>, row_block: usize, col_block: usize) -> DMatrix<f64> {
    let mut out = m.clone();
    for i in 0..m.nrows() / row_block {
        for j in (i + 1)..m.ncols() / col_block {
            out.view_mut((i * row_block, j * col_block), (row_block, col_block)).fill(0.0);
        }
    }
    out
}

/// Largest block strictly above the block diagonal, with its position.
pub fn max_anticausal_block(m: &DMatrix<f64>, row_block: usize, col_block: usize) -> (usize, usize, f64) {
    let mut worst = (0, 0, 0.0);
    for i in 0..m.nrows() / row_block {
        for j in (i + 1)..m.ncols() / col_block {
            let mag = max_abs(&m.view((i * row_block, j * col_block), (row_block, col_block)).into_owned());
            if mag > worst.2 {
                worst = (i, j, mag);
            }
        }
    }
    worst
}

/// Probes a linear controller with unit impulses and returns its
/// `(T m) × (T p)` matrix, without checking causality.
pub fn probe_operator(sys: &LqSystem, controller: &mut dyn Controller) -> Result<DMatrix<f64>> {
    let (horizon, m, p) = (sys.horizon(), sys.control_dim(), sys.disturbance_dim());
    let mut k = DMatrix::zeros(horizon * m, horizon * p);
    for j in 0..horizon {
        for c in 0..p {
            let mut w = vec![DVector::zeros(p); horizon];
            w[j][c] = 1.0;
            let traj = rollout(sys, controller, &w)?;
            k.column_mut(j * p + c).copy_from(&concat(&traj.u));
        }
    }
    Ok(k)
}

/// Probed operator of a causal linear controller; fails if any block above
/// the diagonal exceeds `1e-9`.
pub fn controller_operator(sys: &LqSystem, controller: &mut dyn Controller) -> Result<DMatrix<f64>> {
    check_dense_size(sys)?;
    let k = probe_operator(sys, controller)?;
    let (row, col, magnitude) = max_anticausal_block(&k, sys.control_dim(), sys.disturbance_dim());
    if magnitude > 1e-9 {
        return Err(Error::CausalityViolation { row, col, magnitude });
    }
    Ok(k)
}

#[derive(Debug, Clone)]
pub struct RegretGainCertificate {
    pub controller_operator: DMatrix<f64>,
    pub regret_quadratic_form: DMatrix<f64>,
    pub gain: f64,
    /// Unit-energy disturbance attaining `gain`.
    pub witness: Vec<DVector<f64>>,
}

/// Exact worst-case ratio of regret to disturbance energy for a linear
/// controller `u = K w` given in original control coordinates.
pub fn worst_case_regret_gain(ops: &OperatorPair, k: &DMatrix<f64>) -> Result<RegretGainCertificate> {
    if k.shape() != (ops.horizon * ops.m, ops.horizon * ops.p) {
        return Err(Error::DimensionMismatch {
            matrix: "K".into(),
            step: None,
            expected: (ops.horizon * ops.m, ops.horizon * ops.p),
            found: k.shape(),
        });
    }
    let kn = ops.control_scale() * k;
    let response = &ops.f * &kn + &ops.g;
    let form = sym(&(response.transpose() * &response + kn.transpose() * &kn - ops.offline_cost_form()?));
    let (lambda, v) = top_eigenpair(&form);
    Ok(RegretGainCertificate {
        controller_operator: k.clone(),
        regret_quadratic_form: form,
        gain: lambda.max(0.0),
        witness: split(&v, ops.p),
    })
}

/// Worst-case ratio of cost to disturbance energy, `λ_max(K'K + (FK+G)'(FK+G))`.
pub fn worst_case_cost_gain(ops: &OperatorPair, k: &DMatrix<f64>) -> f64 {
    let kn = ops.control_scale() * k;
    let response = &ops.f * &kn + &ops.g;
    crate::linalg::max_eigenvalue(&(response.transpose() * &response + kn.transpose() * &kn))
}

/// The H2 controller in input-output form, `K = -Δ^{-1} {Δ^{-T} F'G}_+`
/// with `Δ'Δ = I + F'F`, in original control coordinates.
pub fn h2_operator_form(ops: &OperatorPair) -> Result<DMatrix<f64>> {
    let cols = ops.f.ncols();
    let hess = DMatrix::identity(cols, cols) + ops.f.transpose() * &ops.f;
    let delta = causal_factor(&hess, ops.m, FactorSide::UpperLower)?.factor;
    let whitened = solve(&delta.transpose(), &(ops.f.transpose() * &ops.g), "Δ'")?;
    let k = -solve(&delta, &causal_part(&whitened, ops.m, ops.p), "Δ")?;
    Ok(ops.control_unscale() * causal_part(&k, ops.m, ops.p))
}

/// Smallest achievable worst-case regret ratio over causal controllers,
/// computed as a distance to the block-lower-triangular matrices:
/// `max_k σ_max(N[..=k, k+1..])²` with `N = Δ^{-T} F'G`, `Δ'Δ = I + F'F`.
pub fn optimal_regret_level(ops: &OperatorPair) -> Result<f64> {
    let cols = ops.f.ncols();
    let hess = DMatrix::identity(cols, cols) + ops.f.transpose() * &ops.f;
    let delta = causal_factor(&hess, ops.m, FactorSide::UpperLower)?.factor;
    let n = solve(&delta.transpose(), &(ops.f.transpose() * &ops.g), "Δ'")?;
    let mut best = 0.0_f64;
    for k in 0..ops.horizon.saturating_sub(1) {
        let rows = (k + 1) * ops.m;
        let start = (k + 1) * ops.p;
        let corner = n.view((0, start), (rows, n.ncols() - start)).into_owned();
        let sv = corner.singular_values();
        best = best.max(sv.max().powi(2));
    }
    Ok(best)
}

/// Dense `γ² I + G'(I + F F')^{-1} G`.
pub fn regret_weight(ops: &OperatorPair, gamma: f64) -> Result<DMatrix<f64>> {
    let dim = ops.g.ncols();
    Ok(DMatrix::identity(dim, dim) * (gamma * gamma) + ops.offline_cost_form()?)
}

/// Dense `I + F F'`.
pub fn output_covariance(ops: &OperatorPair) -> DMatrix<f64> {
    let rows = ops.f.nrows();
    DMatrix::identity(rows, rows) + &ops.f * ops.f.transpose()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn identity_factors_to_identity() {
        let eye = DMatrix::<f64>::identity(6, 6);
        for side in [FactorSide::LowerUpper, FactorSide::UpperLower] {
            let f = causal_factor(&eye, 2, side).unwrap();
            assert_relative_eq!(f.factor, eye, epsilon = 1e-15);
        }
    }

    #[test]
    fn diagonal_factors_to_square_roots() {
        let m = DMatrix::from_diagonal(&DVector::from_vec(vec![4.0, 9.0]));
        for side in [FactorSide::LowerUpper, FactorSide::UpperLower] {
            let f = causal_factor(&m, 1, side).unwrap();
            assert_relative_eq!(f.factor, DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, 3.0])), epsilon = 1e-15);
        }
    }

    #[test]
    fn indefinite_target_names_the_pivot() {
        let m = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 1.0, -1.0]));
        assert!(matches!(
            causal_factor(&m, 1, FactorSide::LowerUpper),
            Err(Error::NotPositiveDefinite { pivot: 2, .. })
        ));
        assert!(matches!(
            causal_factor(&m, 1, FactorSide::UpperLower),
            Err(Error::NotPositiveDefinite { pivot: 2, .. })
        ));
    }

    #[test]
    fn dense_block_factor_residual() {
        let b = DMatrix::from_fn(6, 6, |i, j| ((i * 7 + j * 3) % 5) as f64 - 2.0);
        let m = &b * b.transpose() + DMatrix::identity(6, 6);
        for side in [FactorSide::LowerUpper, FactorSide::UpperLower] {
            let f = causal_factor(&m, 2, side).unwrap();
            assert!(f.residual() < 1e-12);
            let (_, _, above) = max_anticausal_block(&f.factor, 2, 2);
            assert_eq!(above, 0.0);
            for k in 0..3 {
                let d = f.factor.view((2 * k, 2 * k), (2, 2)).into_owned();
                assert_relative_eq!(d.clone(), d.transpose(), epsilon = 1e-14);
                assert!(crate::linalg::min_eigenvalue(&d) > 0.0);
            }
        }
    }

    #[test]
    fn causal_part_is_idempotent() {
        let m = DMatrix::from_fn(6, 9, |i, j| (i as f64) - 0.5 * j as f64);
        let once = causal_part(&m, 2, 3);
        assert_eq!(causal_part(&once, 2, 3), once);
        assert_eq!(max_anticausal_block(&once, 2, 3).2, 0.0);
    }
}
