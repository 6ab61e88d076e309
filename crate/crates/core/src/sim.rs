//! Disturbance generation, rollouts and multi-controller comparisons.
//!
//! Random sequences use ChaCha8 seeded with the experiment seed and the
//! trial index as stream, so trial `k` is reproducible on any platform and
//! independent of how trials are scheduled.

use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::augmentation::{delayed_step, Pipeline};
use crate::controllers::{Controller, ControllerSpec};
use crate::error::{Error, Result};
use crate::linalg::psd_sqrt;
use crate::oracle::{build_operators, controller_operator, worst_case_regret_gain};
use crate::system::{check_psd, validate_system, LqSystem, SystemData, Trajectory};

/// Identifier of the random source, recorded in reports.
pub const RNG_NAME: &str = "chacha8-v1";

pub fn trial_rng(seed: u64, trial: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial);
    rng
}

#[derive(Debug, Clone, PartialEq)]
pub enum DisturbanceKind {
    Gaussian {
        mean: DVector<f64>,
        covariance: DMatrix<f64>,
    },
    /// Independent components with mean `+μ` for `period` steps, then `-μ`,
    /// and so on.
    Alternating {
        mean: f64,
        period: usize,
        variance: f64,
    },
    Sinusoid {
        amplitude: f64,
        frequency: f64,
        phase: f64,
    },
    Constant(DVector<f64>),
    /// Unit-energy disturbance maximising the regret of `target`.
    WorstCase(ControllerSpec),
}

#[derive(Debug, Clone, PartialEq)]
pub struct DisturbanceSpec {
    pub kind: DisturbanceKind,
    pub seed: u64,
}

impl DisturbanceSpec {
    pub fn new(kind: DisturbanceKind, seed: u64) -> Self {
        DisturbanceSpec { kind, seed }
    }

    pub fn is_random(&self) -> bool {
        matches!(
            self.kind,
            DisturbanceKind::Gaussian { .. } | DisturbanceKind::Alternating { .. }
        )
    }
}

fn check_len(what: &str, found: usize, expected: usize) -> Result<()> {
    if found != expected {
        return Err(Error::DimensionMismatch {
            matrix: what.into(),
            step: None,
            expected: (expected, 1),
            found: (found, 1),
        });
    }
    Ok(())
}

fn standard_normal(rng: &mut ChaCha8Rng, p: usize) -> DVector<f64> {
    DVector::from_fn(p, |_, _| rng.sample::<f64, _>(StandardNormal))
}

/// Sequence for trial 0.
pub fn generate_disturbance(spec: &DisturbanceSpec, sys: &LqSystem) -> Result<Vec<DVector<f64>>> {
    generate_trial(spec, sys, 0, 1e-6)
}

/// Sequence for trial `trial`; `tol` is used when a worst-case target has
/// to be synthesised.
pub fn generate_trial(spec: &DisturbanceSpec, sys: &LqSystem, trial: u64, tol: f64) -> Result<Vec<DVector<f64>>> {
    let (horizon, p) = (sys.horizon(), sys.disturbance_dim());
    let mut rng = trial_rng(spec.seed, trial);
    Ok(match &spec.kind {
        DisturbanceKind::Gaussian { mean, covariance } => {
            check_len("gaussian mean", mean.len(), p)?;
            if covariance.shape() != (p, p) {
                return Err(Error::DimensionMismatch {
                    matrix: "gaussian covariance".into(),
                    step: None,
                    expected: (p, p),
                    found: covariance.shape(),
                });
            }
            check_psd(covariance, "gaussian covariance")?;
            let root = psd_sqrt(covariance);
            (0..horizon).map(|_| mean + &root * standard_normal(&mut rng, p)).collect()
        }
        DisturbanceKind::Alternating { mean, period, variance } => {
            if *period == 0 {
                return Err(Error::OutOfRange {
                    what: "alternating period".into(),
                    value: 0.0,
                    bound: ">= 1".into(),
                });
            }
            if variance.is_nan() || *variance < 0.0 {
                return Err(Error::OutOfRange {
                    what: "alternating variance".into(),
                    value: *variance,
                    bound: ">= 0".into(),
                });
            }
            let sd = variance.sqrt();
            (0..horizon)
                .map(|t| {
                    let sign = if (t / period) % 2 == 0 { 1.0 } else { -1.0 };
                    standard_normal(&mut rng, p) * sd + DVector::from_element(p, sign * mean)
                })
                .collect()
        }
        DisturbanceKind::Sinusoid { amplitude, frequency, phase } => (0..horizon)
            .map(|t| {
                let v = amplitude * (2.0 * std::f64::consts::PI * frequency * t as f64 + phase).sin();
                DVector::from_element(p, v)
            })
            .collect(),
        DisturbanceKind::Constant(value) => {
            check_len("constant disturbance", value.len(), p)?;
            vec![value.clone(); horizon]
        }
        DisturbanceKind::WorstCase(target) => {
            let ops = build_operators(sys)?;
            let mut built = target.build(sys, tol)?;
            let k = controller_operator(sys, built.controller.as_mut())?;
            worst_case_regret_gain(&ops, &k)?.witness
        }
    })
}

fn visible(w: &[DVector<f64>], t: usize, lookahead: usize) -> &[DVector<f64>] {
    let last = t.saturating_add(lookahead).min(w.len() - 1);
    &w[..=last]
}

fn checked_action(sys: &LqSystem, t: usize, u: DVector<f64>) -> Result<DVector<f64>> {
    if u.len() != sys.control_dim() {
        return Err(Error::DimensionMismatch {
            matrix: "u".into(),
            step: Some(t),
            expected: (sys.control_dim(), 1),
            found: (u.len(), 1),
        });
    }
    if u.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite { step: t });
    }
    Ok(u)
}

/// Closed-loop rollout from `x_0 = 0`. At step `t` the controller sees `x_t`
/// and `w_0..=w_{t+lookahead}` before choosing `u_t`.
pub fn rollout(sys: &LqSystem, controller: &mut dyn Controller, w: &[DVector<f64>]) -> Result<Trajectory> {
    rollout_delayed(sys, 0, controller, w)
}

/// Rollout of the plant whose actions reach the state `d` steps later.
pub fn rollout_delayed(
    sys: &LqSystem,
    d: usize,
    controller: &mut dyn Controller,
    w: &[DVector<f64>],
) -> Result<Trajectory> {
    sys.check_sequence("w", w, sys.disturbance_dim())?;
    controller.reset();
    let horizon = sys.horizon();
    let lookahead = controller.lookahead();
    let mut x = Vec::with_capacity(horizon + 1);
    let mut u = Vec::with_capacity(horizon);
    x.push(DVector::zeros(sys.state_dim()));
    for t in 0..horizon {
        let ut = checked_action(sys, t, controller.act(t, &x[t], visible(w, t, lookahead))?)?;
        u.push(ut);
        let next = delayed_step(sys, d, t, &x[t], &u, &w[t]);
        if next.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { step: t });
        }
        x.push(next);
    }
    Ok(Trajectory::from_states(sys, x, u, w.to_vec()))
}

/// A plant together with its input delay.
#[derive(Debug, Clone)]
pub struct Plant {
    pub sys: LqSystem,
    pub delay: usize,
}

impl Plant {
    pub fn new(sys: LqSystem) -> Self {
        Plant { sys, delay: 0 }
    }

    pub fn rollout(&self, controller: &mut dyn Controller, w: &[DVector<f64>]) -> Result<Trajectory> {
        rollout_delayed(&self.sys, self.delay, controller, w)
    }

    /// The clairvoyant baseline for this plant.
    pub fn offline_controller(&self) -> Result<Box<dyn Controller>> {
        Ok(Pipeline::new(&self.sys, 0, self.delay)?
            .build(&ControllerSpec::Offline, 1e-6)?
            .controller)
    }
}

#[derive(Debug, Clone)]
pub struct TrialRecord {
    pub trial: u64,
    pub w: Vec<DVector<f64>>,
    /// One trajectory per label, offline last.
    pub trajectories: Vec<Trajectory>,
}

impl TrialRecord {
    pub fn costs(&self) -> Vec<f64> {
        self.trajectories.iter().map(|t| t.total_cost).collect()
    }

    /// Cost minus the offline cost on the same disturbance.
    pub fn regrets(&self) -> Vec<f64> {
        let offline = self.trajectories.last().map_or(0.0, |t| t.total_cost);
        self.trajectories.iter().map(|t| t.total_cost - offline).collect()
    }
}

#[derive(Debug, Clone)]
pub struct ComparisonReport {
    /// Controller names followed by `"offline"`.
    pub labels: Vec<String>,
    pub seed: u64,
    pub rng: &'static str,
    pub trials: Vec<TrialRecord>,
    /// Trial mean of the time-averaged cost, per label and step.
    pub mean_time_averaged: Vec<Vec<f64>>,
    pub mean_cost: Vec<f64>,
    pub mean_regret: Vec<f64>,
    pub runtime: Duration,
}

impl ComparisonReport {
    pub fn label_index(&self, name: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == name)
    }

    /// Final time-averaged cost of each trial for one label.
    pub fn final_time_averaged(&self, label: usize) -> Vec<f64> {
        self.trials
            .iter()
            .map(|r| *r.trajectories[label].time_averaged_costs().last().unwrap_or(&0.0))
            .collect()
    }
}

/// Runs every controller and the offline baseline on `trials` disturbance
/// draws. Trials run in parallel; results are ordered by trial index.
pub fn compare(
    plant: &Plant,
    controllers: &[Box<dyn Controller>],
    spec: &DisturbanceSpec,
    trials: usize,
) -> Result<ComparisonReport> {
    let start = Instant::now();
    let offline = plant.offline_controller()?;
    let mut labels: Vec<String> = controllers.iter().map(|c| c.name().to_string()).collect();
    labels.push("offline".into());
    let worst_case = match spec.kind {
        DisturbanceKind::WorstCase(_) => Some(generate_trial(spec, &plant.sys, 0, 1e-6)?),
        _ => None,
    };

    let records = (0..trials as u64)
        .into_par_iter()
        .map(|trial| {
            let w = match &worst_case {
                Some(w) => w.clone(),
                None => generate_trial(spec, &plant.sys, trial, 1e-6)?,
            };
            let mut trajectories = Vec::with_capacity(labels.len());
            for c in controllers.iter().chain(std::iter::once(&offline)) {
                let mut local = c.boxed();
                trajectories.push(plant.rollout(local.as_mut(), &w)?);
            }
            Ok(TrialRecord { trial, w, trajectories })
        })
        .collect::<Result<Vec<_>>>()?;

    let horizon = plant.sys.horizon();
    let count = records.len().max(1) as f64;
    let mut mean_time_averaged = vec![vec![0.0; horizon]; labels.len()];
    let mut mean_cost = vec![0.0; labels.len()];
    let mut mean_regret = vec![0.0; labels.len()];
    for record in &records {
        let regrets = record.regrets();
        for (k, traj) in record.trajectories.iter().enumerate() {
            for (acc, v) in mean_time_averaged[k].iter_mut().zip(traj.time_averaged_costs()) {
                *acc += v / count;
            }
            mean_cost[k] += traj.total_cost / count;
            mean_regret[k] += regrets[k] / count;
        }
    }
    Ok(ComparisonReport {
        labels,
        seed: spec.seed,
        rng: RNG_NAME,
        trials: records,
        mean_time_averaged,
        mean_cost,
        mean_regret,
        runtime: start.elapsed(),
    })
}

/// Percentile bootstrap of the mean of `samples`; returns the
/// `(alpha/2, 1 - alpha/2)` quantiles.
pub fn bootstrap_mean_interval(samples: &[f64], resamples: usize, alpha: f64, seed: u64) -> (f64, f64) {
    if samples.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = samples.len();
    let mut means: Vec<f64> = (0..resamples)
        .map(|_| (0..n).map(|_| samples[rng.random_range(0..n)]).sum::<f64>() / n as f64)
        .collect();
    means.sort_by(f64::total_cmp);
    let pick = |q: f64| means[((q * resamples as f64).floor() as usize).min(resamples - 1)];
    (pick(alpha / 2.0), pick(1.0 - alpha / 2.0))
}

#[derive(Debug, Clone, Copy)]
pub struct RandomSystemOptions {
    pub time_varying: bool,
    /// Draw a non-identity `R_t`.
    pub general_control_weight: bool,
    pub terminal_weight: bool,
    /// Scale of `A_t` relative to a unit spectral radius.
    pub a_scale: f64,
}

impl Default for RandomSystemOptions {
    fn default() -> Self {
        RandomSystemOptions {
            time_varying: true,
            general_control_weight: true,
            terminal_weight: true,
            a_scale: 0.9,
        }
    }
}

fn gaussian_matrix<R: Rng>(rng: &mut R, rows: usize, cols: usize, scale: f64) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| scale * rng.sample::<f64, _>(StandardNormal))
}

/// Random well-posed plant used by tests and benches.
pub fn random_system<R: Rng>(
    rng: &mut R,
    n: usize,
    m: usize,
    p: usize,
    horizon: usize,
    opts: RandomSystemOptions,
) -> LqSystem {
    let draw = |rng: &mut R| {
        let a = gaussian_matrix(rng, n, n, opts.a_scale / (n as f64).sqrt());
        let bu = gaussian_matrix(rng, n, m, 1.0);
        let bw = gaussian_matrix(rng, n, p, 1.0);
        let c = gaussian_matrix(rng, n, n, 1.0 / (n as f64).sqrt());
        let q = &c * c.transpose() + DMatrix::identity(n, n) * 0.1;
        let r = if opts.general_control_weight {
            let d = gaussian_matrix(rng, m, m, 0.5 / (m as f64).sqrt());
            DMatrix::identity(m, m) + &d * d.transpose()
        } else {
            DMatrix::identity(m, m)
        };
        (a, bu, bw, q, r)
    };
    let mut data = SystemData {
        a: Vec::with_capacity(horizon),
        bu: Vec::with_capacity(horizon),
        bw: Vec::with_capacity(horizon),
        q: Vec::with_capacity(horizon),
        r: Vec::with_capacity(horizon),
        qt: DMatrix::zeros(n, n),
    };
    let fixed = draw(rng);
    for _ in 0..horizon {
        let (a, bu, bw, q, r) = if opts.time_varying { draw(rng) } else { fixed.clone() };
        data.a.push(a);
        data.bu.push(bu);
        data.bw.push(bw);
        data.q.push(q);
        data.r.push(r);
    }
    if opts.terminal_weight {
        let c = gaussian_matrix(rng, n, n, 1.0 / (n as f64).sqrt());
        data.qt = &c * c.transpose();
    }
    validate_system(data).expect("random system is well posed")
}
