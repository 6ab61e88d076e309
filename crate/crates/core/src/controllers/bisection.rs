use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::linalg::{max_abs, sym};
use crate::system::LqSystem;

/// Lowest level tried by the bisection.
pub const LOWER_BRACKET: f64 = 1e-8;
const MAX_DOUBLINGS: usize = 60;
const GRID: [f64; 8] = [0.25, 0.5, 0.75, 0.95, 1.05, 1.5, 2.0, 4.0];

#[derive(Debug, Clone, PartialEq)]
pub struct BracketStep {
    pub lower: f64,
    pub upper: f64,
    pub trial: f64,
    pub feasible: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GammaSearchResult {
    /// Upper end of the final bracket (always feasible).
    pub gamma_opt: f64,
    pub history: Vec<BracketStep>,
    pub iterations: usize,
    /// Per-step margins of the feasibility test at `gamma_opt`.
    pub final_margins: Vec<f64>,
    /// Whether feasibility was monotone on a grid around `gamma_opt`.
    pub monotone_on_grid: bool,
    /// Set when the disturbance never reaches the cost and no search ran.
    pub degenerate: bool,
}

impl GammaSearchResult {
    pub fn degenerate() -> Self {
        GammaSearchResult {
            gamma_opt: 0.0,
            history: Vec::new(),
            iterations: 0,
            final_margins: Vec::new(),
            monotone_on_grid: true,
            degenerate: true,
        }
    }
}

/// Bisection for the smallest feasible level.
///
/// `test(γ)` returns feasibility and per-step margins. The bracket starts at
/// `[1e-8, 1]` and the upper end is doubled until feasible. The search stops
/// once `upper - lower <= tol * upper`.
pub fn bisect_level<F>(tol: f64, mut test: F) -> Result<GammaSearchResult>
where
    F: FnMut(f64) -> Result<(bool, Vec<f64>)>,
{
    if !(tol > 0.0 && tol < 1.0) {
        return Err(Error::OutOfRange {
            what: "tol".into(),
            value: tol,
            bound: "(0, 1)".into(),
        });
    }
    let mut history = Vec::new();
    let mut lower = LOWER_BRACKET;
    let (low_ok, low_margins) = test(lower)?;
    history.push(BracketStep { lower, upper: lower, trial: lower, feasible: low_ok });
    if low_ok {
        return Ok(GammaSearchResult {
            gamma_opt: lower,
            iterations: history.len(),
            history,
            final_margins: low_margins,
            monotone_on_grid: true,
            degenerate: false,
        });
    }

    let mut upper = 1.0;
    let mut doublings = 0;
    let mut upper_margins = loop {
        let (ok, margins) = test(upper)?;
        history.push(BracketStep { lower, upper, trial: upper, feasible: ok });
        if ok {
            break margins;
        }
        if doublings == MAX_DOUBLINGS {
            return Err(Error::BracketFailure { doublings });
        }
        lower = upper;
        upper *= 2.0;
        doublings += 1;
    };

    while upper - lower > tol * upper {
        let mid = 0.5 * (lower + upper);
        let (ok, margins) = test(mid)?;
        history.push(BracketStep { lower, upper, trial: mid, feasible: ok });
        if ok {
            upper = mid;
            upper_margins = margins;
        } else {
            lower = mid;
        }
    }

    let mut monotone = true;
    for factor in GRID {
        let trial = upper * factor;
        let (ok, _) = test(trial)?;
        if ok != (factor > 1.0) {
            monotone = false;
        }
    }
    if !monotone {
        log::warn!("feasibility is not monotone on the grid around gamma = {upper:e}");
    }

    Ok(GammaSearchResult {
        gamma_opt: upper,
        iterations: history.len(),
        history,
        final_margins: upper_margins,
        monotone_on_grid: monotone,
        degenerate: false,
    })
}

/// Whether any disturbance affects a weighted state, i.e. `G != 0`.
///
/// Uses the observability-type recursion `O_t = Q_t + A_t' O_{t+1} A_t`,
/// `O_T = Q_T`: column block `j` of `G` vanishes iff `B_{w,j}' O_{j+1} B_{w,j} = 0`.
pub fn disturbance_reaches_cost(sys: &LqSystem) -> bool {
    let horizon = sys.horizon();
    let mut o = sym(sys.qt());
    let scale = 1.0 + max_abs(&o);
    let mut reach = 0.0_f64;
    for t in (0..horizon).rev() {
        let bw = sys.bw(t);
        let seen: DMatrix<f64> = bw.transpose() * &o * bw;
        reach = reach.max(max_abs(&seen) / (scale + max_abs(&o)));
        o = sym(&(sys.q(t) + sys.a(t).transpose() * &o * sys.a(t)));
    }
    reach > 1e-14
}
