//! Experiment configuration: parsing, validation and the resolved echo.

use std::collections::BTreeMap;
use std::path::PathBuf;

use nalgebra::{DMatrix, DVector};
use regret_core::controllers::{ControllerSpec, FeasibilityTest, Level};
use regret_core::sim::{DisturbanceKind, DisturbanceSpec};
use regret_core::system::validate_system;
use regret_core::{LqSystem, SystemData};
use serde::Deserialize;
use serde_json::{json, Value};

use crate::error::{CliError, Result};

pub const DEFAULT_TOL: f64 = 1e-6;
pub const DEFAULT_TRIALS: usize = 1;
pub const DEFAULT_SEED: u64 = 0;

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
enum MatrixInput {
    Scalar(f64),
    Column(Vec<f64>),
    Rows(Vec<Vec<f64>>),
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawStage {
    #[serde(rename = "A")]
    a: MatrixInput,
    #[serde(rename = "Bu")]
    bu: MatrixInput,
    #[serde(rename = "Bw")]
    bw: MatrixInput,
    #[serde(rename = "Q")]
    q: MatrixInput,
    #[serde(rename = "R")]
    r: MatrixInput,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawLti {
    #[serde(rename = "A")]
    a: MatrixInput,
    #[serde(rename = "Bu")]
    bu: MatrixInput,
    #[serde(rename = "Bw")]
    bw: MatrixInput,
    #[serde(rename = "Q")]
    q: MatrixInput,
    #[serde(rename = "R")]
    r: MatrixInput,
    #[serde(rename = "QT")]
    qt: Option<MatrixInput>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawLtv {
    steps: Vec<RawStage>,
    #[serde(rename = "QT")]
    qt: Option<MatrixInput>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(rename_all = "lowercase")]
enum RawSystem {
    Lti(RawLti),
    Ltv(RawLtv),
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
enum LevelInput {
    Value(f64),
    Word(String),
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
enum ControllerEntry {
    Name(String),
    Level(BTreeMap<String, LevelInput>),
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
enum RawDisturbance {
    Gaussian {
        mean: Option<MatrixInput>,
        covariance: Option<MatrixInput>,
    },
    Alternating {
        mean: Option<f64>,
        period: Option<usize>,
        variance: Option<f64>,
    },
    Sinusoid {
        amplitude: f64,
        frequency: f64,
        phase: Option<f64>,
    },
    Constant {
        value: MatrixInput,
    },
    WorstCase {
        target: ControllerEntry,
    },
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(rename_all = "lowercase")]
enum RawTest {
    Level1,
    Printed,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawOutputs {
    csv: Option<PathBuf>,
    json: Option<PathBuf>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    system: RawSystem,
    horizon: Option<usize>,
    controllers: Option<Vec<ControllerEntry>>,
    lookahead: Option<usize>,
    delay: Option<usize>,
    disturbance: Option<RawDisturbance>,
    trials: Option<usize>,
    seed: Option<u64>,
    tol: Option<f64>,
    feasibility_test: Option<RawTest>,
    outputs: Option<RawOutputs>,
}

/// One step of plant and cost matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct Stage {
    pub a: DMatrix<f64>,
    pub bu: DMatrix<f64>,
    pub bw: DMatrix<f64>,
    pub q: DMatrix<f64>,
    pub r: DMatrix<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum SystemSource {
    /// Broadcast over the horizon.
    Lti(Stage),
    Ltv(Vec<Stage>),
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Outputs {
    pub csv: Option<PathBuf>,
    pub json: Option<PathBuf>,
}

/// A fully resolved and validated configuration.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub source: SystemSource,
    pub qt: DMatrix<f64>,
    pub horizon: usize,
    pub system: LqSystem,
    pub controllers: Vec<ControllerSpec>,
    pub lookahead: usize,
    pub delay: usize,
    pub disturbance: DisturbanceKind,
    pub trials: usize,
    pub seed: u64,
    pub tol: f64,
    pub feasibility_test: FeasibilityTest,
    pub outputs: Outputs,
}

/// Command-line values that replace configured ones.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub tol: Option<f64>,
    pub horizon: Option<usize>,
    pub trials: Option<usize>,
    pub feasibility_test: Option<FeasibilityTest>,
}

pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    let raw: RawConfig = serde_json::from_str(text)?;
    resolve(raw)
}

pub fn parse_config_value(doc: Value) -> Result<ExperimentConfig> {
    let raw: RawConfig = serde_json::from_value(doc)?;
    resolve(raw)
}

fn matrix(input: &MatrixInput, field: &str) -> Result<DMatrix<f64>> {
    let m = match input {
        MatrixInput::Scalar(v) => DMatrix::from_element(1, 1, *v),
        MatrixInput::Column(v) => DMatrix::from_column_slice(v.len(), 1, v),
        MatrixInput::Rows(rows) => {
            let cols = rows.first().map_or(0, Vec::len);
            if rows.iter().any(|r| r.len() != cols) {
                return Err(CliError::config(field, "rows must all have the same length"));
            }
            DMatrix::from_fn(rows.len(), cols, |i, j| rows[i][j])
        }
    };
    if m.is_empty() {
        return Err(CliError::config(field, "matrix must be non-empty"));
    }
    Ok(m)
}

fn stage(raw: &RawStage, prefix: &str) -> Result<Stage> {
    let f = |name: &str| format!("{prefix}.{name}");
    Ok(Stage {
        a: matrix(&raw.a, &f("A"))?,
        bu: matrix(&raw.bu, &f("Bu"))?,
        bw: matrix(&raw.bw, &f("Bw"))?,
        q: matrix(&raw.q, &f("Q"))?,
        r: matrix(&raw.r, &f("R"))?,
    })
}

/// Splits core matrix labels such as `R_3` into `("R", Some(3))`.
fn split_step(label: &str) -> (&str, Option<usize>) {
    match label.rsplit_once('_') {
        Some((name, t)) => match t.parse() {
            Ok(t) => (name, Some(t)),
            Err(_) => (label, None),
        },
        None => (label, None),
    }
}

impl SystemSource {
    fn kind(&self) -> &'static str {
        match self {
            SystemSource::Lti(_) => "lti",
            SystemSource::Ltv(_) => "ltv",
        }
    }

    fn field(&self, name: &str, step: Option<usize>) -> String {
        match (self, step) {
            (SystemSource::Ltv(_), Some(t)) if name != "QT" => format!("system.ltv.steps[{t}].{name}"),
            _ => format!("system.{}.{name}", self.kind()),
        }
    }

    fn data(&self, qt: &DMatrix<f64>, horizon: usize) -> SystemData {
        match self {
            SystemSource::Lti(s) => SystemData::time_invariant(
                s.a.clone(),
                s.bu.clone(),
                s.bw.clone(),
                s.q.clone(),
                s.r.clone(),
                qt.clone(),
                horizon,
            ),
            SystemSource::Ltv(steps) => SystemData {
                a: steps.iter().map(|s| s.a.clone()).collect(),
                bu: steps.iter().map(|s| s.bu.clone()).collect(),
                bw: steps.iter().map(|s| s.bw.clone()).collect(),
                q: steps.iter().map(|s| s.q.clone()).collect(),
                r: steps.iter().map(|s| s.r.clone()).collect(),
                qt: qt.clone(),
            },
        }
    }

    /// Validates the plant, naming the offending config field on failure.
    fn build(&self, qt: &DMatrix<f64>, horizon: usize) -> Result<LqSystem> {
        use regret_core::Error as E;
        validate_system(self.data(qt, horizon)).map_err(|e| match e {
            E::NotDefinite {
                matrix,
                requirement,
                eigenvalue,
            } => {
                let (name, step) = split_step(&matrix);
                CliError::config(
                    self.field(name, step),
                    format!("{name} must be {requirement} (smallest eigenvalue {eigenvalue:e})"),
                )
            }
            E::DimensionMismatch {
                matrix,
                step,
                expected,
                found,
            } => CliError::config(
                self.field(&matrix, step),
                format!(
                    "{matrix} must be {}x{} to match the other matrices, found {}x{}",
                    expected.0, expected.1, found.0, found.1
                ),
            ),
            E::OutOfRange { what, bound, .. } if what == "horizon" => {
                CliError::config("horizon", format!("horizon {bound}"))
            }
            E::OutOfRange { what, bound, .. } => {
                let (name, step) = split_step(&what);
                CliError::config(self.field(name, step), format!("{name}: {bound}"))
            }
            other => CliError::config("system", other.to_string()),
        })
    }
}

fn level(input: &LevelInput, field: &str) -> Result<Level> {
    match input {
        LevelInput::Word(w) if w == "auto" => Ok(Level::Auto),
        LevelInput::Word(w) => Err(CliError::config(field, format!("expected \"auto\" or a level, found \"{w}\""))),
        LevelInput::Value(g) if g.is_finite() && *g > 0.0 => Ok(Level::Fixed(*g)),
        LevelInput::Value(g) => Err(CliError::config(field, format!("level must be positive and finite, found {g}"))),
    }
}

fn controller(entry: &ControllerEntry, field: &str, test: FeasibilityTest) -> Result<ControllerSpec> {
    match entry {
        ControllerEntry::Name(name) => match name.as_str() {
            "h2" => Ok(ControllerSpec::H2),
            "offline" => Ok(ControllerSpec::Offline),
            "zero" => Ok(ControllerSpec::Zero),
            "hinf" => Ok(ControllerSpec::Hinf(Level::Auto)),
            "regret" => Ok(ControllerSpec::Regret(Level::Auto, test)),
            other => Err(CliError::config(
                field,
                format!("unknown controller \"{other}\" (expected h2, hinf, regret, offline or zero)"),
            )),
        },
        ControllerEntry::Level(map) => {
            let mut entries = map.iter();
            let (Some((name, value)), None) = (entries.next(), entries.next()) else {
                return Err(CliError::config(field, "expected exactly one of \"hinf\" or \"regret\""));
            };
            let lvl = level(value, &format!("{field}.{name}"))?;
            match name.as_str() {
                "hinf" => Ok(ControllerSpec::Hinf(lvl)),
                "regret" => Ok(ControllerSpec::Regret(lvl, test)),
                other => Err(CliError::config(
                    field,
                    format!("unknown controller \"{other}\" (expected hinf or regret)"),
                )),
            }
        }
    }
}

fn disturbance(raw: &RawDisturbance, p: usize, test: FeasibilityTest) -> Result<DisturbanceKind> {
    let vector = |input: &MatrixInput, field: &str| -> Result<DVector<f64>> {
        let m = matrix(input, field)?;
        match m.shape() {
            (1, 1) => Ok(DVector::from_element(p, m[(0, 0)])),
            (rows, 1) if rows == p => Ok(m.column(0).into_owned()),
            (rows, cols) => Err(CliError::config(
                field,
                format!("expected a scalar or a vector of length {p}, found {rows}x{cols}"),
            )),
        }
    };
    Ok(match raw {
        RawDisturbance::Gaussian { mean, covariance } => {
            let mean = match mean {
                Some(m) => vector(m, "disturbance.mean")?,
                None => DVector::zeros(p),
            };
            let covariance = match covariance {
                None => DMatrix::identity(p, p),
                Some(c) => {
                    let c = matrix(c, "disturbance.covariance")?;
                    match c.shape() {
                        (1, 1) => DMatrix::identity(p, p) * c[(0, 0)],
                        s if s == (p, p) => c,
                        (r, k) => {
                            return Err(CliError::config(
                                "disturbance.covariance",
                                format!("expected a scalar or a {p}x{p} matrix, found {r}x{k}"),
                            ))
                        }
                    }
                }
            };
            let lo = covariance.clone().symmetric_eigenvalues().min();
            if lo < -1e-9 * (1.0 + covariance.norm()) || covariance != covariance.transpose() {
                return Err(CliError::config(
                    "disturbance.covariance",
                    "covariance must be symmetric positive semidefinite",
                ));
            }
            DisturbanceKind::Gaussian { mean, covariance }
        }
        RawDisturbance::Alternating { mean, period, variance } => {
            let (mean, period, variance) = (mean.unwrap_or(1.0), period.unwrap_or(15), variance.unwrap_or(1.0));
            if period == 0 {
                return Err(CliError::config("disturbance.period", "period must be at least 1"));
            }
            if !(variance >= 0.0 && variance.is_finite()) {
                return Err(CliError::config("disturbance.variance", "variance must be finite and non-negative"));
            }
            if !mean.is_finite() {
                return Err(CliError::config("disturbance.mean", "mean must be finite"));
            }
            DisturbanceKind::Alternating { mean, period, variance }
        }
        RawDisturbance::Sinusoid {
            amplitude,
            frequency,
            phase,
        } => DisturbanceKind::Sinusoid {
            amplitude: *amplitude,
            frequency: *frequency,
            phase: phase.unwrap_or(0.0),
        },
        RawDisturbance::Constant { value } => DisturbanceKind::Constant(vector(value, "disturbance.value")?),
        RawDisturbance::WorstCase { target } => {
            DisturbanceKind::WorstCase(controller(target, "disturbance.target", test)?)
        }
    })
}

fn resolve(raw: RawConfig) -> Result<ExperimentConfig> {
    let (source, qt_input, steps) = match &raw.system {
        RawSystem::Lti(l) => {
            let s = stage(
                &RawStage {
                    a: l.a.clone(),
                    bu: l.bu.clone(),
                    bw: l.bw.clone(),
                    q: l.q.clone(),
                    r: l.r.clone(),
                },
                "system.lti",
            )?;
            (SystemSource::Lti(s), l.qt.clone(), None)
        }
        RawSystem::Ltv(l) => {
            let steps = l
                .steps
                .iter()
                .enumerate()
                .map(|(t, s)| stage(s, &format!("system.ltv.steps[{t}]")))
                .collect::<Result<Vec<_>>>()?;
            let len = steps.len();
            (SystemSource::Ltv(steps), l.qt.clone(), Some(len))
        }
    };
    let horizon = match (raw.horizon, steps) {
        (Some(h), Some(len)) if h != len => {
            return Err(CliError::config(
                "horizon",
                format!("horizon {h} does not match the {len} steps of the ltv system"),
            ))
        }
        (Some(h), _) => h,
        (None, Some(len)) => len,
        (None, None) => return Err(CliError::config("horizon", "horizon is required for an lti system")),
    };
    let n = match &source {
        SystemSource::Lti(s) => s.a.nrows(),
        SystemSource::Ltv(steps) => steps.first().map_or(0, |s| s.a.nrows()),
    };
    let field_qt = format!("system.{}.QT", source.kind());
    let qt = match &qt_input {
        Some(m) => matrix(m, &field_qt)?,
        None => DMatrix::zeros(n, n),
    };

    let feasibility_test = match raw.feasibility_test {
        Some(RawTest::Printed) => FeasibilityTest::Printed,
        Some(RawTest::Level1) | None => FeasibilityTest::Level1,
    };
    let controllers = match &raw.controllers {
        Some(list) => list
            .iter()
            .enumerate()
            .map(|(k, c)| controller(c, &format!("controllers[{k}]"), feasibility_test))
            .collect::<Result<Vec<_>>>()?,
        None => vec![
            ControllerSpec::H2,
            ControllerSpec::Hinf(Level::Auto),
            ControllerSpec::Regret(Level::Auto, feasibility_test),
        ],
    };
    for (k, c) in controllers.iter().enumerate() {
        if controllers[..k].iter().any(|d| d.label() == c.label()) {
            return Err(CliError::config(
                format!("controllers[{k}]"),
                format!("controller \"{}\" is listed twice", c.label()),
            ));
        }
    }

    let system = source.build(&qt, horizon)?;
    let disturbance = match &raw.disturbance {
        Some(d) => disturbance(d, system.disturbance_dim(), feasibility_test)?,
        None => DisturbanceKind::Gaussian {
            mean: DVector::zeros(system.disturbance_dim()),
            covariance: DMatrix::identity(system.disturbance_dim(), system.disturbance_dim()),
        },
    };
    let outputs = raw.outputs.clone().unwrap_or_default();
    let config = ExperimentConfig {
        source,
        qt,
        horizon,
        system,
        controllers,
        lookahead: raw.lookahead.unwrap_or(0),
        delay: raw.delay.unwrap_or(0),
        disturbance,
        trials: raw.trials.unwrap_or(DEFAULT_TRIALS),
        seed: raw.seed.unwrap_or(DEFAULT_SEED),
        tol: raw.tol.unwrap_or(DEFAULT_TOL),
        feasibility_test,
        outputs: Outputs {
            csv: outputs.csv,
            json: outputs.json,
        },
    };
    config.check_ranges()?;
    Ok(config)
}

fn rows_json(m: &DMatrix<f64>) -> Value {
    json!((0..m.nrows())
        .map(|i| m.row(i).iter().copied().collect::<Vec<f64>>())
        .collect::<Vec<_>>())
}

fn stage_json(s: &Stage) -> serde_json::Map<String, Value> {
    let mut map = serde_json::Map::new();
    map.insert("A".into(), rows_json(&s.a));
    map.insert("Bu".into(), rows_json(&s.bu));
    map.insert("Bw".into(), rows_json(&s.bw));
    map.insert("Q".into(), rows_json(&s.q));
    map.insert("R".into(), rows_json(&s.r));
    map
}

pub fn controller_json(spec: &ControllerSpec) -> Value {
    let lvl = |l: &Level| match l {
        Level::Auto => json!("auto"),
        Level::Fixed(g) => json!(g),
    };
    match spec {
        ControllerSpec::Zero => json!("zero"),
        ControllerSpec::H2 => json!("h2"),
        ControllerSpec::Offline => json!("offline"),
        ControllerSpec::Hinf(l) => json!({ "hinf": lvl(l) }),
        ControllerSpec::Regret(l, _) => json!({ "regret": lvl(l) }),
    }
}

fn test_name(test: FeasibilityTest) -> &'static str {
    match test {
        FeasibilityTest::Level1 => "level1",
        FeasibilityTest::Printed => "printed",
    }
}

impl ExperimentConfig {
    fn check_ranges(&self) -> Result<()> {
        if !(self.tol > 0.0 && self.tol < 1.0) {
            return Err(CliError::config("tol", format!("tol must lie in (0, 1), found {}", self.tol)));
        }
        if self.lookahead > self.horizon {
            return Err(CliError::config(
                "lookahead",
                format!("lookahead {} exceeds the horizon {}", self.lookahead, self.horizon),
            ));
        }
        if self.delay >= self.horizon {
            return Err(CliError::config(
                "delay",
                format!("delay {} must be less than the horizon {}", self.delay, self.horizon),
            ));
        }
        Ok(())
    }

    pub fn with_overrides(mut self, o: &Overrides) -> Result<Self> {
        if let Some(seed) = o.seed {
            self.seed = seed;
        }
        if let Some(tol) = o.tol {
            self.tol = tol;
        }
        if let Some(trials) = o.trials {
            self.trials = trials;
        }
        if let Some(test) = o.feasibility_test {
            self.feasibility_test = test;
            let retest = |c: ControllerSpec| match c {
                ControllerSpec::Regret(l, _) => ControllerSpec::Regret(l, test),
                other => other,
            };
            self.controllers = self.controllers.into_iter().map(retest).collect();
            if let DisturbanceKind::WorstCase(target) = self.disturbance {
                self.disturbance = DisturbanceKind::WorstCase(retest(target));
            }
        }
        if let Some(h) = o.horizon.filter(|h| *h != self.horizon) {
            if let SystemSource::Ltv(steps) = &self.source {
                return Err(CliError::config(
                    "horizon",
                    format!("cannot change the horizon of an ltv system with {} steps", steps.len()),
                ));
            }
            self.horizon = h;
            self.system = self.source.build(&self.qt, h)?;
        }
        self.check_ranges()?;
        Ok(self)
    }

    pub fn disturbance_spec(&self) -> DisturbanceSpec {
        DisturbanceSpec::new(self.disturbance.clone(), self.seed)
    }

    /// The resolved configuration, every default made explicit. Parsing the
    /// echo yields the same configuration.
    pub fn echo(&self) -> Value {
        let mut system = match &self.source {
            SystemSource::Lti(s) => stage_json(s),
            SystemSource::Ltv(steps) => {
                let mut map = serde_json::Map::new();
                map.insert(
                    "steps".into(),
                    Value::Array(steps.iter().map(|s| Value::Object(stage_json(s))).collect()),
                );
                map
            }
        };
        system.insert("QT".into(), rows_json(&self.qt));
        let disturbance = match &self.disturbance {
            DisturbanceKind::Gaussian { mean, covariance } => json!({
                "kind": "gaussian",
                "mean": mean.iter().copied().collect::<Vec<f64>>(),
                "covariance": rows_json(covariance),
            }),
            DisturbanceKind::Alternating { mean, period, variance } => json!({
                "kind": "alternating",
                "mean": mean,
                "period": period,
                "variance": variance,
            }),
            DisturbanceKind::Sinusoid {
                amplitude,
                frequency,
                phase,
            } => json!({
                "kind": "sinusoid",
                "amplitude": amplitude,
                "frequency": frequency,
                "phase": phase,
            }),
            DisturbanceKind::Constant(v) => json!({
                "kind": "constant",
                "value": v.iter().copied().collect::<Vec<f64>>(),
            }),
            DisturbanceKind::WorstCase(target) => json!({
                "kind": "worst_case",
                "target": controller_json(target),
            }),
        };
        let path = |p: &Option<PathBuf>| p.as_ref().map(|p| json!(p.display().to_string())).unwrap_or(Value::Null);
        json!({
            "system": { self.source.kind(): Value::Object(system) },
            "horizon": self.horizon,
            "controllers": self.controllers.iter().map(controller_json).collect::<Vec<_>>(),
            "lookahead": self.lookahead,
            "delay": self.delay,
            "disturbance": disturbance,
            "trials": self.trials,
            "seed": self.seed,
            "tol": self.tol,
            "feasibility_test": test_name(self.feasibility_test),
            "outputs": { "csv": path(&self.outputs.csv), "json": path(&self.outputs.json) },
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const S1: &str = r#"{
        "system": { "lti": { "A": 1, "Bu": 1, "Bw": 1, "Q": 1, "R": 1 } },
        "horizon": 3
    }"#;

    #[test]
    fn minimal_config_gets_explicit_defaults() {
        let config = parse_config(S1).unwrap();
        let echo = config.echo();
        assert_eq!(echo["lookahead"], json!(0));
        assert_eq!(echo["delay"], json!(0));
        assert_eq!(echo["tol"], json!(1e-6));
        assert_eq!(echo["trials"], json!(1));
        assert_eq!(echo["seed"], json!(0));
        assert_eq!(echo["feasibility_test"], json!("level1"));
        assert_eq!(echo["system"]["lti"]["QT"], json!([[0.0]]));
        assert_eq!(echo["controllers"], json!(["h2", { "hinf": "auto" }, { "regret": "auto" }]));
        assert_eq!(echo["disturbance"]["kind"], json!("gaussian"));
    }

    #[test]
    fn echo_parses_back_to_itself() {
        let config = parse_config(S1).unwrap();
        let again = parse_config_value(config.echo()).unwrap();
        assert_eq!(again.echo(), config.echo());
    }

    #[test]
    fn zero_control_weight_names_the_field() {
        let text = S1.replace("\"R\": 1", "\"R\": 0");
        match parse_config(&text).unwrap_err() {
            CliError::Config { field, message } => {
                assert_eq!(field, "system.lti.R");
                assert!(message.starts_with("R must be positive definite"), "{message}");
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn unknown_fields_are_rejected_with_location() {
        let text = S1.replace("\"horizon\": 3", "\"horizon\": 3, \"horizn\": 4");
        match parse_config(&text).unwrap_err() {
            CliError::Parse { line, message, .. } => {
                assert_eq!(line, 3);
                assert!(message.contains("horizn"), "{message}");
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn syntax_errors_carry_location() {
        let err = parse_config("{\n  \"system\": ,\n}").unwrap_err();
        assert!(matches!(err, CliError::Parse { line: 2, .. }), "{err:?}");
    }

    #[test]
    fn ltv_errors_point_at_the_step() {
        let text = r#"{
            "system": { "ltv": { "steps": [
                { "A": 1, "Bu": 1, "Bw": 1, "Q": 1, "R": 1 },
                { "A": 1, "Bu": 1, "Bw": 1, "Q": -1, "R": 1 }
            ] } }
        }"#;
        match parse_config(text).unwrap_err() {
            CliError::Config { field, message } => {
                assert_eq!(field, "system.ltv.steps[1].Q");
                assert!(message.starts_with("Q must be positive semidefinite"), "{message}");
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn shape_errors_name_the_matrix() {
        let text = S1.replace("\"Bw\": 1", "\"Bw\": [[1, 0], [0, 1]]");
        let err = parse_config(&text).unwrap_err();
        assert!(matches!(&err, CliError::Config { field, .. } if field == "system.lti.Bw"), "{err:?}");
    }

    #[test]
    fn controllers_parse_levels() {
        let text = S1.replace(
            "\"horizon\": 3",
            "\"horizon\": 3, \"controllers\": [\"offline\", {\"hinf\": 2.5}, {\"regret\": \"auto\"}]",
        );
        let config = parse_config(&text).unwrap();
        assert_eq!(
            config.controllers,
            vec![
                ControllerSpec::Offline,
                ControllerSpec::Hinf(Level::Fixed(2.5)),
                ControllerSpec::Regret(Level::Auto, FeasibilityTest::Level1),
            ]
        );
        let bad = S1.replace("\"horizon\": 3", "\"horizon\": 3, \"controllers\": [{\"regret\": \"fast\"}]");
        let err = parse_config(&bad).unwrap_err();
        assert!(matches!(&err, CliError::Config { field, .. } if field == "controllers[0].regret"), "{err:?}");
    }

    #[test]
    fn overrides_rebuild_the_plant() {
        let config = parse_config(S1).unwrap();
        let o = Overrides {
            horizon: Some(7),
            feasibility_test: Some(FeasibilityTest::Printed),
            ..Overrides::default()
        };
        let config = config.with_overrides(&o).unwrap();
        assert_eq!(config.system.horizon(), 7);
        assert_eq!(
            config.controllers[2],
            ControllerSpec::Regret(Level::Auto, FeasibilityTest::Printed)
        );
        let short = Overrides {
            horizon: Some(0),
            ..Overrides::default()
        };
        assert!(config.with_overrides(&short).is_err());
    }

    #[test]
    fn lookahead_and_delay_are_range_checked() {
        let text = S1.replace("\"horizon\": 3", "\"horizon\": 3, \"delay\": 3");
        let err = parse_config(&text).unwrap_err();
        assert!(matches!(&err, CliError::Config { field, .. } if field == "delay"), "{err:?}");
    }
}
