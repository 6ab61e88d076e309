//! Subcommands. Each returns its artifacts as strings; writing them is left
//! to the caller.

use regret_core::augmentation::{augment_delay, Pipeline};
use regret_core::controllers::{
    BuiltController, ControllerSpec, FeasibilityTest, GammaSearchResult, Level, RegretProblem,
};
use regret_core::oracle::{
    build_operators, check_dense_size, optimal_regret_level, probe_operator, worst_case_cost_gain,
    worst_case_regret_gain,
};
use regret_core::sim::{compare, Plant};
use serde_json::{json, Map, Value};

use crate::config::{controller_json, ExperimentConfig};
use crate::emit::{format_float, matrix_json, render_json, vector_json, CsvTable};
use crate::error::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Gamma,
    Synth,
    Simulate,
    Certify,
    /// `simulate` on a preset configuration.
    Pendulum,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Artifacts {
    /// Text for standard output, if the command prints a result directly.
    pub stdout: Option<String>,
    pub csv: Option<String>,
    pub json: Option<String>,
}

pub fn run(command: Command, config: &ExperimentConfig) -> Result<Artifacts> {
    match command {
        Command::Gamma => gamma(config),
        Command::Synth => synth(config),
        Command::Simulate | Command::Pendulum => simulate(config),
        Command::Certify => certify(config),
    }
}

fn search_json(search: &GammaSearchResult) -> Value {
    json!({
        "gamma_opt": search.gamma_opt,
        "iterations": search.iterations,
        "monotone_on_grid": search.monotone_on_grid,
        "degenerate": search.degenerate,
        "final_margins": search.final_margins,
        "history": search.history.iter().map(|s| json!({
            "lower": s.lower,
            "upper": s.upper,
            "trial": s.trial,
            "feasible": s.feasible,
        })).collect::<Vec<_>>(),
    })
}

fn test_name(test: FeasibilityTest) -> &'static str {
    match test {
        FeasibilityTest::Level1 => "level1",
        FeasibilityTest::Printed => "printed",
    }
}

fn pipeline(config: &ExperimentConfig) -> Result<Pipeline> {
    Ok(Pipeline::new(&config.system, config.lookahead, config.delay)?)
}

fn gamma(config: &ExperimentConfig) -> Result<Artifacts> {
    let spec = ControllerSpec::Regret(Level::Auto, config.feasibility_test);
    let built = pipeline(config)?.build(&spec, config.tol)?;
    let search = built.search.unwrap_or_else(GammaSearchResult::degenerate);
    let doc = json!({
        "config": config.echo(),
        "feasibility_test": test_name(config.feasibility_test),
        "gamma_opt": search.gamma_opt,
        "search": search_json(&search),
    });
    Ok(Artifacts {
        stdout: Some(format!("{}\n", format_float(search.gamma_opt))),
        csv: None,
        json: Some(render_json(doc)),
    })
}

fn built_controllers(config: &ExperimentConfig, pipe: &Pipeline) -> Result<Vec<(ControllerSpec, BuiltController)>> {
    config
        .controllers
        .iter()
        .map(|spec| Ok((*spec, pipe.build(spec, config.tol)?)))
        .collect()
}

fn regret_tapes(pipe: &Pipeline, gamma: f64, test: FeasibilityTest) -> Result<Value> {
    let problem = RegretProblem::new(pipe.system())?;
    if problem.has_zero_regret() {
        return Ok(json!({ "gamma": gamma, "zero_regret": true, "feasible": true, "steps": [] }));
    }
    let syn = problem.synthesize(gamma, test)?;
    let horizon = pipe.system().horizon();
    let steps: Vec<Value> = (0..horizon)
        .map(|t| {
            json!({
                "a_hat": matrix_json(syn.transformed.a(t)),
                "bu_hat": matrix_json(syn.transformed.bu(t)),
                "bw_hat": matrix_json(syn.transformed.bw(t)),
                "p_hat": matrix_json(&syn.printed.p[t]),
                "kb": matrix_json(&syn.backward.kb[t]),
                "rb_e": matrix_json(&syn.backward.rb[t]),
                "a_tilde": matrix_json(&syn.forward().a_tilde[t]),
            })
        })
        .collect();
    Ok(json!({
        "gamma": gamma,
        "zero_regret": false,
        "feasibility_test": test_name(test),
        "feasible": syn.is_feasible(),
        "margins": syn.margins,
        "p_hat_terminal": matrix_json(&syn.printed.p[horizon]),
        "steps": steps,
    }))
}

fn synth(config: &ExperimentConfig) -> Result<Artifacts> {
    let pipe = pipeline(config)?;
    let sys = pipe.system();
    let mut controllers = Vec::new();
    let mut regret = Value::Null;
    for (spec, built) in built_controllers(config, &pipe)? {
        let gains = built.controller.gain_schedule().map(|g| {
            json!({
                "state": g.state,
                "steps": g.gains.iter().map(|(k, kw)| json!({
                    "k_state": matrix_json(k),
                    "k_disturbance": matrix_json(kw),
                })).collect::<Vec<_>>(),
            })
        });
        controllers.push(json!({
            "name": spec.label(),
            "spec": controller_json(&spec),
            "gamma": built.gamma,
            "gains": gains,
        }));
        if let ControllerSpec::Regret(_, test) = spec {
            regret = regret_tapes(&pipe, built.gamma.unwrap_or(0.0), test)?;
        }
    }
    let doc = json!({
        "config": config.echo(),
        "synthesis_system": {
            "horizon": sys.horizon(),
            "state_dim": sys.state_dim(),
            "control_dim": sys.control_dim(),
            "disturbance_dim": sys.disturbance_dim(),
        },
        "controllers": controllers,
        "regret": regret,
    });
    let text = render_json(doc);
    Ok(Artifacts {
        stdout: None,
        csv: None,
        json: Some(text),
    })
}

fn simulate(config: &ExperimentConfig) -> Result<Artifacts> {
    let pipe = pipeline(config)?;
    let built: Vec<_> = built_controllers(config, &pipe)?
        .into_iter()
        .filter(|(spec, _)| *spec != ControllerSpec::Offline)
        .collect();
    let plant = Plant {
        sys: config.system.clone(),
        delay: config.delay,
    };
    let controllers: Vec<_> = built.iter().map(|(_, b)| b.controller.boxed()).collect();
    let report = compare(&plant, &controllers, &config.disturbance_spec(), config.trials)?;

    let mut table = CsvTable::new(report.labels.iter().map(|l| format!("cost_{l}")).collect());
    if !report.trials.is_empty() {
        table.rows = (0..config.horizon)
            .map(|t| report.mean_time_averaged.iter().map(|c| c[t]).collect())
            .collect();
    }

    let per_label = |values: &[f64]| -> Value {
        let map: Map<String, Value> = report
            .labels
            .iter()
            .zip(values)
            .map(|(l, v)| (l.clone(), json!(v)))
            .collect();
        Value::Object(map)
    };
    let final_means: Vec<f64> = (0..report.labels.len())
        .map(|k| {
            let v = report.final_time_averaged(k);
            v.iter().sum::<f64>() / v.len().max(1) as f64
        })
        .collect();
    let levels: Map<String, Value> = built
        .iter()
        .map(|(spec, b)| (spec.label().to_string(), json!(b.gamma)))
        .collect();
    let doc = json!({
        "config": config.echo(),
        "labels": report.labels,
        "levels": levels,
        "mean_cost": per_label(&report.mean_cost),
        "mean_regret": per_label(&report.mean_regret),
        "mean_final_time_averaged_cost": per_label(&final_means),
        "rng": report.rng,
        "seed": report.seed,
        "trials": report.trials.len(),
    });
    Ok(Artifacts {
        stdout: None,
        csv: Some(table.render()),
        json: Some(render_json(doc)),
    })
}

fn certify(config: &ExperimentConfig) -> Result<Artifacts> {
    // The delayed plant is certified through its delay augmentation, on
    // which costs and the clairvoyant optimum coincide with the original.
    let delayed = augment_delay(&config.system, config.delay)?;
    let sys = delayed.system();
    check_dense_size(sys)?;
    let ops = build_operators(sys)?;
    let pipe = Pipeline::new(sys, config.lookahead, 0)?;
    let optimum = if config.lookahead == 0 {
        json!(optimal_regret_level(&ops)?)
    } else {
        Value::Null
    };
    let mut controllers = Vec::new();
    for (spec, mut built) in built_controllers(config, &pipe)? {
        let k = probe_operator(sys, built.controller.as_mut())?;
        let cert = worst_case_regret_gain(&ops, &k)?;
        controllers.push(json!({
            "name": spec.label(),
            "spec": controller_json(&spec),
            "gamma": built.gamma,
            "regret_gain": cert.gain,
            "cost_gain": worst_case_cost_gain(&ops, &k),
            "witness": cert.witness.iter().map(vector_json).collect::<Vec<_>>(),
            "controller_operator": matrix_json(&cert.controller_operator),
            "regret_quadratic_form": matrix_json(&cert.regret_quadratic_form),
        }));
    }
    let doc = json!({
        "config": config.echo(),
        "certified_system": {
            "horizon": sys.horizon(),
            "state_dim": sys.state_dim(),
            "control_dim": sys.control_dim(),
            "disturbance_dim": sys.disturbance_dim(),
        },
        "optimal_regret_level_squared": optimum,
        "controllers": controllers,
    });
    Ok(Artifacts {
        stdout: None,
        csv: None,
        json: Some(render_json(doc)),
    })
}
