use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};
use regret_core::controllers::FeasibilityTest;
use regretctl::presets::PendulumMode;
use regretctl::{execute, CliError, Command, Invocation, Overrides};

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Subcommand {
    Gamma,
    Synth,
    Simulate,
    Certify,
    Pendulum,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Mode {
    Stochastic,
    Alternating,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Test {
    Level1,
    Printed,
}

/// Regret-optimal, H2, H-infinity and clairvoyant LQ control experiments.
#[derive(Debug, Parser)]
#[command(name = "regretctl", version)]
struct Args {
    #[arg(value_enum)]
    subcommand: Subcommand,
    /// Experiment configuration (JSON).
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Relative bisection tolerance.
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    csv: Option<PathBuf>,
    #[arg(long)]
    json: Option<PathBuf>,
    #[arg(long, value_enum)]
    mode: Option<Mode>,
    #[arg(long)]
    horizon: Option<usize>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long, value_enum)]
    feasibility_test: Option<Test>,
}

fn invocation(args: Args) -> Invocation {
    let command = match args.subcommand {
        Subcommand::Gamma => Command::Gamma,
        Subcommand::Synth => Command::Synth,
        Subcommand::Simulate => Command::Simulate,
        Subcommand::Certify => Command::Certify,
        Subcommand::Pendulum => Command::Pendulum,
    };
    let test = args.feasibility_test.map(|t| match t {
        Test::Level1 => FeasibilityTest::Level1,
        Test::Printed => FeasibilityTest::Printed,
    });
    Invocation {
        command,
        config: args.config,
        mode: args.mode.map(|m| match m {
            Mode::Stochastic => PendulumMode::Stochastic,
            Mode::Alternating => PendulumMode::Alternating,
        }),
        overrides: Overrides {
            seed: args.seed,
            tol: args.tol,
            horizon: args.horizon,
            trials: args.trials,
            feasibility_test: test,
        },
        csv: args.csv,
        json: args.json,
    }
}

fn fail(err: &CliError) -> ExitCode {
    let record = serde_json::to_string(&err.record()).unwrap_or_default();
    eprintln!("{record}");
    ExitCode::from(err.exit_code() as u8)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let args = match Args::try_parse() {
        Ok(args) => args,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let text = e.render().to_string();
            let message = text.trim().trim_start_matches("error: ").to_string();
            return fail(&CliError::Usage(message));
        }
    };
    match execute(&invocation(args)) {
        Ok(out) => {
            let mut stdout = std::io::stdout().lock();
            if stdout.write_all(out.as_bytes()).and_then(|_| stdout.flush()).is_err() {
                return ExitCode::from(3);
            }
            ExitCode::SUCCESS
        }
        Err(e) => fail(&e),
    }
}
