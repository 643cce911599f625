use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use tumorctl::config::ExperimentConfig;
use tumorctl::experiment;
use tumorctl::io::ArtifactDir;
use tumorctl::verify::ALL_CRITERIA;
use tumorctl::Error;

const EXIT_CONFIG: u8 = 2;
const EXIT_SOLVER: u8 = 3;
const EXIT_VERIFY: u8 = 4;

/// Simulation, optimal control and verification for the fractional
/// Cahn-Hilliard tumor growth model.
#[derive(Parser, Debug)]
#[command(name = "tumorctl", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Forward solve with the configured control `u0`.
    Simulate(Common),
    /// Projected gradient descent from `u0`.
    Optimize(Common),
    /// Run the verification suites; exits with 4 if any check fails.
    Verify {
        #[command(flatten)]
        common: Common,
        /// Comma-separated subset of criteria (default: all).
        #[arg(long, value_delimiter = ',')]
        criteria: Option<Vec<u8>>,
    },
    /// Linearized residuals and the Frechet remainder sweep.
    LinearizeCheck(Common),
    /// Adjoint residuals, FD gradient check and viscosity sweep.
    AdjointCheck(Common),
}

#[derive(Args, Debug)]
struct Common {
    /// TOML config; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output root; artifacts go to `<out>/<run_id>/`.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Replace the step count by `round(T / dt)`.
    #[arg(long, value_name = "DT")]
    dt_override: Option<f64>,
    #[arg(long)]
    quiet: bool,
}

impl Common {
    fn load(&self) -> Result<ExperimentConfig, Error> {
        let mut cfg = match &self.config {
            Some(path) => ExperimentConfig::from_path(path)?,
            None => ExperimentConfig::default(),
        };
        if let Some(out) = &self.out {
            cfg.output_dir = out.clone();
        }
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        if let Some(dt) = self.dt_override {
            cfg = cfg.with_dt(dt)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Config { .. } => EXIT_CONFIG,
        _ => EXIT_SOLVER,
    }
}

fn run(command: &Command) -> Result<u8, Error> {
    let common = match command {
        Command::Simulate(c) | Command::Optimize(c) | Command::LinearizeCheck(c) | Command::AdjointCheck(c) => c,
        Command::Verify { common, .. } => common,
    };
    let cfg = common.load()?;
    let out = ArtifactDir::create(&cfg.output_dir, &cfg.run_id)?;
    let say = |line: String| {
        if !common.quiet {
            println!("{line}");
        }
    };
    match command {
        Command::Simulate(_) => {
            let exp = cfg.build()?;
            let s = experiment::run_simulate(&exp, &out)?;
            say(format!(
                "simulate: {} steps, phi in [{:.6}, {:.6}], energy {:.6e} -> {:.6e}",
                s.n_steps, s.phi_min, s.phi_max, s.energy_initial, s.energy_final
            ));
        }
        Command::Optimize(_) => {
            let exp = cfg.build()?;
            let s = experiment::run_optimize(&exp, &out)?;
            say(format!(
                "optimize: {:?} after {} iterations, J {:.6e} -> {:.6e}, stationarity {:.3e}",
                s.termination, s.iterations, s.cost_initial, s.cost_final, s.stationarity
            ));
        }
        Command::Verify { criteria, .. } => {
            let criteria = criteria.clone().unwrap_or_else(|| ALL_CRITERIA.to_vec());
            if let Some(bad) = criteria.iter().find(|c| !ALL_CRITERIA.contains(c)) {
                return Err(Error::Config {
                    path: "--criteria".into(),
                    message: format!("no criterion {bad}; expected 1..=10"),
                });
            }
            let report = experiment::run_verify(&cfg, &criteria, &out)?;
            for c in &report.checks {
                say(c.summary_line());
                for n in &c.notes {
                    say(format!("    {n}"));
                }
            }
            if !report.passed {
                return Ok(EXIT_VERIFY);
            }
        }
        Command::LinearizeCheck(_) => {
            let exp = cfg.build()?;
            let r = experiment::run_linearize_check(&exp, &out)?;
            say(format!("linearized residual {:.3e}", r.max_residual));
            say(r.check.summary_line());
            if !r.check.passed {
                return Ok(EXIT_VERIFY);
            }
        }
        Command::AdjointCheck(_) => {
            let exp = cfg.build()?;
            let r = experiment::run_adjoint_check(&exp, &out)?;
            say(format!("adjoint residual {:.3e}, J(u0) = {:.6e}", r.max_residual, r.cost));
            say(r.gradient.summary_line());
            say(r.viscosity.summary_line());
            if !(r.gradient.passed && r.viscosity.passed) {
                return Ok(EXIT_VERIFY);
            }
        }
    }
    say(format!("artifacts in {}", out.root().display()));
    Ok(0)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli.command) {
        Ok(code) => ExitCode::from(code),
        Err(err) => {
            eprintln!("error: {err}");
            if let Some(step) = err.step_index() {
                eprintln!("  at time step {step}");
            }
            ExitCode::from(exit_code(&err))
        }
    }
}
