//! One function per CLI subcommand: run, then write artifacts.

use serde::Serialize;

use crate::adjoint::{adjoint_residuals, solve_adjoint};
use crate::config::{Experiment, ExperimentConfig};
use crate::control::{
    control_to_state, evaluate, projected_gradient_descent, stationarity_residual, variational_inequality_min,
    IterationRecord, Termination,
};
use crate::error::Result;
use crate::io::ArtifactDir;
use crate::linearized::{linearized_residuals, solve_linearized, FrechetProbe};
use crate::state::{discrete_energy, energy_identity_residual, pde_residuals};
use crate::verify::{self, CheckReport, VerifyReport};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimulateSummary {
    pub run_id: String,
    pub n_grid: usize,
    pub n_steps: usize,
    pub dt: f64,
    pub phi_min: f64,
    pub phi_max: f64,
    pub max_mu_sup: f64,
    pub energy_initial: f64,
    pub energy_final: f64,
    pub max_energy_identity_residual: f64,
    pub max_pde_residual: f64,
    pub total_newton_iterations: usize,
}

/// Forward solve with the configured `u0`. Artifacts: `mu`, `phi`, `s`,
/// `control` (raw), `energy.csv`, `summary.json`, `config.toml`.
pub fn run_simulate(exp: &Experiment, out: &ArtifactDir) -> Result<SimulateSummary> {
    let setup = &exp.setup;
    let traj = control_to_state(setup, &exp.u0)?;
    let energy = discrete_energy(&setup.system, &traj)?;
    let identity = energy_identity_residual(&setup.system, &traj, &exp.u0)?;
    let pde = pde_residuals(&setup.system, &traj, &exp.u0)?;
    out.write_raw("mu", &traj.mu)?;
    out.write_raw("phi", &traj.phi)?;
    out.write_raw("s", &traj.s)?;
    out.write_raw("control", &exp.u0)?;
    let rows: Vec<Vec<f64>> = (0..traj.n_nodes())
        .map(|k| {
            vec![
                k as f64,
                traj.time.time(k),
                energy[k],
                identity[k],
                if k == 0 { 0.0 } else { traj.newton_iterations[k - 1] as f64 },
                if k == 0 { 0.0 } else { traj.step_residuals[k - 1] },
            ]
        })
        .collect();
    out.write_csv(
        "energy",
        &["k", "t", "energy", "identity_residual", "newton_iterations", "newton_residual"],
        &rows,
    )?;
    let (phi_min, phi_max) = traj.phi_range();
    let summary = SimulateSummary {
        run_id: exp.config.run_id.clone(),
        n_grid: setup.system.n(),
        n_steps: setup.time.n_steps,
        dt: setup.dt(),
        phi_min,
        phi_max,
        max_mu_sup: traj.max_mu_sup(),
        energy_initial: energy[0],
        energy_final: energy[energy.len() - 1],
        max_energy_identity_residual: identity.iter().cloned().fold(0.0, f64::max),
        max_pde_residual: pde.iter().skip(1).flatten().cloned().fold(0.0, f64::max),
        total_newton_iterations: traj.newton_iterations.iter().sum(),
    };
    out.write_json("summary", &summary)?;
    write_config(&exp.config, out)?;
    Ok(summary)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OptimizeSummary {
    pub run_id: String,
    pub termination: Termination,
    pub iterations: usize,
    pub cost_initial: f64,
    pub cost_final: f64,
    pub stationarity: f64,
    pub variational_inequality_min: f64,
    pub history: Vec<IterationRecord>,
}

/// Projected gradient descent from `u0`. Artifacts: `history.csv`,
/// `report.json`, raw `control`, `phi`, `s`, `adjoint_r`, `gradient`.
pub fn run_optimize(exp: &Experiment, out: &ArtifactDir) -> Result<OptimizeSummary> {
    let cfg = &exp.config;
    let setup = &exp.setup;
    let report = projected_gradient_descent(setup, &exp.spec, &exp.u0, &cfg.optimizer)?;
    let grid = setup.grid();
    let stationarity = stationarity_residual(grid, setup.dt(), &report.control, &report.adjoint, &exp.spec)?;
    let vi = variational_inequality_min(
        grid,
        setup.dt(),
        &report.control,
        &report.gradient,
        &exp.spec,
        cfg.probes.vi_samples,
        cfg.seed,
    );
    let rows: Vec<Vec<f64>> = report
        .history
        .iter()
        .map(|h| vec![h.iteration as f64, h.cost, h.grad_norm, h.stationarity, h.step, h.shrinks as f64])
        .collect();
    out.write_csv("history", &["k", "cost", "grad_norm", "stationarity", "step", "shrinks"], &rows)?;
    out.write_raw("control", &report.control)?;
    out.write_raw("phi", &report.state.phi)?;
    out.write_raw("s", &report.state.s)?;
    out.write_raw("adjoint_r", &report.adjoint.r)?;
    out.write_raw("gradient", &report.gradient)?;
    let summary = OptimizeSummary {
        run_id: cfg.run_id.clone(),
        termination: report.termination.clone(),
        iterations: report.history.len().saturating_sub(1),
        cost_initial: report.history[0].cost,
        cost_final: report.final_cost(),
        stationarity,
        variational_inequality_min: vi,
        history: report.history.clone(),
    };
    out.write_json("report", &summary)?;
    write_config(cfg, out)?;
    Ok(summary)
}

/// Runs the selected criteria and writes `verify.json`.
pub fn run_verify(cfg: &ExperimentConfig, criteria: &[u8], out: &ArtifactDir) -> Result<VerifyReport> {
    let report = verify::run(cfg, criteria)?;
    out.write_json("verify", &report)?;
    write_config(cfg, out)?;
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LinearizeCheck {
    /// Max residual of the linearized equations for `u0` along a unit
    /// direction.
    pub max_residual: f64,
    pub probes: Vec<FrechetProbe>,
    pub check: CheckReport,
}

/// Linearized-system residuals plus the Frechet remainder sweep.
/// Artifact: `linearize_check.json`.
pub fn run_linearize_check(exp: &Experiment, out: &ArtifactDir) -> Result<LinearizeCheck> {
    let cfg = &exp.config;
    let setup = &exp.setup;
    let traj = control_to_state(setup, &exp.u0)?;
    let h = verify::SmoothControl::random(
        &mut <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(cfg.seed),
        4,
        1.0,
    )
    .sample(setup.grid(), &setup.time);
    let lin = solve_linearized(&setup.system, &traj, &h)?;
    let res = linearized_residuals(&setup.system, &traj, &lin, &h)?;
    let result = LinearizeCheck {
        max_residual: res.iter().flatten().cloned().fold(0.0, f64::max),
        probes: verify::frechet_probes(cfg, cfg.probes.frechet_pairs)?,
        check: verify::run_one(cfg, 5)?,
    };
    out.write_json("linearize_check", &result)?;
    write_config(cfg, out)?;
    Ok(result)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AdjointCheck {
    /// Max residual of the discrete adjoint equations for `u0` on the
    /// configured problem.
    pub max_residual: f64,
    pub cost: f64,
    pub gradient: CheckReport,
    pub viscosity: CheckReport,
}

/// Adjoint residuals, FD gradient check and viscosity sweep.
/// Artifacts: `adjoint_check.json`, raw `adjoint_q`, `adjoint_p`, `adjoint_r`.
pub fn run_adjoint_check(exp: &Experiment, out: &ArtifactDir) -> Result<AdjointCheck> {
    let cfg = &exp.config;
    let setup = &exp.setup;
    let ev = evaluate(setup, &exp.spec, &exp.u0)?;
    let adj = solve_adjoint(&setup.system, &ev.state, &exp.spec)?;
    let res = adjoint_residuals(&setup.system, &ev.state, &exp.spec, &adj)?;
    out.write_raw("adjoint_q", &adj.q)?;
    out.write_raw("adjoint_p", &adj.p)?;
    out.write_raw("adjoint_r", &adj.r)?;
    let result = AdjointCheck {
        max_residual: res.iter().flatten().cloned().fold(0.0, f64::max),
        cost: ev.cost,
        gradient: verify::run_one(cfg, 6)?,
        viscosity: verify::run_one(cfg, 7)?,
    };
    out.write_json("adjoint_check", &result)?;
    write_config(cfg, out)?;
    Ok(result)
}

fn write_config(cfg: &ExperimentConfig, out: &ArtifactDir) -> Result<()> {
    std::fs::write(out.path("config", "toml"), cfg.to_toml()?)?;
    Ok(())
}
