//! Tracking cost, admissible box, reduced gradient and projected gradient
//! descent with Armijo backtracking.

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::adjoint::{solve_adjoint, AdjointTrajectory};
use crate::error::{Error, Result};
use crate::par;
use crate::spectral::QuadratureGrid;
use crate::state::{solve_forward_raw, SolverConfig, StateTrajectory};
use crate::system::StateSystem;
use crate::time::{check_series, step_inner, step_norm, Series, TimeGrid};

/// Cost weights, targets and control bounds.
///
/// `phi_q`, `s_q` hold one field per time node (`n_steps + 1`), the bounds
/// one per step (`n_steps`, the control lives on `t_1..t_n`).
#[derive(Debug, Clone, PartialEq)]
pub struct ControlProblemSpec {
    pub kappa: [f64; 5],
    pub phi_q: Series,
    pub s_q: Series,
    pub phi_omega: DVector<f64>,
    pub s_omega: DVector<f64>,
    pub u_min: Series,
    pub u_max: Series,
    pub r_ball: Option<f64>,
}

impl ControlProblemSpec {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        kappa: [f64; 5],
        phi_q: Series,
        s_q: Series,
        phi_omega: DVector<f64>,
        s_omega: DVector<f64>,
        u_min: Series,
        u_max: Series,
        r_ball: Option<f64>,
    ) -> Result<Self> {
        let spec = Self {
            kappa,
            phi_q,
            s_q,
            phi_omega,
            s_omega,
            u_min,
            u_max,
            r_ball,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Zero targets and constant bounds.
    pub fn constant(kappa: [f64; 5], time: &TimeGrid, n: usize, u_min: f64, u_max: f64) -> Result<Self> {
        Self::new(
            kappa,
            vec![DVector::zeros(n); time.n_nodes()],
            vec![DVector::zeros(n); time.n_nodes()],
            DVector::zeros(n),
            DVector::zeros(n),
            vec![DVector::from_element(n, u_min); time.n_steps],
            vec![DVector::from_element(n, u_max); time.n_steps],
            None,
        )
    }

    pub fn validate(&self) -> Result<()> {
        for (i, &k) in self.kappa.iter().enumerate() {
            if !(k.is_finite() && k >= 0.0) {
                return Err(Error::invalid(format!(
                    "cost weight kappa{} = {k} violates kappa_i >= 0",
                    i + 1
                )));
            }
        }
        if self.u_min.len() != self.u_max.len() {
            return Err(Error::invalid("u_min and u_max have different lengths"));
        }
        for (lo, hi) in self.u_min.iter().zip(&self.u_max) {
            if lo.len() != hi.len() {
                return Err(Error::DimensionMismatch {
                    expected: lo.len(),
                    got: hi.len(),
                });
            }
            if lo.iter().zip(hi.iter()).any(|(a, b)| !(a <= b)) {
                return Err(Error::invalid("u_min <= u_max violated"));
            }
        }
        if let Some(r) = self.r_ball {
            if !(r > 0.0) {
                return Err(Error::invalid("R ball radius must be positive"));
            }
        }
        Ok(())
    }

    pub(crate) fn check_dims(&self, n_steps: usize, n: usize) -> Result<()> {
        check_series("phi_Q", &self.phi_q, n_steps + 1, n)?;
        check_series("S_Q", &self.s_q, n_steps + 1, n)?;
        check_series("u_min", &self.u_min, n_steps, n)?;
        check_series("u_max", &self.u_max, n_steps, n)?;
        if self.phi_omega.len() != n || self.s_omega.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: self.phi_omega.len().min(self.s_omega.len()),
            });
        }
        Ok(())
    }

    /// Norm of the part of `kappa4 S_Omega` outside the retained C modes.
    pub fn s_omega_projection_residual(&self, system: &StateSystem) -> f64 {
        let v = &self.s_omega * self.kappa[3];
        system.grid().norm(&(&v - system.project_c(&v)))
    }

    pub fn is_admissible(&self, u: &[DVector<f64>]) -> bool {
        u.iter().zip(self.u_min.iter().zip(&self.u_max)).all(|(u, (lo, hi))| {
            u.iter()
                .zip(lo.iter().zip(hi.iter()))
                .all(|(x, (a, b))| a <= x && x <= b)
        })
    }
}

/// Everything the control-to-state map needs besides the control.
#[derive(Debug, Clone)]
pub struct ControlSetup {
    pub system: StateSystem,
    pub phi0: DVector<f64>,
    pub s0: DVector<f64>,
    pub time: TimeGrid,
    pub solver: SolverConfig,
}

impl ControlSetup {
    pub fn grid(&self) -> &QuadratureGrid {
        self.system.grid()
    }

    pub fn dt(&self) -> f64 {
        self.time.dt()
    }

    pub fn zero_control(&self) -> Series {
        vec![DVector::zeros(self.system.n()); self.time.n_steps]
    }

    /// Same problem on a time grid refined by `factor`.
    pub fn refined(&self, factor: usize) -> Self {
        Self {
            time: self.time.refined(factor),
            ..self.clone()
        }
    }
}

/// `u -> (mu, phi, S)`.
pub fn control_to_state(setup: &ControlSetup, u: &[DVector<f64>]) -> Result<StateTrajectory> {
    solve_forward_raw(&setup.system, u, &setup.phi0, &setup.s0, &setup.time, &setup.solver)
}

/// Tracking terms with the left-endpoint rule over `t_0..t_{n-1}`, terminal
/// terms at `t_n`, control term with one value per step.
pub fn cost_eval(
    grid: &QuadratureGrid,
    u: &[DVector<f64>],
    traj: &StateTrajectory,
    spec: &ControlProblemSpec,
) -> Result<f64> {
    let n = grid.len();
    let steps = traj.time.n_steps;
    spec.check_dims(steps, n)?;
    check_series("control", u, steps, n)?;
    let dt = traj.time.dt();
    let k = spec.kappa;
    let sq = |a: &DVector<f64>, b: &DVector<f64>| {
        let d = a - b;
        grid.dot(&d, &d)
    };
    let mut j = 0.0;
    if k[0] != 0.0 {
        j += 0.5 * k[0] * dt * (0..steps).map(|i| sq(&traj.phi[i], &spec.phi_q[i])).sum::<f64>();
    }
    if k[1] != 0.0 {
        j += 0.5 * k[1] * sq(&traj.phi[steps], &spec.phi_omega);
    }
    if k[2] != 0.0 {
        j += 0.5 * k[2] * dt * (0..steps).map(|i| sq(&traj.s[i], &spec.s_q[i])).sum::<f64>();
    }
    if k[3] != 0.0 {
        j += 0.5 * k[3] * sq(&traj.s[steps], &spec.s_omega);
    }
    if k[4] != 0.0 {
        j += 0.5 * k[4] * step_inner(grid, dt, u, u);
    }
    Ok(j)
}

/// Reduced cost `u -> J(u, S(u))`.
pub fn reduced_cost(setup: &ControlSetup, spec: &ControlProblemSpec, u: &[DVector<f64>]) -> Result<f64> {
    let traj = control_to_state(setup, u)?;
    cost_eval(setup.grid(), u, &traj, spec)
}

/// Pointwise clamp onto `[u_min, u_max]`.
pub fn project_admissible(u: &[DVector<f64>], spec: &ControlProblemSpec) -> Series {
    u.iter()
        .zip(spec.u_min.iter().zip(&spec.u_max))
        .map(|(u, (lo, hi))| u.zip_zip_map(lo, hi, |x, a, b| x.max(a).min(b)))
        .collect()
}

/// `r + kappa5 u` on the control nodes `t_1..t_n`.
pub fn reduced_gradient(
    u: &[DVector<f64>],
    adj: &AdjointTrajectory,
    spec: &ControlProblemSpec,
) -> Result<Series> {
    if adj.n_nodes() != u.len() + 1 {
        return Err(Error::invalid("adjoint and control time grids differ"));
    }
    Ok(u.iter()
        .enumerate()
        .map(|(i, u)| &adj.r[i + 1] + u * spec.kappa[4])
        .collect())
}

/// Cost, state, adjoint and reduced gradient at `u`.
pub struct Evaluation {
    pub cost: f64,
    pub state: StateTrajectory,
    pub adjoint: AdjointTrajectory,
    pub gradient: Series,
}

pub fn evaluate(setup: &ControlSetup, spec: &ControlProblemSpec, u: &[DVector<f64>]) -> Result<Evaluation> {
    let state = control_to_state(setup, u)?;
    let cost = cost_eval(setup.grid(), u, &state, spec)?;
    let adjoint = solve_adjoint(&setup.system, &state, spec)?;
    let gradient = reduced_gradient(u, &adjoint, spec)?;
    Ok(Evaluation {
        cost,
        state,
        adjoint,
        gradient,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FdCheck {
    pub eps: Vec<f64>,
    /// Central differences `(J(u + eps h) - J(u - eps h)) / (2 eps)`.
    pub fd: Vec<f64>,
    /// `int_Q (r + kappa5 u) h`.
    pub pairing: f64,
    /// `|fd - pairing| / |pairing|` per eps.
    pub rel_error: Vec<f64>,
}

impl FdCheck {
    pub fn best_rel_error(&self) -> f64 {
        self.rel_error.iter().cloned().fold(f64::INFINITY, f64::min)
    }
}

/// Compares central differences of the reduced cost along `h` with the
/// adjoint pairing. The perturbed solves run concurrently.
pub fn fd_gradient_check(
    setup: &ControlSetup,
    spec: &ControlProblemSpec,
    u: &[DVector<f64>],
    h: &[DVector<f64>],
    eps: &[f64],
) -> Result<FdCheck> {
    check_series("direction", h, setup.time.n_steps, setup.system.n())?;
    if h.iter().all(|v| v.iter().all(|&x| x == 0.0)) {
        return Err(Error::Degenerate("zero perturbation direction".into()));
    }
    if eps.is_empty() || eps.iter().any(|&e| !(e > 0.0)) {
        return Err(Error::invalid("eps values must be positive"));
    }
    let ev = evaluate(setup, spec, u)?;
    let pairing = step_inner(setup.grid(), setup.dt(), &ev.gradient, h);
    let jobs: Vec<f64> = eps.iter().flat_map(|&e| [e, -e]).collect();
    let costs = par::map(jobs, |e| {
        let up: Series = u.iter().zip(h).map(|(u, h)| u + h * e).collect();
        reduced_cost(setup, spec, &up)
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    let fd: Vec<f64> = eps
        .iter()
        .enumerate()
        .map(|(i, e)| (costs[2 * i] - costs[2 * i + 1]) / (2.0 * e))
        .collect();
    let scale = pairing.abs().max(f64::MIN_POSITIVE);
    let rel_error = fd.iter().map(|f| (f - pairing).abs() / scale).collect();
    Ok(FdCheck {
        eps: eps.to_vec(),
        fd,
        pairing,
        rel_error,
    })
}

/// `|u - P_[umin,umax](-r / kappa5)|_{L2(Q)}` for `kappa5 > 0`, otherwise the
/// fixed-point residual `|u - P(u - r)|_{L2(Q)}`.
pub fn stationarity_residual(
    grid: &QuadratureGrid,
    dt: f64,
    u: &[DVector<f64>],
    adj: &AdjointTrajectory,
    spec: &ControlProblemSpec,
) -> Result<f64> {
    if adj.n_nodes() != u.len() + 1 {
        return Err(Error::invalid("adjoint and control time grids differ"));
    }
    let k5 = spec.kappa[4];
    let target: Series = if k5 > 0.0 {
        let v: Series = (0..u.len()).map(|i| &adj.r[i + 1] * (-1.0 / k5)).collect();
        project_admissible(&v, spec)
    } else {
        let v: Series = (0..u.len()).map(|i| &u[i] - &adj.r[i + 1]).collect();
        project_admissible(&v, spec)
    };
    let diff: Series = u.iter().zip(&target).map(|(a, b)| a - b).collect();
    Ok(step_norm(grid, dt, &diff))
}

/// Smallest value of `int_Q (r + kappa5 u)(v - u) / |v - u|` over `samples`
/// random admissible `v` (uniform in the box, seeded).
pub fn variational_inequality_min(
    grid: &QuadratureGrid,
    dt: f64,
    u: &[DVector<f64>],
    gradient: &[DVector<f64>],
    spec: &ControlProblemSpec,
    samples: usize,
    seed: u64,
) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = f64::INFINITY;
    for _ in 0..samples {
        let v: Series = spec
            .u_min
            .iter()
            .zip(&spec.u_max)
            .map(|(lo, hi)| {
                lo.zip_map(hi, |a, b| {
                    if a == b {
                        a
                    } else {
                        rng.random_range(a..=b)
                    }
                })
            })
            .collect();
        let diff: Series = v.iter().zip(u).map(|(v, u)| v - u).collect();
        let norm = step_norm(grid, dt, &diff);
        if norm > 0.0 {
            worst = worst.min(step_inner(grid, dt, gradient, &diff) / norm);
        }
    }
    worst
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PgdOptions {
    pub step0: f64,
    pub armijo_c: f64,
    pub shrink: f64,
    pub max_iters: usize,
    pub tol: f64,
    pub max_shrinks: usize,
}

impl Default for PgdOptions {
    fn default() -> Self {
        Self {
            step0: 1.0,
            armijo_c: 1e-4,
            shrink: 0.5,
            max_iters: 200,
            tol: 1e-6,
            max_shrinks: 50,
        }
    }
}

impl PgdOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.step0 > 0.0) {
            return Err(Error::invalid("step0 must be positive"));
        }
        if !(self.armijo_c > 0.0 && self.armijo_c < 1.0) {
            return Err(Error::invalid("armijo_c must lie in (0, 1)"));
        }
        if !(self.shrink > 0.0 && self.shrink < 1.0) {
            return Err(Error::invalid("shrink must lie in (0, 1)"));
        }
        if !(self.tol > 0.0) {
            return Err(Error::invalid("tol must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub cost: f64,
    pub grad_norm: f64,
    pub stationarity: f64,
    /// Accepted step length (0 for the final record).
    pub step: f64,
    pub shrinks: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Converged,
    MaxIterations,
    /// Armijo backtracking exhausted `max_shrinks` without sufficient decrease.
    Stalled { iteration: usize },
}

#[derive(Debug, Clone)]
pub struct OptimizationReport {
    pub history: Vec<IterationRecord>,
    pub termination: Termination,
    pub control: Series,
    pub state: StateTrajectory,
    pub adjoint: AdjointTrajectory,
    pub gradient: Series,
}

impl OptimizationReport {
    pub fn final_cost(&self) -> f64 {
        self.history.last().map(|h| h.cost).unwrap_or(f64::NAN)
    }

    pub fn final_stationarity(&self) -> f64 {
        self.history.last().map(|h| h.stationarity).unwrap_or(f64::NAN)
    }

    pub fn costs(&self) -> Vec<f64> {
        self.history.iter().map(|h| h.cost).collect()
    }
}

/// Projected gradient descent `u <- P(u - gamma (r + kappa5 u))` with Armijo
/// backtracking on the reduced cost. The sufficient-decrease test is
/// `J(u+) <= J(u) - (c / gamma) |u+ - u|^2`, which reduces to
/// `J(u) - c gamma |grad|^2` when no bound is active.
pub fn projected_gradient_descent(
    setup: &ControlSetup,
    spec: &ControlProblemSpec,
    u0: &[DVector<f64>],
    opts: &PgdOptions,
) -> Result<OptimizationReport> {
    opts.validate()?;
    spec.check_dims(setup.time.n_steps, setup.system.n())?;
    let grid = setup.grid();
    let dt = setup.dt();
    let mut u = project_admissible(u0, spec);
    let mut ev = evaluate(setup, spec, &u)?;
    let mut history = Vec::new();
    let record = |it: usize, ev: &Evaluation, u: &[DVector<f64>], step: f64, shrinks: usize| -> Result<IterationRecord> {
        Ok(IterationRecord {
            iteration: it,
            cost: ev.cost,
            grad_norm: step_norm(grid, dt, &ev.gradient),
            stationarity: stationarity_residual(grid, dt, u, &ev.adjoint, spec)?,
            step,
            shrinks,
        })
    };
    let mut termination = Termination::MaxIterations;
    let mut it = 0;
    loop {
        let current = record(it, &ev, &u, 0.0, 0)?;
        if current.stationarity <= opts.tol {
            history.push(current);
            termination = Termination::Converged;
            break;
        }
        if it >= opts.max_iters {
            history.push(current);
            break;
        }
        let mut gamma = opts.step0;
        let mut accepted = None;
        for shrinks in 0..=opts.max_shrinks {
            let trial: Series = u
                .iter()
                .zip(&ev.gradient)
                .map(|(u, g)| u - g * gamma)
                .collect();
            let trial = project_admissible(&trial, spec);
            let diff: Series = trial.iter().zip(&u).map(|(a, b)| a - b).collect();
            let dist2 = step_inner(grid, dt, &diff, &diff);
            // A failed forward solve counts as insufficient decrease, and so
            // does a step whose decrease is lost in rounding.
            if let Ok(state) = control_to_state(setup, &trial) {
                let cost = cost_eval(grid, &trial, &state, spec)?;
                if dist2 > 0.0 && cost < ev.cost && cost <= ev.cost - opts.armijo_c / gamma * dist2 {
                    accepted = Some((trial, state, cost, gamma, shrinks));
                    break;
                }
            }
            gamma *= opts.shrink;
        }
        match accepted {
            Some((trial, state, cost, gamma, shrinks)) => {
                let mut rec = current;
                rec.step = gamma;
                rec.shrinks = shrinks;
                history.push(rec);
                u = trial;
                let adjoint = solve_adjoint(&setup.system, &state, spec)?;
                let gradient = reduced_gradient(&u, &adjoint, spec)?;
                ev = Evaluation {
                    cost,
                    state,
                    adjoint,
                    gradient,
                };
                it += 1;
            }
            None => {
                history.push(current);
                termination = Termination::Stalled { iteration: it };
                break;
            }
        }
    }
    Ok(OptimizationReport {
        history,
        termination,
        control: u,
        state: ev.state,
        adjoint: ev.adjoint,
        gradient: ev.gradient,
    })
}

/// Y-norm Lipschitz ratios `|S(u1) - S(u2)|_Y / |u1 - u2|_{L2(Q)}` over
/// random pairs in the ball of radius `radius` (seeded, solved concurrently).
pub fn lipschitz_ratios(
    setup: &ControlSetup,
    pairs: usize,
    radius: f64,
    seed: u64,
) -> Result<Vec<f64>> {
    let n = setup.system.n();
    let grid = setup.grid();
    let dt = setup.dt();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut draw = || -> Series {
        let raw: Series = (0..setup.time.n_steps)
            .map(|_| DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0)))
            .collect();
        let norm = step_norm(grid, dt, &raw);
        let scale = radius * rng.random_range(0.1..1.0) / norm;
        raw.iter().map(|v| v * scale).collect()
    };
    let inputs: Vec<(Series, Series)> = (0..pairs).map(|_| (draw(), draw())).collect();
    par::map(inputs, |(u1, u2)| -> Result<f64> {
        let a = control_to_state(setup, &u1)?;
        let b = control_to_state(setup, &u2)?;
        let dphi: Series = a.phi.iter().zip(&b.phi).map(|(x, y)| x - y).collect();
        let ds: Series = a.s.iter().zip(&b.s).map(|(x, y)| x - y).collect();
        let du: Series = u1.iter().zip(&u2).map(|(x, y)| x - y).collect();
        Ok(crate::linearized::y_norm(&setup.system, dt, &dphi, &ds) / step_norm(grid, dt, &du))
    })
    .into_iter()
    .collect()
}
