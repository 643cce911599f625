//! Forward solve of the state system
//!
//! ```text
//!   d/dt phi + A^{2 rho} mu = P(phi) (S - mu)
//!   d/dt phi + B^{2 sigma} phi + f(phi) = mu
//!   d/dt S + C^{2 tau} S = -P(phi) (S - mu) + u
//! ```
//!
//! by backward Euler with a safeguarded Newton iteration per step.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::BOUNDARY_GUARD;
use crate::spectral::Field;
use crate::system::{add_diag, add_identity, diag_mul, mul_diag, GalerkinMats, Matrices, StateSystem, Which};
use crate::time::{check_series, Series, TimeGrid};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    /// `P` evaluated at the previous phi; the step is linear in `(mu, S)`.
    #[default]
    SemiImplicitP,
    /// `P` evaluated at the new phi.
    FullyImplicit,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    /// Absolute tolerance on the weighted 2-norm of the stacked residual.
    pub newton_tol: f64,
    pub newton_max_iter: usize,
    /// Fraction of the distance to the domain boundary a Newton update may use.
    pub damping: f64,
    pub scheme: Scheme,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            newton_tol: 1e-10,
            newton_max_iter: 50,
            damping: 0.95,
            scheme: Scheme::SemiImplicitP,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.newton_tol > 0.0) {
            return Err(Error::invalid("newton_tol must be positive"));
        }
        if self.newton_max_iter == 0 {
            return Err(Error::invalid("newton_max_iter must be positive"));
        }
        if !(self.damping > 0.0 && self.damping < 1.0) {
            return Err(Error::invalid("damping must lie in (0, 1)"));
        }
        Ok(())
    }
}

/// Grid values of `(mu, phi, S)` at every time node.
#[derive(Debug, Clone, PartialEq)]
pub struct StateTrajectory {
    pub time: TimeGrid,
    pub scheme: Scheme,
    pub mu: Series,
    pub phi: Series,
    pub s: Series,
    /// Newton iterations of step `k` at index `k - 1`.
    pub newton_iterations: Vec<usize>,
    /// Terminal stacked Newton residual per step.
    pub step_residuals: Vec<f64>,
}

impl StateTrajectory {
    pub fn n_nodes(&self) -> usize {
        self.phi.len()
    }

    /// `P(phi)` as it enters step `k >= 1`.
    pub(crate) fn p_argument(&self, k: usize) -> &DVector<f64> {
        match self.scheme {
            Scheme::SemiImplicitP => &self.phi[k - 1],
            Scheme::FullyImplicit => &self.phi[k],
        }
    }

    pub fn max_mu_sup(&self) -> f64 {
        self.mu.iter().map(|m| m.amax()).fold(0.0, f64::max)
    }

    pub fn phi_range(&self) -> (f64, f64) {
        self.phi.iter().flat_map(|v| v.iter()).fold(
            (f64::INFINITY, f64::NEG_INFINITY),
            |(lo, hi), &x| (lo.min(x), hi.max(x)),
        )
    }
}

/// Result of one backward Euler step.
#[derive(Debug, Clone)]
pub struct StepOutcome {
    pub mu: DVector<f64>,
    pub phi: DVector<f64>,
    pub s: DVector<f64>,
    pub iterations: usize,
    pub residual: f64,
}

/// `mu(0)` from `(A^{2 rho} + P(phi0)) mu(0) = P(phi0) S0`.
pub fn initial_mu(system: &StateSystem, phi0: &Field, s0: &Field) -> Result<Field> {
    let values = initial_mu_raw(system, phi0.values(), s0.values())?;
    Field::new(system.grid().clone(), values)
}

pub(crate) fn initial_mu_raw(
    system: &StateSystem,
    phi0: &DVector<f64>,
    s0: &DVector<f64>,
) -> Result<DVector<f64>> {
    for &v in phi0.iter() {
        system.potential().check(v)?;
    }
    let p = system.map_p(phi0);
    let rhs = p.component_mul(s0);
    system.a_op().solve_plus_mult_raw(&p, &rhs)
}

/// Largest `alpha <= 1` keeping `phi + alpha delta` inside the domain, using
/// at most the fraction `damping` of the remaining distance.
fn boundary_step(system: &StateSystem, phi: &DVector<f64>, delta: &DVector<f64>, damping: f64) -> f64 {
    let (a, b) = system.potential().domain();
    let mut alpha: f64 = 1.0;
    for (&p, &d) in phi.iter().zip(delta.iter()) {
        if d > 0.0 && b.is_finite() {
            let room = b - BOUNDARY_GUARD - p;
            if p + d >= b - BOUNDARY_GUARD {
                alpha = alpha.min(damping * room / d);
            }
        } else if d < 0.0 && a.is_finite() {
            let room = p - (a + BOUNDARY_GUARD);
            if p + d <= a + BOUNDARY_GUARD {
                alpha = alpha.min(damping * room / -d);
            }
        }
    }
    alpha.max(0.0)
}

/// True when a full Newton update changed phi only at the level of rounding.
/// Past this point the residual cannot decrease further: for fine grids its
/// floor is about `eps * |A^{2 rho}| (1/dt + |B^{2 sigma}|)`, which can exceed
/// an absolute tolerance of `1e-10`.
fn at_roundoff(system: &StateSystem, phi: &DVector<f64>, delta: &DVector<f64>, alpha: f64) -> bool {
    let grid = system.grid();
    alpha == 1.0 && grid.norm(delta) <= 64.0 * f64::EPSILON * (1.0 + grid.norm(phi))
}

fn check_inside(system: &StateSystem, phi: &DVector<f64>, step: usize) -> Result<()> {
    let (a, b) = system.potential().domain();
    if phi
        .iter()
        .any(|&p| !p.is_finite() || p <= a + BOUNDARY_GUARD || p >= b - BOUNDARY_GUARD)
    {
        return Err(Error::SeparationFailure { step });
    }
    Ok(())
}

/// One backward Euler step from `(phi_prev, s_prev)` with control `u`.
#[allow(clippy::too_many_arguments)]
pub fn step(
    system: &StateSystem,
    phi_prev: &DVector<f64>,
    s_prev: &DVector<f64>,
    u: &DVector<f64>,
    dt: f64,
    cfg: &SolverConfig,
    step_index: usize,
) -> Result<StepOutcome> {
    for &v in phi_prev.iter() {
        system.potential().check(v)?;
    }
    match &system.mats {
        Matrices::Collocation { m_a, m_b, m_c } => match cfg.scheme {
            Scheme::SemiImplicitP => {
                step_collocation_semi(system, m_a, m_b, m_c, phi_prev, s_prev, u, dt, cfg, step_index)
            }
            Scheme::FullyImplicit => {
                step_collocation_full(system, m_a, m_b, m_c, phi_prev, s_prev, u, dt, cfg, step_index)
            }
        },
        Matrices::Galerkin(g) => step_galerkin(system, g, phi_prev, s_prev, u, dt, cfg, step_index),
    }
}

#[allow(clippy::too_many_arguments)]
fn step_collocation_semi(
    system: &StateSystem,
    m_a: &DMatrix<f64>,
    m_b: &DMatrix<f64>,
    m_c: &DMatrix<f64>,
    phi_prev: &DVector<f64>,
    s_prev: &DVector<f64>,
    u: &DVector<f64>,
    dt: f64,
    cfg: &SolverConfig,
    step_index: usize,
) -> Result<StepOutcome> {
    let n = phi_prev.len();
    let inv_dt = 1.0 / dt;
    let d = system.map_p(phi_prev);
    // mu is explicit in phi through the second equation and S follows from
    // the (linear) third one; Newton runs on the first equation in phi only.
    let mut h = m_c.clone();
    add_identity(&mut h, inv_dt);
    add_diag(&mut h, &d);
    let lu_h = h.lu();
    let hinv_d = lu_h
        .solve(&DMatrix::from_diagonal(&d))
        .ok_or(Error::SingularStep { step: step_index })?;
    // K = M_A + D - D H^{-1} D
    let mut k = m_a - diag_mul(&d, &hinv_d);
    add_diag(&mut k, &d);
    // K2 = I/dt + K (I/dt + M_B)
    let mut k2 = &k * m_b + &k * inv_dt;
    add_identity(&mut k2, inv_dt);
    let s_rhs0 = s_prev * inv_dt + u;

    let mut phi = phi_prev.clone();
    let mut iterations = 0;
    let mut stalled = false;
    loop {
        let f = system.map_f(&phi)?;
        let dphi = (&phi - phi_prev) * inv_dt;
        let mu = &dphi + m_b * &phi + &f;
        let s = lu_h
            .solve(&(&s_rhs0 + d.component_mul(&mu)))
            .ok_or(Error::SingularStep { step: step_index })?;
        let r1 = &dphi + m_a * &mu - d.component_mul(&(&s - &mu));
        let res = system.grid().norm(&r1);
        if res <= cfg.newton_tol {
            return Ok(StepOutcome {
                mu,
                phi,
                s,
                iterations,
                residual: res,
            });
        }
        if stalled {
            return Ok(StepOutcome {
                mu,
                phi,
                s,
                iterations,
                residual: res,
            });
        }
        if iterations >= cfg.newton_max_iter {
            return Err(Error::NewtonFailure {
                step: step_index,
                iterations,
                residual: res,
            });
        }
        let df = system.map_df(&phi)?;
        let jac = &k2 + mul_diag(&k, &df);
        let delta = -jac
            .lu()
            .solve(&r1)
            .ok_or(Error::SingularStep { step: step_index })?;
        let alpha = boundary_step(system, &phi, &delta, cfg.damping);
        stalled = at_roundoff(system, &phi, &delta, alpha);
        phi += delta * alpha;
        check_inside(system, &phi, step_index)?;
        iterations += 1;
        debug_assert_eq!(phi.len(), n);
    }
}

#[allow(clippy::too_many_arguments)]
fn step_collocation_full(
    system: &StateSystem,
    m_a: &DMatrix<f64>,
    m_b: &DMatrix<f64>,
    m_c: &DMatrix<f64>,
    phi_prev: &DVector<f64>,
    s_prev: &DVector<f64>,
    u: &DVector<f64>,
    dt: f64,
    cfg: &SolverConfig,
    step_index: usize,
) -> Result<StepOutcome> {
    let inv_dt = 1.0 / dt;
    let s_rhs0 = s_prev * inv_dt + u;
    let mut phi = phi_prev.clone();
    let mut iterations = 0;
    let mut stalled = false;
    loop {
        let d = system.map_p(&phi);
        let f = system.map_f(&phi)?;
        let dphi = (&phi - phi_prev) * inv_dt;
        let mu = &dphi + m_b * &phi + &f;
        let mut h = m_c.clone();
        add_identity(&mut h, inv_dt);
        add_diag(&mut h, &d);
        let lu_h = h.lu();
        let s = lu_h
            .solve(&(&s_rhs0 + d.component_mul(&mu)))
            .ok_or(Error::SingularStep { step: step_index })?;
        let w = &s - &mu;
        let r1 = &dphi + m_a * &mu - d.component_mul(&w);
        let res = system.grid().norm(&r1);
        if res <= cfg.newton_tol {
            return Ok(StepOutcome {
                mu,
                phi,
                s,
                iterations,
                residual: res,
            });
        }
        if stalled {
            return Ok(StepOutcome {
                mu,
                phi,
                s,
                iterations,
                residual: res,
            });
        }
        if iterations >= cfg.newton_max_iter {
            return Err(Error::NewtonFailure {
                step: step_index,
                iterations,
                residual: res,
            });
        }
        let df = system.map_df(&phi)?;
        let e = system.map_dp(&phi).component_mul(&w);
        // J_mu = I/dt + M_B + diag(f')
        let mut jmu = m_b.clone();
        add_identity(&mut jmu, inv_dt);
        add_diag(&mut jmu, &df);
        // dS = H^{-1} (D J_mu - diag(e))
        let mut rhs = diag_mul(&d, &jmu);
        add_diag(&mut rhs, &(-&e));
        let ds = lu_h
            .solve(&rhs)
            .ok_or(Error::SingularStep { step: step_index })?;
        let mut ma_d = m_a.clone();
        add_diag(&mut ma_d, &d);
        let mut jac = &ma_d * &jmu - diag_mul(&d, &ds);
        add_identity(&mut jac, inv_dt);
        add_diag(&mut jac, &(-&e));
        let delta = -jac
            .lu()
            .solve(&r1)
            .ok_or(Error::SingularStep { step: step_index })?;
        let alpha = boundary_step(system, &phi, &delta, cfg.damping);
        stalled = at_roundoff(system, &phi, &delta, alpha);
        phi += delta * alpha;
        check_inside(system, &phi, step_index)?;
        iterations += 1;
    }
}

/// Stacked modal Newton: unknowns `[a; b; c]` with `mu = E_A a`,
/// `phi = E_B b`, `S = E_C c`.
#[allow(clippy::too_many_arguments)]
fn step_galerkin(
    system: &StateSystem,
    g: &GalerkinMats,
    phi_prev: &DVector<f64>,
    s_prev: &DVector<f64>,
    u: &DVector<f64>,
    dt: f64,
    cfg: &SolverConfig,
    step_index: usize,
) -> Result<StepOutcome> {
    let (ma, mb, mc) = g.dims();
    let inv_dt = 1.0 / dt;
    let b_prev = &g.t_b * phi_prev;
    let c_prev = &g.t_c * s_prev;
    let tc_u = &g.t_c * u;
    let fully = cfg.scheme == Scheme::FullyImplicit;

    let mut x = DVector::zeros(ma + mb + mc);
    x.rows_mut(ma, mb).copy_from(&b_prev);
    x.rows_mut(ma + mb, mc).copy_from(&c_prev);
    let mut iterations = 0;
    let mut stalled = false;
    loop {
        let a = x.rows(0, ma).into_owned();
        let b = x.rows(ma, mb).into_owned();
        let c = x.rows(ma + mb, mc).into_owned();
        let mu = &g.e_a * &a;
        let phi = &g.e_b * &b;
        let s = &g.e_c * &c;
        let p_arg = if fully { &phi } else { phi_prev };
        let d = system.map_p(p_arg);
        let w = &s - &mu;
        let src = d.component_mul(&w);
        let f = system.map_f(&phi)?;
        let db = (&b - &b_prev) * inv_dt;
        let r_a = &g.k_ab * &db + g.lam_a.component_mul(&a) - &g.t_a * &src;
        let r_b = &db + g.lam_b.component_mul(&b) + &g.t_b * &f - &g.k_ba * &a;
        let r_c = (&c - &c_prev) * inv_dt + g.lam_c.component_mul(&c) + &g.t_c * &src - &tc_u;
        let res = (r_a.norm_squared() + r_b.norm_squared() + r_c.norm_squared()).sqrt();
        if res <= cfg.newton_tol {
            return Ok(StepOutcome {
                mu,
                phi,
                s,
                iterations,
                residual: res,
            });
        }
        if stalled {
            return Ok(StepOutcome {
                mu,
                phi,
                s,
                iterations,
                residual: res,
            });
        }
        if iterations >= cfg.newton_max_iter {
            return Err(Error::NewtonFailure {
                step: step_index,
                iterations,
                residual: res,
            });
        }
        let e = if fully {
            Some(system.map_dp(&phi).component_mul(&w))
        } else {
            None
        };
        let jac = galerkin_jacobian(system, g, &phi, &d, e.as_ref(), dt)?;
        let mut r = DVector::zeros(ma + mb + mc);
        r.rows_mut(0, ma).copy_from(&r_a);
        r.rows_mut(ma, mb).copy_from(&r_b);
        r.rows_mut(ma + mb, mc).copy_from(&r_c);
        let delta = -jac
            .lu()
            .solve(&r)
            .ok_or(Error::SingularStep { step: step_index })?;
        let dphi = &g.e_b * delta.rows(ma, mb);
        let alpha = boundary_step(system, &phi, &dphi, cfg.damping);
        stalled = at_roundoff(system, &phi, &dphi, alpha);
        x += delta * alpha;
        check_inside(system, &(&g.e_b * x.rows(ma, mb)), step_index)?;
        iterations += 1;
    }
}

/// Jacobian of the stacked modal step residual in `[a; b; c]`, given the
/// new phi, `d = P(phi°)` and, for the fully implicit scheme,
/// `e = P'(phi) (S - mu)`. The linearized and adjoint steps reuse it.
pub(crate) fn galerkin_jacobian(
    system: &StateSystem,
    g: &GalerkinMats,
    phi: &DVector<f64>,
    d: &DVector<f64>,
    e: Option<&DVector<f64>>,
    dt: f64,
) -> Result<DMatrix<f64>> {
    let (ma, mb, mc) = g.dims();
    let inv_dt = 1.0 / dt;
    let df = system.map_df(phi)?;
    let mut jac = DMatrix::zeros(ma + mb + mc, ma + mb + mc);
    // rows A
    let mut j_aa = GalerkinMats::weighted(&g.t_a, d, &g.e_a);
    add_diag(&mut j_aa, &g.lam_a);
    jac.view_mut((0, 0), (ma, ma)).copy_from(&j_aa);
    let mut j_ab = &g.k_ab * inv_dt;
    if let Some(e) = e {
        j_ab -= GalerkinMats::weighted(&g.t_a, e, &g.e_b);
        let j_cb = GalerkinMats::weighted(&g.t_c, e, &g.e_b);
        jac.view_mut((ma + mb, ma), (mc, mb)).copy_from(&j_cb);
    }
    jac.view_mut((0, ma), (ma, mb)).copy_from(&j_ab);
    let p_ac = GalerkinMats::weighted(&g.t_a, d, &g.e_c);
    jac.view_mut((0, ma + mb), (ma, mc)).copy_from(&(-p_ac));
    // rows B
    jac.view_mut((ma, 0), (mb, ma)).copy_from(&(-&g.k_ba));
    let mut j_bb = GalerkinMats::weighted(&g.t_b, &df, &g.e_b);
    add_diag(&mut j_bb, &g.lam_b);
    add_identity(&mut j_bb, inv_dt);
    jac.view_mut((ma, ma), (mb, mb)).copy_from(&j_bb);
    // rows C
    let p_ca = GalerkinMats::weighted(&g.t_c, d, &g.e_a);
    jac.view_mut((ma + mb, 0), (mc, ma)).copy_from(&(-p_ca));
    let mut j_cc = GalerkinMats::weighted(&g.t_c, d, &g.e_c);
    add_diag(&mut j_cc, &g.lam_c);
    add_identity(&mut j_cc, inv_dt);
    jac.view_mut((ma + mb, ma + mb), (mc, mc)).copy_from(&j_cc);
    Ok(jac)
}

/// Full forward solve. `control[k - 1]` acts on step `k` (value at `t_k`).
pub fn solve_forward(
    system: &StateSystem,
    control: &[DVector<f64>],
    phi0: &Field,
    s0: &Field,
    time: &TimeGrid,
    cfg: &SolverConfig,
) -> Result<StateTrajectory> {
    solve_forward_raw(system, control, phi0.values(), s0.values(), time, cfg)
}

pub(crate) fn solve_forward_raw(
    system: &StateSystem,
    control: &[DVector<f64>],
    phi0: &DVector<f64>,
    s0: &DVector<f64>,
    time: &TimeGrid,
    cfg: &SolverConfig,
) -> Result<StateTrajectory> {
    cfg.validate()?;
    let n = system.n();
    check_series("control", control, time.n_steps, n)?;
    if phi0.len() != n || s0.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: phi0.len().min(s0.len()),
        });
    }
    let (phi0, s0) = match system.kernel() {
        crate::system::Kernel::Collocation => (phi0.clone(), s0.clone()),
        crate::system::Kernel::Galerkin => (system.project_b(phi0), system.project_c(s0)),
    };
    let mu0 = initial_mu_raw(system, &phi0, &s0)?;
    let dt = time.dt();
    let mut traj = StateTrajectory {
        time: *time,
        scheme: cfg.scheme,
        mu: Vec::with_capacity(time.n_nodes()),
        phi: Vec::with_capacity(time.n_nodes()),
        s: Vec::with_capacity(time.n_nodes()),
        newton_iterations: Vec::with_capacity(time.n_steps),
        step_residuals: Vec::with_capacity(time.n_steps),
    };
    traj.mu.push(mu0);
    traj.phi.push(phi0);
    traj.s.push(s0);
    for k in 1..=time.n_steps {
        let out = step(system, &traj.phi[k - 1], &traj.s[k - 1], &control[k - 1], dt, cfg, k)?;
        traj.mu.push(out.mu);
        traj.phi.push(out.phi);
        traj.s.push(out.s);
        traj.newton_iterations.push(out.iterations);
        traj.step_residuals.push(out.residual);
    }
    Ok(traj)
}

/// Residual norms of the three equations at every node, each tested against
/// the span of its operator's retained modes. Node 0 carries the residual of
/// the `mu(0)` equation in the first slot.
pub fn pde_residuals(
    system: &StateSystem,
    traj: &StateTrajectory,
    control: &[DVector<f64>],
) -> Result<Vec<[f64; 3]>> {
    check_series("control", control, traj.time.n_steps, system.n())?;
    let dt = traj.time.dt();
    let mut out = Vec::with_capacity(traj.n_nodes());
    let p0 = system.map_p(&traj.phi[0]);
    let r0 = system.a_op().apply_raw(&traj.mu[0]) + p0.component_mul(&traj.mu[0])
        - p0.component_mul(&traj.s[0]);
    out.push([system.tested_norm(Which::A, &r0), 0.0, 0.0]);
    for k in 1..traj.n_nodes() {
        let d = system.map_p(traj.p_argument(k));
        let dphi = (&traj.phi[k] - &traj.phi[k - 1]) / dt;
        let src = d.component_mul(&(&traj.s[k] - &traj.mu[k]));
        let r1 = &dphi + system.a_op().apply_raw(&traj.mu[k]) - &src;
        let r2 = &dphi + system.b_op().apply_raw(&traj.phi[k]) + system.map_f(&traj.phi[k])?
            - &traj.mu[k];
        let r3 = (&traj.s[k] - &traj.s[k - 1]) / dt + system.c_op().apply_raw(&traj.s[k]) + &src
            - &control[k - 1];
        out.push([
            system.tested_norm(Which::A, &r1),
            system.tested_norm(Which::B, &r2),
            system.tested_norm(Which::C, &r3),
        ]);
    }
    Ok(out)
}

/// `1/2 |B^sigma phi|^2 + int F(phi) + 1/2 |S|^2` at every node.
pub fn discrete_energy(system: &StateSystem, traj: &StateTrajectory) -> Result<Vec<f64>> {
    let (_, b_half, _) = system.half_powers();
    let grid = system.grid();
    traj.phi
        .iter()
        .zip(&traj.s)
        .map(|(phi, s)| {
            let bphi = b_half.apply_raw(phi);
            let mut fint = 0.0;
            for (w, &p) in grid.weights().iter().zip(phi.iter()) {
                fint += w * system.potential().eval(p)?;
            }
            Ok(0.5 * grid.dot(&bphi, &bphi) + fint + 0.5 * grid.dot(s, s))
        })
        .collect()
}

/// `|LHS - RHS|` of the energy identity at every node. Time integrals use the
/// new-level values of each step, as the implicit scheme does, and the
/// proliferation term uses the scheme's own `P` argument.
pub fn energy_identity_residual(
    system: &StateSystem,
    traj: &StateTrajectory,
    control: &[DVector<f64>],
) -> Result<Vec<f64>> {
    check_series("control", control, traj.time.n_steps, system.n())?;
    let (a_half, _, c_half) = system.half_powers();
    let grid = system.grid();
    let dt = traj.time.dt();
    let energy = discrete_energy(system, traj)?;
    let mut lhs_int = 0.0;
    let mut rhs_int = 0.0;
    let mut out = Vec::with_capacity(traj.n_nodes());
    out.push(0.0);
    for k in 1..traj.n_nodes() {
        let amu = a_half.apply_raw(&traj.mu[k]);
        let dphi = (&traj.phi[k] - &traj.phi[k - 1]) / dt;
        let cs = c_half.apply_raw(&traj.s[k]);
        let w = &traj.s[k] - &traj.mu[k];
        let p = system.map_p(traj.p_argument(k));
        let pw: f64 = grid
            .weights()
            .iter()
            .zip(p.iter().zip(w.iter()))
            .map(|(wt, (pi, wi))| wt * pi * wi * wi)
            .sum();
        lhs_int += dt * (grid.dot(&amu, &amu) + grid.dot(&dphi, &dphi) + grid.dot(&cs, &cs) + pw);
        rhs_int += dt * grid.dot(&control[k - 1], &traj.s[k]);
        out.push(((lhs_int + energy[k]) - (energy[0] + rhs_int)).abs());
    }
    Ok(out)
}
