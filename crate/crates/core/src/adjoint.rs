//! Backward solve of the adjoint system
//!
//! ```text
//!   A^{2 rho} q - p + P(phi) (q - r) = 0
//!   -d/dt (q + p) + B^{2 sigma} p + f'(phi) p - P'(phi) (S - mu) (q - r) = g1
//!   -d/dt r + C^{2 tau} r - P(phi) (q - r) = g3
//!   (q + p)(T) = g2,   r(T) = g4
//! ```
//!
//! along a stored state trajectory, by backward Euler with coefficients frozen
//! at the current node and `q` eliminated through the algebraic equation. The
//! viscous Faedo–Galerkin variant replaces the algebraic equation by
//! `-(1/n) d/dt q + ... = 0` with `q(T) = 0`.

use nalgebra::{DMatrix, DVector};

use crate::control::ControlProblemSpec;
use crate::error::{Error, Result};
use crate::spectral::Field;
use crate::state::StateTrajectory;
use crate::system::{add_diag, add_identity, diag_mul, GalerkinMats, Matrices, StateSystem, Which};
use crate::time::{zeros_series, Series};

/// `g1 = k1 (phi - phi_Q)`, `g2 = k2 (phi(T) - phi_Omega)`,
/// `g3 = k3 (S - S_Q)`, `g4 = k4 (S(T) - S_Omega)`.
#[derive(Debug, Clone, PartialEq)]
pub struct AdjointData {
    pub g1: Series,
    pub g2: DVector<f64>,
    pub g3: Series,
    pub g4: DVector<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdjointTrajectory {
    pub q: Series,
    pub p: Series,
    pub r: Series,
}

impl AdjointTrajectory {
    pub fn n_nodes(&self) -> usize {
        self.q.len()
    }
}

pub fn build_adjoint_data(traj: &StateTrajectory, spec: &ControlProblemSpec) -> Result<AdjointData> {
    let n = traj.phi[0].len();
    spec.check_dims(traj.time.n_steps, n)?;
    let k = spec.kappa;
    let last = traj.n_nodes() - 1;
    Ok(AdjointData {
        g1: traj.phi.iter().zip(&spec.phi_q).map(|(p, t)| (p - t) * k[0]).collect(),
        g2: (&traj.phi[last] - &spec.phi_omega) * k[1],
        g3: traj.s.iter().zip(&spec.s_q).map(|(s, t)| (s - t) * k[2]).collect(),
        g4: (&traj.s[last] - &spec.s_omega) * k[3],
    })
}

/// `q = (A^{2 rho} + P)^{-1} (p + P r)`.
pub fn solve_q_algebraic(system: &StateSystem, p_field: &Field, p: &Field, r: &Field) -> Result<Field> {
    p_field.check_grid(p)?;
    p_field.check_grid(r)?;
    if p_field.values().iter().any(|&v| v < 0.0) {
        return Err(Error::invalid("proliferation values must be nonnegative"));
    }
    let rhs = p.values() + p_field.values().component_mul(r.values());
    let q = system.a_op().solve_plus_mult_raw(p_field.values(), &rhs)?;
    Field::new(p.grid().clone(), q)
}

/// Node coefficients `P(phi)`, `f'(phi)`, `P'(phi) (S - mu)`.
fn node_coefficients(
    system: &StateSystem,
    traj: &StateTrajectory,
    k: usize,
) -> Result<(DVector<f64>, DVector<f64>, DVector<f64>)> {
    let phi = &traj.phi[k];
    let d = system.map_p(phi);
    let f1 = system.map_df(phi)?;
    let e = system.map_dp(phi).component_mul(&(&traj.s[k] - &traj.mu[k]));
    Ok((d, f1, e))
}

pub fn solve_adjoint(
    system: &StateSystem,
    traj: &StateTrajectory,
    spec: &ControlProblemSpec,
) -> Result<AdjointTrajectory> {
    let data = build_adjoint_data(traj, spec)?;
    match &system.mats {
        Matrices::Collocation { m_a, m_b, m_c } => {
            adjoint_collocation(system, traj, &data, m_a, m_b, m_c)
        }
        Matrices::Galerkin(g) => adjoint_modal(system, traj, &data, g, None, None),
    }
}

fn adjoint_collocation(
    system: &StateSystem,
    traj: &StateTrajectory,
    data: &AdjointData,
    m_a: &DMatrix<f64>,
    m_b: &DMatrix<f64>,
    m_c: &DMatrix<f64>,
) -> Result<AdjointTrajectory> {
    let n = system.n();
    let last = traj.n_nodes() - 1;
    let dt = traj.time.dt();
    let inv_dt = 1.0 / dt;
    let mut q = zeros_series(last + 1, n);
    let mut p = zeros_series(last + 1, n);
    let mut r = zeros_series(last + 1, n);

    let d_t = system.map_p(&traj.phi[last]);
    let mut m = m_a.clone();
    add_diag(&mut m, &d_t);
    add_identity(&mut m, 1.0);
    q[last] = m
        .lu()
        .solve(&(&data.g2 + d_t.component_mul(&data.g4)))
        .ok_or(Error::SingularStep { step: last })?;
    p[last] = &data.g2 - &q[last];
    r[last] = data.g4.clone();

    let mb_ma = m_b * m_a;
    for k in (0..last).rev() {
        let (d, f1, e) = node_coefficients(system, traj, k)?;
        // p = (M_A + D) q - D r
        let mut ma_d = m_a.clone();
        add_diag(&mut ma_d, &d);
        // (M_B + F1)(M_A + D) = M_B M_A + M_B D + F1 (M_A + D)
        let bf_ad = &mb_ma + crate::system::mul_diag(m_b, &d) + diag_mul(&f1, &ma_d);
        // (M_B + F1) D
        let bf_d = crate::system::mul_diag(m_b, &d) + DMatrix::from_diagonal(&f1.component_mul(&d));
        let mut sys = DMatrix::zeros(2 * n, 2 * n);
        let mut qq = &ma_d * inv_dt + bf_ad;
        add_identity(&mut qq, inv_dt);
        add_diag(&mut qq, &(-&e));
        let mut qr = -bf_d;
        add_diag(&mut qr, &(&e - &d * inv_dt));
        let mut rr = m_c.clone();
        add_identity(&mut rr, inv_dt);
        add_diag(&mut rr, &d);
        sys.view_mut((0, 0), (n, n)).copy_from(&qq);
        sys.view_mut((0, n), (n, n)).copy_from(&qr);
        sys.view_mut((n, 0), (n, n)).copy_from(&DMatrix::from_diagonal(&(-&d)));
        sys.view_mut((n, n), (n, n)).copy_from(&rr);
        let mut rhs = DVector::zeros(2 * n);
        rhs.rows_mut(0, n)
            .copy_from(&(&data.g1[k] + (&q[k + 1] + &p[k + 1]) * inv_dt));
        rhs.rows_mut(n, n).copy_from(&(&data.g3[k] + &r[k + 1] * inv_dt));
        let sol = sys.lu().solve(&rhs).ok_or(Error::SingularStep { step: k })?;
        q[k] = sol.rows(0, n).into_owned();
        r[k] = sol.rows(n, n).into_owned();
        p[k] = &ma_d * &q[k] - d.component_mul(&r[k]);
    }
    Ok(AdjointTrajectory { q, p, r })
}

/// Modal backward solve. With `viscosity = Some(nu)` the algebraic equation
/// carries `-nu d/dt q` and `q(T) = 0`; `ode_tol` bounds the residual of
/// every step's linear solve.
fn adjoint_modal(
    system: &StateSystem,
    traj: &StateTrajectory,
    data: &AdjointData,
    g: &GalerkinMats,
    viscosity: Option<f64>,
    ode_tol: Option<f64>,
) -> Result<AdjointTrajectory> {
    let (ma, mb, mc) = g.dims();
    let dim = ma + mb + mc;
    let last = traj.n_nodes() - 1;
    let dt = traj.time.dt();
    let inv_dt = 1.0 / dt;
    let mut xs: Vec<DVector<f64>> = vec![DVector::zeros(dim); last + 1];

    // terminal node
    let r_t = &g.t_c * &data.g4;
    let p_t_b = &g.t_b * &data.g2;
    let mut x_t = DVector::zeros(dim);
    match viscosity {
        Some(_) => {
            x_t.rows_mut(ma, mb).copy_from(&p_t_b);
        }
        None => {
            let d = system.map_p(&traj.phi[last]);
            let mut m = DMatrix::zeros(ma + mb, ma + mb);
            let mut aa = GalerkinMats::weighted(&g.t_a, &d, &g.e_a);
            add_diag(&mut aa, &g.lam_a);
            m.view_mut((0, 0), (ma, ma)).copy_from(&aa);
            m.view_mut((0, ma), (ma, mb)).copy_from(&(-&g.k_ab));
            m.view_mut((ma, 0), (mb, ma)).copy_from(&g.k_ba);
            m.view_mut((ma, ma), (mb, mb)).fill_with_identity();
            let mut rhs = DVector::zeros(ma + mb);
            rhs.rows_mut(0, ma)
                .copy_from(&(GalerkinMats::weighted(&g.t_a, &d, &g.e_c) * &r_t));
            rhs.rows_mut(ma, mb).copy_from(&p_t_b);
            let sol = m.lu().solve(&rhs).ok_or(Error::SingularStep { step: last })?;
            x_t.rows_mut(0, ma + mb).copy_from(&sol);
        }
    }
    x_t.rows_mut(ma + mb, mc).copy_from(&r_t);
    xs[last] = x_t;

    let nu = viscosity.unwrap_or(0.0);
    for k in (0..last).rev() {
        let (d, f1, e) = node_coefficients(system, traj, k)?;
        let mut m = DMatrix::zeros(dim, dim);
        // A rows
        let mut aa = GalerkinMats::weighted(&g.t_a, &d, &g.e_a);
        add_diag(&mut aa, &g.lam_a);
        add_identity(&mut aa, nu * inv_dt);
        m.view_mut((0, 0), (ma, ma)).copy_from(&aa);
        m.view_mut((0, ma), (ma, mb)).copy_from(&(-&g.k_ab));
        m.view_mut((0, ma + mb), (ma, mc))
            .copy_from(&(-GalerkinMats::weighted(&g.t_a, &d, &g.e_c)));
        // B rows
        let ba = &g.k_ba * inv_dt - GalerkinMats::weighted(&g.t_b, &e, &g.e_a);
        m.view_mut((ma, 0), (mb, ma)).copy_from(&ba);
        let mut bb = GalerkinMats::weighted(&g.t_b, &f1, &g.e_b);
        add_diag(&mut bb, &g.lam_b);
        add_identity(&mut bb, inv_dt);
        m.view_mut((ma, ma), (mb, mb)).copy_from(&bb);
        m.view_mut((ma, ma + mb), (mb, mc))
            .copy_from(&GalerkinMats::weighted(&g.t_b, &e, &g.e_c));
        // C rows
        m.view_mut((ma + mb, 0), (mc, ma))
            .copy_from(&(-GalerkinMats::weighted(&g.t_c, &d, &g.e_a)));
        let mut cc = GalerkinMats::weighted(&g.t_c, &d, &g.e_c);
        add_diag(&mut cc, &g.lam_c);
        add_identity(&mut cc, inv_dt);
        m.view_mut((ma + mb, ma + mb), (mc, mc)).copy_from(&cc);

        let next = &xs[k + 1];
        let q_next = next.rows(0, ma);
        let p_next = next.rows(ma, mb);
        let r_next = next.rows(ma + mb, mc);
        let mut rhs = DVector::zeros(dim);
        rhs.rows_mut(0, ma).copy_from(&(q_next * (nu * inv_dt)));
        rhs.rows_mut(ma, mb)
            .copy_from(&(&g.t_b * &data.g1[k] + (&g.k_ba * q_next + p_next) * inv_dt));
        rhs.rows_mut(ma + mb, mc)
            .copy_from(&(&g.t_c * &data.g3[k] + r_next * inv_dt));
        let sol = m
            .clone()
            .lu()
            .solve(&rhs)
            .ok_or(Error::SingularStep { step: k })?;
        if let Some(tol) = ode_tol {
            let res = (&m * &sol - &rhs).norm();
            if !(res <= tol * (1.0 + rhs.norm())) {
                return Err(Error::SingularStep { step: k });
            }
        }
        xs[k] = sol;
    }
    Ok(AdjointTrajectory {
        q: xs.iter().map(|x| &g.e_a * x.rows(0, ma)).collect(),
        p: xs.iter().map(|x| &g.e_b * x.rows(ma, mb)).collect(),
        r: xs.iter().map(|x| &g.e_c * x.rows(ma + mb, mc)).collect(),
    })
}

/// Faedo–Galerkin adjoint with viscosity `1/n_viscosity` on the retained
/// modes of each operator, integrated backward by the implicit Euler method
/// on the state time grid.
pub fn solve_adjoint_viscous_galerkin(
    system: &StateSystem,
    traj: &StateTrajectory,
    spec: &ControlProblemSpec,
    n_viscosity: u64,
    ode_tol: f64,
) -> Result<AdjointTrajectory> {
    if n_viscosity == 0 {
        return Err(Error::invalid("viscosity index must be at least 1"));
    }
    if !(ode_tol > 0.0) {
        return Err(Error::invalid("ode_tol must be positive"));
    }
    let data = build_adjoint_data(traj, spec)?;
    let owned;
    let g = match &system.mats {
        Matrices::Galerkin(g) => g,
        Matrices::Collocation { .. } => {
            owned = system.clone().with_kernel(crate::system::Kernel::Galerkin)?;
            match &owned.mats {
                Matrices::Galerkin(g) => g,
                Matrices::Collocation { .. } => unreachable!("kernel was just switched"),
            }
        }
    };
    adjoint_modal(
        system,
        traj,
        &data,
        g,
        Some(1.0 / n_viscosity as f64),
        Some(ode_tol),
    )
}

/// Residual norms of the adjoint equations at every node. At the terminal
/// node the slots hold the algebraic residual and the two terminal-condition
/// defects.
pub fn adjoint_residuals(
    system: &StateSystem,
    traj: &StateTrajectory,
    spec: &ControlProblemSpec,
    adj: &AdjointTrajectory,
) -> Result<Vec<[f64; 3]>> {
    let data = build_adjoint_data(traj, spec)?;
    let last = traj.n_nodes() - 1;
    if adj.n_nodes() != last + 1 {
        return Err(Error::invalid("adjoint and state time grids differ"));
    }
    let dt = traj.time.dt();
    let algebraic = |k: usize, d: &DVector<f64>| {
        let r1 = system.a_op().apply_raw(&adj.q[k]) - &adj.p[k]
            + d.component_mul(&(&adj.q[k] - &adj.r[k]));
        system.tested_norm(Which::A, &r1)
    };
    let mut out = Vec::with_capacity(last + 1);
    for k in 0..last {
        let (d, f1, e) = node_coefficients(system, traj, k)?;
        let qr = &adj.q[k] - &adj.r[k];
        let s_next = &adj.q[k + 1] + &adj.p[k + 1];
        let s_cur = &adj.q[k] + &adj.p[k];
        let r2 = -(s_next - s_cur) / dt
            + system.b_op().apply_raw(&adj.p[k])
            + f1.component_mul(&adj.p[k])
            - e.component_mul(&qr)
            - &data.g1[k];
        let r3 = -(&adj.r[k + 1] - &adj.r[k]) / dt + system.c_op().apply_raw(&adj.r[k])
            - d.component_mul(&qr)
            - &data.g3[k];
        out.push([
            algebraic(k, &d),
            system.tested_norm(Which::B, &r2),
            system.tested_norm(Which::C, &r3),
        ]);
    }
    let d = system.map_p(&traj.phi[last]);
    out.push([
        algebraic(last, &d),
        system.tested_norm(Which::B, &(&adj.q[last] + &adj.p[last] - &data.g2)),
        system.tested_norm(Which::C, &(&adj.r[last] - &data.g4)),
    ]);
    Ok(out)
}

/// Max over nodes of the grid norms of `(q1 - q2, p1 - p2, r1 - r2)`.
pub fn max_node_discrepancy(
    system: &StateSystem,
    a: &AdjointTrajectory,
    b: &AdjointTrajectory,
) -> f64 {
    let grid = system.grid();
    (0..a.n_nodes())
        .map(|k| {
            let dq = grid.norm(&(&a.q[k] - &b.q[k]));
            let dp = grid.norm(&(&a.p[k] - &b.p[k]));
            let dr = grid.norm(&(&a.r[k] - &b.r[k]));
            (dq * dq + dp * dp + dr * dr).sqrt()
        })
        .fold(0.0, f64::max)
}
