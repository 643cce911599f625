//! Tangent solves along a stored state trajectory and the Fréchet remainder
//! probe.
//!
//! The discretization is the exact linearization of the state step actually
//! used, so the remainder of the discrete control-to-state map is quadratic in
//! the perturbation size. With the semi-implicit scheme `P` and `P'` enter at
//! the previous level; with the fully implicit scheme at the new one.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::par;
use crate::state::{galerkin_jacobian, solve_forward_raw, Scheme, SolverConfig, StateTrajectory};
use crate::system::{add_diag, add_identity, diag_mul, Matrices, StateSystem, Which};
use crate::time::{check_series, zeros_series, Series, TimeGrid};

/// `(eta, xi, zeta)` at every time node; all vanish at `t = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearizedTrajectory {
    pub time: TimeGrid,
    pub eta: Series,
    pub xi: Series,
    pub zeta: Series,
}

/// Old-level source `P'(phi_{k-1}) xi_{k-1} (S_k - mu_k)` (semi-implicit) and
/// new-level coefficient `P'(phi_k) (S_k - mu_k)` (fully implicit).
struct StepCoefficients {
    d: DVector<f64>,
    explicit_src: DVector<f64>,
    implicit_e: Option<DVector<f64>>,
}

fn coefficients(
    system: &StateSystem,
    traj: &StateTrajectory,
    k: usize,
    xi_old: &DVector<f64>,
) -> StepCoefficients {
    let w = &traj.s[k] - &traj.mu[k];
    match traj.scheme {
        Scheme::SemiImplicitP => {
            let prev = &traj.phi[k - 1];
            StepCoefficients {
                d: system.map_p(prev),
                explicit_src: system.map_dp(prev).component_mul(&w).component_mul(xi_old),
                implicit_e: None,
            }
        }
        Scheme::FullyImplicit => {
            let cur = &traj.phi[k];
            StepCoefficients {
                d: system.map_p(cur),
                explicit_src: DVector::zeros(w.len()),
                implicit_e: Some(system.map_dp(cur).component_mul(&w)),
            }
        }
    }
}

/// Solves the linearized system for the control variation `h`
/// (`h[k - 1]` acting on step `k`).
pub fn solve_linearized(
    system: &StateSystem,
    traj: &StateTrajectory,
    h: &[DVector<f64>],
) -> Result<LinearizedTrajectory> {
    let n = system.n();
    let steps = traj.time.n_steps;
    check_series("variation", h, steps, n)?;
    let dt = traj.time.dt();
    let inv_dt = 1.0 / dt;
    let mut eta = zeros_series(steps + 1, n);
    let mut xi = zeros_series(steps + 1, n);
    let mut zeta = zeros_series(steps + 1, n);
    for k in 1..=steps {
        let c = coefficients(system, traj, k, &xi[k - 1]);
        let df = system.map_df(&traj.phi[k])?;
        let (e, x, z) = match &system.mats {
            Matrices::Collocation { m_a, m_b, m_c } => {
                let mut h_mat = m_c.clone();
                add_identity(&mut h_mat, inv_dt);
                add_diag(&mut h_mat, &c.d);
                let lu_h = h_mat.lu();
                let mut jmu = m_b.clone();
                add_identity(&mut jmu, inv_dt);
                add_diag(&mut jmu, &df);
                let mut ma_d = m_a.clone();
                add_diag(&mut ma_d, &c.d);
                let eta0 = -&xi[k - 1] * inv_dt;
                let mut coupling = diag_mul(&c.d, &jmu);
                if let Some(e) = &c.implicit_e {
                    add_diag(&mut coupling, &(-e));
                }
                let hinv = lu_h
                    .solve(&coupling)
                    .ok_or(Error::SingularStep { step: k })?;
                let mut mat = &ma_d * &jmu - diag_mul(&c.d, &hinv);
                add_identity(&mut mat, inv_dt);
                if let Some(e) = &c.implicit_e {
                    add_diag(&mut mat, &(-e));
                }
                let z_rhs0 = &zeta[k - 1] * inv_dt + &h[k - 1] - &c.explicit_src
                    + c.d.component_mul(&eta0);
                let zeta0 = lu_h.solve(&z_rhs0).ok_or(Error::SingularStep { step: k })?;
                let rhs = &xi[k - 1] * inv_dt - &ma_d * &eta0 + &c.explicit_src
                    + c.d.component_mul(&zeta0);
                let x = mat.lu().solve(&rhs).ok_or(Error::SingularStep { step: k })?;
                let e_new = &jmu * &x + &eta0;
                let mut z_rhs = z_rhs0 + c.d.component_mul(&(&jmu * &x));
                if let Some(e) = &c.implicit_e {
                    z_rhs -= e.component_mul(&x);
                }
                let z = lu_h.solve(&z_rhs).ok_or(Error::SingularStep { step: k })?;
                (e_new, x, z)
            }
            Matrices::Galerkin(g) => {
                let (ma, mb, mc) = g.dims();
                let jac = galerkin_jacobian(
                    system,
                    g,
                    &traj.phi[k],
                    &c.d,
                    c.implicit_e.as_ref(),
                    dt,
                )?;
                let b_old = &g.t_b * &xi[k - 1];
                let c_old = &g.t_c * &zeta[k - 1];
                let mut rhs = DVector::zeros(ma + mb + mc);
                rhs.rows_mut(0, ma)
                    .copy_from(&(&g.k_ab * &b_old * inv_dt + &g.t_a * &c.explicit_src));
                rhs.rows_mut(ma, mb).copy_from(&(&b_old * inv_dt));
                rhs.rows_mut(ma + mb, mc).copy_from(
                    &(&c_old * inv_dt - &g.t_c * &c.explicit_src + &g.t_c * &h[k - 1]),
                );
                let sol = jac.lu().solve(&rhs).ok_or(Error::SingularStep { step: k })?;
                (
                    &g.e_a * sol.rows(0, ma),
                    &g.e_b * sol.rows(ma, mb),
                    &g.e_c * sol.rows(ma + mb, mc),
                )
            }
        };
        eta[k] = e;
        xi[k] = x;
        zeta[k] = z;
    }
    Ok(LinearizedTrajectory {
        time: traj.time,
        eta,
        xi,
        zeta,
    })
}

/// Residual norms of the three linearized equations at nodes `1..=n`
/// (index 0 is the zero initial state).
pub fn linearized_residuals(
    system: &StateSystem,
    traj: &StateTrajectory,
    lin: &LinearizedTrajectory,
    h: &[DVector<f64>],
) -> Result<Vec<[f64; 3]>> {
    let dt = traj.time.dt();
    let mut out = vec![[0.0; 3]];
    for k in 1..traj.n_nodes() {
        let c = coefficients(system, traj, k, &lin.xi[k - 1]);
        let mut src = c.d.component_mul(&(&lin.zeta[k] - &lin.eta[k])) + &c.explicit_src;
        if let Some(e) = &c.implicit_e {
            src += e.component_mul(&lin.xi[k]);
        }
        let dxi = (&lin.xi[k] - &lin.xi[k - 1]) / dt;
        let r1 = &dxi + system.a_op().apply_raw(&lin.eta[k]) - &src;
        let r2 = &dxi
            + system.b_op().apply_raw(&lin.xi[k])
            + system.map_df(&traj.phi[k])?.component_mul(&lin.xi[k])
            - &lin.eta[k];
        let r3 = (&lin.zeta[k] - &lin.zeta[k - 1]) / dt + system.c_op().apply_raw(&lin.zeta[k])
            + &src
            - &h[k - 1];
        out.push([
            system.tested_norm(Which::A, &r1),
            system.tested_norm(Which::B, &r2),
            system.tested_norm(Which::C, &r3),
        ]);
    }
    Ok(out)
}

/// Discrete norm of `Y = Y2 x Y3`:
///
/// ```text
///   |xi|_Y2   = |d/dt xi|_{L2(H)} + max_k |xi_k|_{V_B^sigma}
///   |zeta|_Y3 = max_k |zeta_k| + |zeta|_{L2(V_C^tau)}
/// ```
///
/// with difference quotients for the time derivative and right-endpoint step
/// quadrature for the `L2` parts.
pub fn y_norm(system: &StateSystem, dt: f64, xi: &[DVector<f64>], zeta: &[DVector<f64>]) -> f64 {
    let grid = system.grid();
    let (_, b_half, c_half) = system.half_powers();
    let h1 = xi
        .windows(2)
        .map(|w| {
            let d = (&w[1] - &w[0]) / dt;
            grid.dot(&d, &d)
        })
        .sum::<f64>()
        * dt;
    let linf_b = xi.iter().map(|v| b_half.graph_norm_raw(v)).fold(0.0, f64::max);
    let c0 = zeta.iter().map(|v| grid.norm(v)).fold(0.0, f64::max);
    let l2_c = zeta
        .iter()
        .skip(1)
        .map(|v| c_half.graph_norm_raw(v).powi(2))
        .sum::<f64>()
        * dt;
    h1.sqrt() + linf_b + c0 + l2_c.sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrechetProbe {
    pub eps: Vec<f64>,
    pub remainder: Vec<f64>,
    /// Least-squares slope of `log remainder` against `log eps`.
    pub slope: f64,
}

impl FrechetProbe {
    pub fn is_monotone(&self) -> bool {
        // eps is decreasing, so the remainder must decrease along the sweep
        self.remainder.windows(2).all(|w| w[1] < w[0])
    }
}

/// `eps = 10^-1, ..., 10^-4`.
pub fn default_eps() -> Vec<f64> {
    vec![1e-1, 1e-2, 1e-3, 1e-4]
}

/// Remainder `|S(u + eps h) - S(u) - eps (xi, zeta)|_Y` over the given scales.
/// The perturbed forward solves run concurrently.
#[allow(clippy::too_many_arguments)]
pub fn frechet_remainder_probe(
    system: &StateSystem,
    u_bar: &[DVector<f64>],
    h: &[DVector<f64>],
    phi0: &DVector<f64>,
    s0: &DVector<f64>,
    time: &TimeGrid,
    cfg: &SolverConfig,
    eps: &[f64],
) -> Result<FrechetProbe> {
    check_series("control", u_bar, time.n_steps, system.n())?;
    check_series("direction", h, time.n_steps, system.n())?;
    if h.iter().all(|v| v.iter().all(|&x| x == 0.0)) {
        return Err(Error::Degenerate("zero perturbation direction".into()));
    }
    if eps.len() < 2 || eps.iter().any(|&e| !(e > 0.0)) {
        return Err(Error::invalid("need at least two positive scales"));
    }
    let base = solve_forward_raw(system, u_bar, phi0, s0, time, cfg)?;
    let lin = solve_linearized(system, &base, h)?;
    let dt = time.dt();
    let results = par::map(eps.to_vec(), |e| -> Result<f64> {
        let u: Series = u_bar.iter().zip(h).map(|(u, h)| u + h * e).collect();
        let pert = solve_forward_raw(system, &u, phi0, s0, time, cfg)?;
        let dxi: Series = (0..pert.n_nodes())
            .map(|k| &pert.phi[k] - &base.phi[k] - &lin.xi[k] * e)
            .collect();
        let dzeta: Series = (0..pert.n_nodes())
            .map(|k| &pert.s[k] - &base.s[k] - &lin.zeta[k] * e)
            .collect();
        Ok(y_norm(system, dt, &dxi, &dzeta))
    });
    let remainder = results.into_iter().collect::<Result<Vec<_>>>()?;
    let xs: Vec<f64> = eps.iter().map(|e| e.ln()).collect();
    let ys: Vec<f64> = remainder.iter().map(|r| r.max(f64::MIN_POSITIVE).ln()).collect();
    Ok(FrechetProbe {
        eps: eps.to_vec(),
        slope: ls_slope(&xs, &ys),
        remainder,
    })
}

/// Least-squares slope of `ys` against `xs`.
pub fn ls_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    sxy / sxx
}
