//! Reference solutions for single-mode systems.
//!
//! With one retained mode per operator the Galerkin state system reduces to
//! two ODEs for the modal coefficients `(b, c)` of `(phi, S)` plus an
//! algebraic relation for the coefficient `a` of `mu`. The coupling integrals
//! are evaluated with the grid quadrature, so comparing against the solvers
//! isolates the time discretization error. Integration is classical RK4.

use crate::error::{Error, Result};
use crate::model::{Potential, Proliferation};
use crate::system::StateSystem;

#[derive(Debug, Clone)]
pub struct SingleMode {
    w: Vec<f64>,
    ea: Vec<f64>,
    eb: Vec<f64>,
    ec: Vec<f64>,
    la: f64,
    lb: f64,
    lc: f64,
    /// `(e_A, e_B)`.
    k: f64,
    potential: Potential,
    proliferation: Proliferation,
}

/// Cost data in modal form for the adjoint reference.
#[derive(Clone, Copy)]
pub struct ModalTargets<'a> {
    pub kappa: [f64; 4],
    /// `(e_B, phi_Q(t))`.
    pub phi_q: &'a dyn Fn(f64) -> f64,
    /// `(e_C, S_Q(t))`.
    pub s_q: &'a dyn Fn(f64) -> f64,
    /// `(e_B, phi_Omega)`, `(e_C, S_Omega)`.
    pub phi_omega: f64,
    pub s_omega: f64,
}

/// Grid-evaluated couplings at a state `(b, c)` with algebraic `a`.
struct Couplings {
    a: f64,
    /// `P_XY = (e_X, P(phi) e_Y)`
    p_aa: f64,
    p_ac: f64,
    p_ca: f64,
    p_cc: f64,
    /// `(e_B, f(phi))`, `(e_B, f'(phi) e_B)`
    f: f64,
    df: f64,
    /// `(e_X, P'(phi) (S - mu) e_B)`
    q_a: f64,
    q_c: f64,
}

impl SingleMode {
    pub fn new(system: &StateSystem) -> Result<Self> {
        let (a, b, c) = (system.a_op(), system.b_op(), system.c_op());
        if a.basis().n_modes() != 1 || b.basis().n_modes() != 1 || c.basis().n_modes() != 1 {
            return Err(Error::invalid("single-mode oracle needs exactly one mode per operator"));
        }
        let col = |m: &nalgebra::DMatrix<f64>| m.column(0).iter().cloned().collect::<Vec<_>>();
        let w = system.grid().weights().to_vec();
        let ea = col(a.basis().eigvecs());
        let eb = col(b.basis().eigvecs());
        let ec = col(c.basis().eigvecs());
        let k = (0..w.len()).map(|i| w[i] * ea[i] * eb[i]).sum();
        Ok(Self {
            w,
            ea,
            eb,
            ec,
            la: a.symbol()[0],
            lb: b.symbol()[0],
            lc: c.symbol()[0],
            k,
            potential: system.potential().clone(),
            proliferation: *system.proliferation(),
        })
    }

    fn couplings(&self, b: f64, c: f64) -> Result<Couplings> {
        let n = self.w.len();
        let (mut p_aa, mut p_ac, mut p_cc, mut f, mut df) = (0.0, 0.0, 0.0, 0.0, 0.0);
        let mut pd = Vec::with_capacity(n);
        for i in 0..n {
            let phi = b * self.eb[i];
            let p = self.proliferation.eval(phi);
            let w = self.w[i];
            p_aa += w * p * self.ea[i] * self.ea[i];
            p_ac += w * p * self.ea[i] * self.ec[i];
            p_cc += w * p * self.ec[i] * self.ec[i];
            f += w * self.eb[i] * self.potential.f(phi)?;
            df += w * self.eb[i] * self.eb[i] * self.potential.f_prime(phi)?;
            pd.push(self.proliferation.d1(phi));
        }
        let p_ca = p_ac;
        let a = (self.k * (self.lb * b + f) + p_ac * c) / (self.k * self.k + self.la + p_aa);
        let (mut q_a, mut q_c) = (0.0, 0.0);
        for i in 0..n {
            let diff = c * self.ec[i] - a * self.ea[i];
            let base = self.w[i] * pd[i] * diff * self.eb[i];
            q_a += base * self.ea[i];
            q_c += base * self.ec[i];
        }
        Ok(Couplings {
            a,
            p_aa,
            p_ac,
            p_ca,
            p_cc,
            f,
            df,
            q_a,
            q_c,
        })
    }

    fn state_rhs(&self, b: f64, c: f64, u: f64) -> Result<(f64, f64, Couplings)> {
        let cp = self.couplings(b, c)?;
        let db = -self.lb * b - cp.f + self.k * cp.a;
        let dc = -self.lc * c - (cp.p_cc * c - cp.p_ca * cp.a) + u;
        Ok((db, dc, cp))
    }

    /// `(a, b, c)` at `t_j = j T / steps`, `j = 0..=steps`; `u(t)` is the
    /// modal control `(e_C, u(t))`.
    pub fn forward(
        &self,
        b0: f64,
        c0: f64,
        u: &dyn Fn(f64) -> f64,
        t_final: f64,
        steps: usize,
    ) -> Result<Vec<[f64; 3]>> {
        let h = t_final / steps as f64;
        let (mut b, mut c) = (b0, c0);
        let mut out = Vec::with_capacity(steps + 1);
        out.push([self.couplings(b, c)?.a, b, c]);
        for j in 0..steps {
            let t = j as f64 * h;
            let (k1b, k1c, _) = self.state_rhs(b, c, u(t))?;
            let (k2b, k2c, _) = self.state_rhs(b + 0.5 * h * k1b, c + 0.5 * h * k1c, u(t + 0.5 * h))?;
            let (k3b, k3c, _) = self.state_rhs(b + 0.5 * h * k2b, c + 0.5 * h * k2c, u(t + 0.5 * h))?;
            let (k4b, k4c, _) = self.state_rhs(b + h * k3b, c + h * k3c, u(t + h))?;
            b += h / 6.0 * (k1b + 2.0 * k2b + 2.0 * k3b + k4b);
            c += h / 6.0 * (k1c + 2.0 * k2c + 2.0 * k3c + k4c);
            out.push([self.couplings(b, c)?.a, b, c]);
        }
        Ok(out)
    }

    fn tangent(&self, cp: &Couplings, xi: f64, zeta: f64) -> (f64, f64, f64) {
        let eta = (self.k * (self.lb + cp.df) * xi + cp.p_ac * zeta + cp.q_a * xi)
            / (self.k * self.k + self.la + cp.p_aa);
        let dxi = -(self.lb + cp.df) * xi + self.k * eta;
        let dzeta = -self.lc * zeta - (cp.p_cc * zeta - cp.p_ca * eta + cp.q_c * xi);
        (eta, dxi, dzeta)
    }

    /// `(eta, xi, zeta)` of the linearized system along the forward solution
    /// with modal variation `h(t)`.
    #[allow(clippy::too_many_arguments)]
    pub fn linearized(
        &self,
        b0: f64,
        c0: f64,
        u: &dyn Fn(f64) -> f64,
        hv: &dyn Fn(f64) -> f64,
        t_final: f64,
        steps: usize,
    ) -> Result<Vec<[f64; 3]>> {
        let h = t_final / steps as f64;
        let rhs = |t: f64, y: [f64; 4]| -> Result<[f64; 4]> {
            let (db, dc, cp) = self.state_rhs(y[0], y[1], u(t))?;
            let (_, dxi, dzeta) = self.tangent(&cp, y[2], y[3]);
            Ok([db, dc, dxi, dzeta + hv(t)])
        };
        let mut y = [b0, c0, 0.0, 0.0];
        let mut out = vec![[0.0; 3]];
        for j in 0..steps {
            y = rk4_step(&rhs, j as f64 * h, h, y)?;
            let cp = self.couplings(y[0], y[1])?;
            let (eta, _, _) = self.tangent(&cp, y[2], y[3]);
            out.push([eta, y[2], y[3]]);
        }
        Ok(out)
    }

    /// `(q, p, r)` modal coefficients of the adjoint at `t_j`, integrated
    /// backward in `(K q + p, r)` along a forward solution recomputed at half
    /// the step.
    pub fn adjoint(
        &self,
        b0: f64,
        c0: f64,
        u: &dyn Fn(f64) -> f64,
        targets: &ModalTargets<'_>,
        t_final: f64,
        steps: usize,
    ) -> Result<Vec<[f64; 3]>> {
        let fine = self.forward(b0, c0, u, t_final, 2 * steps)?;
        let h = t_final / steps as f64;
        let kp = targets.kappa;
        let split = |cp: &Couplings, s: f64, r: f64| {
            let q = (self.k * s + cp.p_ac * r) / (self.la + cp.p_aa + self.k * self.k);
            (q, s - self.k * q)
        };
        // index into the half-step forward solution
        let rhs = |idx: usize, y: [f64; 2]| -> Result<[f64; 2]> {
            let t = idx as f64 * 0.5 * h;
            let [_, b, c] = fine[idx];
            let cp = self.couplings(b, c)?;
            let (q, p) = split(&cp, y[0], y[1]);
            let g1 = kp[0] * (b - (targets.phi_q)(t));
            let g3 = kp[2] * (c - (targets.s_q)(t));
            Ok([
                (self.lb + cp.df) * p - cp.q_a * q + cp.q_c * y[1] - g1,
                (self.lc + cp.p_cc) * y[1] - cp.p_ca * q - g3,
            ])
        };
        let [_, bt, ct] = fine[2 * steps];
        let mut y = [kp[1] * (bt - targets.phi_omega), kp[3] * (ct - targets.s_omega)];
        let mut out = vec![[0.0; 3]; steps + 1];
        let record = |y: [f64; 2], idx: usize| -> Result<[f64; 3]> {
            let [_, b, c] = fine[idx];
            let cp = self.couplings(b, c)?;
            let (q, p) = split(&cp, y[0], y[1]);
            Ok([q, p, y[1]])
        };
        out[steps] = record(y, 2 * steps)?;
        for j in (0..steps).rev() {
            let i1 = 2 * (j + 1);
            // backward step of size h: y(t - h) from y(t)
            let k1 = rhs(i1, y)?;
            let y2 = [y[0] - 0.5 * h * k1[0], y[1] - 0.5 * h * k1[1]];
            let k2 = rhs(i1 - 1, y2)?;
            let y3 = [y[0] - 0.5 * h * k2[0], y[1] - 0.5 * h * k2[1]];
            let k3 = rhs(i1 - 1, y3)?;
            let y4 = [y[0] - h * k3[0], y[1] - h * k3[1]];
            let k4 = rhs(i1 - 2, y4)?;
            for m in 0..2 {
                y[m] -= h / 6.0 * (k1[m] + 2.0 * k2[m] + 2.0 * k3[m] + k4[m]);
            }
            out[j] = record(y, 2 * j)?;
        }
        Ok(out)
    }
}

fn rk4_step<const D: usize>(
    f: &dyn Fn(f64, [f64; D]) -> Result<[f64; D]>,
    t: f64,
    h: f64,
    y: [f64; D],
) -> Result<[f64; D]> {
    let axpy = |y: [f64; D], k: [f64; D], s: f64| {
        let mut o = y;
        for i in 0..D {
            o[i] += s * k[i];
        }
        o
    };
    let k1 = f(t, y)?;
    let k2 = f(t + 0.5 * h, axpy(y, k1, 0.5 * h))?;
    let k3 = f(t + 0.5 * h, axpy(y, k2, 0.5 * h))?;
    let k4 = f(t + h, axpy(y, k3, h))?;
    let mut o = y;
    for i in 0..D {
        o[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
    Ok(o)
}

/// `max_k |x_k - ref_k| / max_k |ref_k|` over `k` in `nodes`, with the
/// reference sampled every `stride` entries.
pub fn relative_error(
    x: &[[f64; 3]],
    reference: &[[f64; 3]],
    stride: usize,
    nodes: std::ops::Range<usize>,
) -> f64 {
    let norm = |v: [f64; 3]| (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
    let mut err: f64 = 0.0;
    let mut scale: f64 = 0.0;
    for k in nodes {
        let r = reference[k * stride];
        let d = [x[k][0] - r[0], x[k][1] - r[1], x[k][2] - r[2]];
        err = err.max(norm(d));
        scale = scale.max(norm(r));
    }
    err / scale.max(f64::MIN_POSITIVE)
}
