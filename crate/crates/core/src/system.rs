//! The operator triple, nonlinearities and cached discretization matrices
//! shared by the state, linearized and adjoint solvers.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::model::{Potential, Proliferation};
use crate::spectral::{FractionalPower, QuadratureGrid, SpectralBasis};

/// How the equations are discretized in space.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kernel {
    /// Grid-space collocation. Requires every basis to be complete, in which
    /// case it coincides with the Galerkin scheme and pointwise products stay
    /// diagonal.
    Collocation,
    /// Modal Galerkin projection onto the retained modes of each operator.
    Galerkin,
}

/// `A^{2 rho}`, `B^{2 sigma}`, `C^{2 tau}` together with `F` and `P`.
#[derive(Debug, Clone)]
pub struct StateSystem {
    grid: Arc<QuadratureGrid>,
    a: FractionalPower,
    b: FractionalPower,
    c: FractionalPower,
    rho: f64,
    sigma: f64,
    tau: f64,
    potential: Potential,
    proliferation: Proliferation,
    kernel: Kernel,
    pub(crate) mats: Matrices,
}

#[derive(Debug, Clone)]
pub(crate) enum Matrices {
    Collocation {
        m_a: DMatrix<f64>,
        m_b: DMatrix<f64>,
        m_c: DMatrix<f64>,
    },
    Galerkin(GalerkinMats),
}

/// Modal data. `t_x = E_x^T W`, `k_xy = t_x E_y`.
#[derive(Debug, Clone)]
pub(crate) struct GalerkinMats {
    pub e_a: DMatrix<f64>,
    pub e_b: DMatrix<f64>,
    pub e_c: DMatrix<f64>,
    pub t_a: DMatrix<f64>,
    pub t_b: DMatrix<f64>,
    pub t_c: DMatrix<f64>,
    pub lam_a: DVector<f64>,
    pub lam_b: DVector<f64>,
    pub lam_c: DVector<f64>,
    pub k_ab: DMatrix<f64>,
    pub k_ba: DMatrix<f64>,
}

impl GalerkinMats {
    pub fn dims(&self) -> (usize, usize, usize) {
        (self.lam_a.len(), self.lam_b.len(), self.lam_c.len())
    }

    /// `t_x diag(v) e_y`.
    pub fn weighted(t_x: &DMatrix<f64>, v: &DVector<f64>, e_y: &DMatrix<f64>) -> DMatrix<f64> {
        let mut scaled = e_y.clone();
        for (i, vi) in v.iter().enumerate() {
            scaled.row_mut(i).scale_mut(*vi);
        }
        t_x * scaled
    }
}

impl StateSystem {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        a_basis: Arc<SpectralBasis>,
        rho: f64,
        b_basis: Arc<SpectralBasis>,
        sigma: f64,
        c_basis: Arc<SpectralBasis>,
        tau: f64,
        potential: Potential,
        proliferation: Proliferation,
    ) -> Result<Self> {
        let grid = a_basis.grid().clone();
        if !grid.same_as(b_basis.grid()) || !grid.same_as(c_basis.grid()) {
            return Err(Error::GridMismatch);
        }
        if a_basis.eigenvalues()[0] <= 0.0 {
            return Err(Error::invalid(
                "the first eigenvalue of A must be strictly positive",
            ));
        }
        let a = FractionalPower::new(a_basis, 2.0 * rho)?;
        let b = FractionalPower::new(b_basis, 2.0 * sigma)?;
        let c = FractionalPower::new(c_basis, 2.0 * tau)?;
        let complete =
            a.basis().is_complete() && b.basis().is_complete() && c.basis().is_complete();
        let kernel = if complete {
            Kernel::Collocation
        } else {
            Kernel::Galerkin
        };
        let mats = Self::build_mats(kernel, &a, &b, &c);
        Ok(Self {
            grid,
            a,
            b,
            c,
            rho,
            sigma,
            tau,
            potential,
            proliferation,
            kernel,
            mats,
        })
    }

    /// Forces a kernel; collocation needs complete bases.
    pub fn with_kernel(mut self, kernel: Kernel) -> Result<Self> {
        if kernel == Kernel::Collocation
            && !(self.a.basis().is_complete()
                && self.b.basis().is_complete()
                && self.c.basis().is_complete())
        {
            return Err(Error::invalid("collocation needs complete bases"));
        }
        if kernel != self.kernel {
            self.mats = Self::build_mats(kernel, &self.a, &self.b, &self.c);
            self.kernel = kernel;
        }
        Ok(self)
    }

    fn build_mats(
        kernel: Kernel,
        a: &FractionalPower,
        b: &FractionalPower,
        c: &FractionalPower,
    ) -> Matrices {
        match kernel {
            Kernel::Collocation => Matrices::Collocation {
                m_a: a.matrix(),
                m_b: b.matrix(),
                m_c: c.matrix(),
            },
            Kernel::Galerkin => {
                let (ba, bb, bc) = (a.basis(), b.basis(), c.basis());
                let k_ab = ba.analysis() * bb.eigvecs();
                Matrices::Galerkin(GalerkinMats {
                    e_a: ba.eigvecs().clone(),
                    e_b: bb.eigvecs().clone(),
                    e_c: bc.eigvecs().clone(),
                    t_a: ba.analysis().clone(),
                    t_b: bb.analysis().clone(),
                    t_c: bc.analysis().clone(),
                    lam_a: DVector::from_column_slice(a.symbol()),
                    lam_b: DVector::from_column_slice(b.symbol()),
                    lam_c: DVector::from_column_slice(c.symbol()),
                    k_ba: k_ab.transpose(),
                    k_ab,
                })
            }
        }
    }

    pub fn grid(&self) -> &Arc<QuadratureGrid> {
        &self.grid
    }

    pub fn n(&self) -> usize {
        self.grid.len()
    }

    pub fn kernel(&self) -> Kernel {
        self.kernel
    }

    /// `A^{2 rho}`.
    pub fn a_op(&self) -> &FractionalPower {
        &self.a
    }

    /// `B^{2 sigma}`.
    pub fn b_op(&self) -> &FractionalPower {
        &self.b
    }

    /// `C^{2 tau}`.
    pub fn c_op(&self) -> &FractionalPower {
        &self.c
    }

    pub fn exponents(&self) -> (f64, f64, f64) {
        (self.rho, self.sigma, self.tau)
    }

    pub fn potential(&self) -> &Potential {
        &self.potential
    }

    pub fn proliferation(&self) -> &Proliferation {
        &self.proliferation
    }

    /// `A^rho`, `B^sigma`, `C^tau` (graph norms and energies).
    pub fn half_powers(&self) -> (FractionalPower, FractionalPower, FractionalPower) {
        (
            self.a.with_exponent(self.rho).expect("positive exponent"),
            self.b.with_exponent(self.sigma).expect("positive exponent"),
            self.c.with_exponent(self.tau).expect("positive exponent"),
        )
    }

    pub(crate) fn map_p(&self, phi: &DVector<f64>) -> DVector<f64> {
        phi.map(|s| self.proliferation.eval(s))
    }

    pub(crate) fn map_dp(&self, phi: &DVector<f64>) -> DVector<f64> {
        phi.map(|s| self.proliferation.d1(s))
    }

    pub(crate) fn map_f(&self, phi: &DVector<f64>) -> Result<DVector<f64>> {
        let mut out = DVector::zeros(phi.len());
        for (o, &s) in out.iter_mut().zip(phi.iter()) {
            *o = self.potential.f(s)?;
        }
        Ok(out)
    }

    pub(crate) fn map_df(&self, phi: &DVector<f64>) -> Result<DVector<f64>> {
        let mut out = DVector::zeros(phi.len());
        for (o, &s) in out.iter_mut().zip(phi.iter()) {
            *o = self.potential.f_prime(s)?;
        }
        Ok(out)
    }

    /// Orthogonal projection onto the span of the retained modes of B, C.
    pub(crate) fn project_b(&self, v: &DVector<f64>) -> DVector<f64> {
        let b = self.b.basis();
        b.synthesize(&b.project(v))
    }

    pub(crate) fn project_c(&self, v: &DVector<f64>) -> DVector<f64> {
        let b = self.c.basis();
        b.synthesize(&b.project(v))
    }

    /// Weighted norm of the part of `v` tested against the span of `basis`
    /// (the full grid norm for complete bases).
    pub(crate) fn tested_norm(&self, which: Which, v: &DVector<f64>) -> f64 {
        let basis = match which {
            Which::A => self.a.basis(),
            Which::B => self.b.basis(),
            Which::C => self.c.basis(),
        };
        if basis.is_complete() {
            self.grid.norm(v)
        } else {
            basis.project(v).norm()
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub(crate) enum Which {
    A,
    B,
    C,
}

/// Adds `d` to the diagonal of `m`.
pub(crate) fn add_diag(m: &mut DMatrix<f64>, d: &DVector<f64>) {
    for (i, v) in d.iter().enumerate() {
        m[(i, i)] += v;
    }
}

pub(crate) fn add_identity(m: &mut DMatrix<f64>, s: f64) {
    for i in 0..m.nrows().min(m.ncols()) {
        m[(i, i)] += s;
    }
}

/// `diag(d) * m`.
pub(crate) fn diag_mul(d: &DVector<f64>, m: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = m.clone();
    for (i, v) in d.iter().enumerate() {
        out.row_mut(i).scale_mut(*v);
    }
    out
}

/// `m * diag(d)`.
pub(crate) fn mul_diag(m: &DMatrix<f64>, d: &DVector<f64>) -> DMatrix<f64> {
    let mut out = m.clone();
    for (j, v) in d.iter().enumerate() {
        out.column_mut(j).scale_mut(*v);
    }
    out
}
