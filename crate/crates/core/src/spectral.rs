//! Quadrature grids, eigenfunction bases and spectrally defined fractional
//! powers of self-adjoint operators with compact resolvent.
//!
//! All three operators of the model share one midpoint grid on `(0, L)`. The
//! sine family (Dirichlet Laplacian) and the cosine family (Neumann Laplacian)
//! are both exactly orthogonal under the midpoint rule, so mixed-basis inner
//! products need no interpolation.

use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Gram deviation accepted for user supplied (custom) bases.
pub const CUSTOM_GRAM_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureGrid {
    points: Vec<f64>,
    weights: Vec<f64>,
    length: f64,
}

impl QuadratureGrid {
    /// Midpoint grid `x_i = (i - 1/2) L / N` with uniform weights `L / N`.
    pub fn midpoint(length: f64, n: usize) -> Result<Arc<Self>> {
        if !(length.is_finite() && length > 0.0) {
            return Err(Error::invalid(format!("domain length must be positive, got {length}")));
        }
        if n == 0 {
            return Err(Error::invalid("grid needs at least one point"));
        }
        let h = length / n as f64;
        let points = (0..n).map(|i| (i as f64 + 0.5) * h).collect();
        Ok(Arc::new(Self {
            points,
            weights: vec![h; n],
            length,
        }))
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    /// Weighted inner product of two raw grid vectors.
    pub fn dot(&self, u: &DVector<f64>, v: &DVector<f64>) -> f64 {
        self.weights
            .iter()
            .zip(u.iter().zip(v.iter()))
            .map(|(w, (a, b))| w * a * b)
            .sum()
    }

    pub fn norm(&self, v: &DVector<f64>) -> f64 {
        self.dot(v, v).sqrt()
    }

    /// Integral of a grid vector.
    pub fn integrate(&self, v: &DVector<f64>) -> f64 {
        self.weights.iter().zip(v.iter()).map(|(w, a)| w * a).sum()
    }

    pub fn same_as(&self, other: &QuadratureGrid) -> bool {
        std::ptr::eq(self, other) || self == other
    }
}

/// Real function on the grid, stored as nodal values.
#[derive(Debug, Clone)]
pub struct Field {
    grid: Arc<QuadratureGrid>,
    values: DVector<f64>,
}

impl Field {
    pub fn new(grid: Arc<QuadratureGrid>, values: DVector<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::DimensionMismatch {
                expected: grid.len(),
                got: values.len(),
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("field contains non-finite values"));
        }
        Ok(Self { grid, values })
    }

    pub fn zeros(grid: Arc<QuadratureGrid>) -> Self {
        let n = grid.len();
        Self {
            grid,
            values: DVector::zeros(n),
        }
    }

    pub fn from_fn(grid: Arc<QuadratureGrid>, f: impl Fn(f64) -> f64) -> Self {
        let values = DVector::from_iterator(grid.len(), grid.points().iter().map(|&x| f(x)));
        Self { grid, values }
    }

    pub fn grid(&self) -> &Arc<QuadratureGrid> {
        &self.grid
    }

    pub fn values(&self) -> &DVector<f64> {
        &self.values
    }

    pub fn into_values(self) -> DVector<f64> {
        self.values
    }

    pub fn norm(&self) -> f64 {
        self.grid.norm(&self.values)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.amax()
    }

    pub(crate) fn check_grid(&self, other: &Field) -> Result<()> {
        if self.grid.same_as(&other.grid) {
            Ok(())
        } else {
            Err(Error::GridMismatch)
        }
    }
}

/// `(u, v)` under the grid quadrature.
pub fn inner_product(u: &Field, v: &Field) -> Result<f64> {
    u.check_grid(v)?;
    Ok(u.grid.dot(&u.values, &v.values))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BasisKind {
    DirichletLaplace,
    NeumannLaplace,
    Custom,
}

/// Eigenpairs of a nonnegative self-adjoint operator, tabulated on a grid.
#[derive(Debug, Clone)]
pub struct SpectralBasis {
    kind: BasisKind,
    eigenvalues: Vec<f64>,
    /// `eigvecs[(i, j)] = e_j(x_i)`.
    eigvecs: DMatrix<f64>,
    /// `eigvecs^T W`, the analysis map.
    analysis: DMatrix<f64>,
    grid: Arc<QuadratureGrid>,
}

impl SpectralBasis {
    /// Eigenpairs of the 1-D Laplacian on `(0, L)` with Dirichlet or Neumann
    /// conditions, truncated to `n_modes` (at most the number of grid points).
    pub fn build(kind: BasisKind, n_modes: usize, grid: Arc<QuadratureGrid>) -> Result<Self> {
        let n = grid.len();
        if n_modes == 0 {
            return Err(Error::invalid("n_modes must be at least 1"));
        }
        if n_modes > n {
            return Err(Error::invalid(format!(
                "n_modes = {n_modes} exceeds the {n} grid points"
            )));
        }
        let l = grid.length();
        let mut eigvecs = DMatrix::zeros(n, n_modes);
        let eigenvalues: Vec<f64> = match kind {
            BasisKind::DirichletLaplace => (1..=n_modes)
                .map(|j| {
                    let k = j as f64 * PI / l;
                    for (i, &x) in grid.points().iter().enumerate() {
                        eigvecs[(i, j - 1)] = (2.0 / l).sqrt() * (k * x).sin();
                    }
                    k * k
                })
                .collect(),
            BasisKind::NeumannLaplace => (1..=n_modes)
                .map(|j| {
                    let k = (j - 1) as f64 * PI / l;
                    let scale = if j == 1 { (1.0 / l).sqrt() } else { (2.0 / l).sqrt() };
                    for (i, &x) in grid.points().iter().enumerate() {
                        eigvecs[(i, j - 1)] = scale * (k * x).cos();
                    }
                    k * k
                })
                .collect(),
            BasisKind::Custom => {
                return Err(Error::invalid("use SpectralBasis::custom for user supplied bases"))
            }
        };
        // The highest sine mode on the midpoint grid alternates +-1 and has
        // discrete norm sqrt(2); renormalize columns under the quadrature.
        for j in 0..n_modes {
            let col = eigvecs.column(j).into_owned();
            let norm = grid.norm(&col);
            if (norm - 1.0).abs() > 1e-14 {
                eigvecs.column_mut(j).scale_mut(1.0 / norm);
            }
        }
        let basis = Self::assemble(kind, eigenvalues, eigvecs, grid);
        let dev = basis.gram_deviation();
        if dev > 1e-10 {
            return Err(Error::NonOrthonormal(dev));
        }
        Ok(basis)
    }

    /// User supplied eigenpairs; rejected unless orthonormal within
    /// [`CUSTOM_GRAM_TOL`] and the eigenvalues are nonnegative and sorted.
    pub fn custom(
        grid: Arc<QuadratureGrid>,
        eigenvalues: Vec<f64>,
        eigvecs: DMatrix<f64>,
    ) -> Result<Self> {
        if eigvecs.nrows() != grid.len() {
            return Err(Error::DimensionMismatch {
                expected: grid.len(),
                got: eigvecs.nrows(),
            });
        }
        if eigvecs.ncols() != eigenvalues.len() || eigenvalues.is_empty() {
            return Err(Error::DimensionMismatch {
                expected: eigvecs.ncols(),
                got: eigenvalues.len(),
            });
        }
        if eigenvalues.iter().any(|l| !l.is_finite() || *l < 0.0) {
            return Err(Error::invalid("eigenvalues must be finite and nonnegative"));
        }
        if eigenvalues.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::invalid("eigenvalues must be nondecreasing"));
        }
        let basis = Self::assemble(BasisKind::Custom, eigenvalues, eigvecs, grid);
        let dev = basis.gram_deviation();
        if dev > CUSTOM_GRAM_TOL {
            return Err(Error::NonOrthonormal(dev));
        }
        Ok(basis)
    }

    fn assemble(
        kind: BasisKind,
        eigenvalues: Vec<f64>,
        eigvecs: DMatrix<f64>,
        grid: Arc<QuadratureGrid>,
    ) -> Self {
        let mut analysis = eigvecs.transpose();
        for (i, w) in grid.weights().iter().enumerate() {
            analysis.column_mut(i).scale_mut(*w);
        }
        Self {
            kind,
            eigenvalues,
            eigvecs,
            analysis,
            grid,
        }
    }

    /// Max-entry deviation of the quadrature Gram matrix from the identity.
    pub fn gram_deviation(&self) -> f64 {
        let gram = &self.analysis * &self.eigvecs;
        let m = gram.nrows();
        (gram - DMatrix::identity(m, m)).amax()
    }

    pub fn kind(&self) -> BasisKind {
        self.kind
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn eigvecs(&self) -> &DMatrix<f64> {
        &self.eigvecs
    }

    /// `E^T W`: maps grid values to modal coefficients.
    pub fn analysis(&self) -> &DMatrix<f64> {
        &self.analysis
    }

    pub fn n_modes(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn grid(&self) -> &Arc<QuadratureGrid> {
        &self.grid
    }

    /// True when the retained modes span the whole grid space.
    pub fn is_complete(&self) -> bool {
        self.n_modes() == self.grid.len()
    }

    pub fn mode(&self, j: usize) -> Field {
        Field {
            grid: self.grid.clone(),
            values: self.eigvecs.column(j).into_owned(),
        }
    }

    /// Coefficients `(v, e_j)`.
    pub fn to_modal(&self, field: &Field) -> Result<DVector<f64>> {
        if !self.grid.same_as(field.grid()) {
            return Err(Error::GridMismatch);
        }
        Ok(self.project(field.values()))
    }

    pub fn from_modal(&self, coeffs: &DVector<f64>) -> Result<Field> {
        if coeffs.len() != self.n_modes() {
            return Err(Error::DimensionMismatch {
                expected: self.n_modes(),
                got: coeffs.len(),
            });
        }
        Ok(Field {
            grid: self.grid.clone(),
            values: self.synthesize(coeffs),
        })
    }

    pub(crate) fn project(&self, v: &DVector<f64>) -> DVector<f64> {
        &self.analysis * v
    }

    pub(crate) fn synthesize(&self, c: &DVector<f64>) -> DVector<f64> {
        &self.eigvecs * c
    }
}

/// `X^p v = sum_j lambda_j^p (v, e_j) e_j` for a basis of `X`.
#[derive(Debug, Clone)]
pub struct FractionalPower {
    basis: Arc<SpectralBasis>,
    exponent: f64,
    scaled: Vec<f64>,
}

/// `lambda^p` with `0^p = 0`.
fn power(lambda: f64, p: f64) -> f64 {
    if lambda == 0.0 {
        0.0
    } else {
        lambda.powf(p)
    }
}

impl FractionalPower {
    pub fn new(basis: Arc<SpectralBasis>, exponent: f64) -> Result<Self> {
        if !(exponent.is_finite() && exponent > 0.0) {
            return Err(Error::invalid(format!(
                "fractional exponent must be positive, got {exponent}"
            )));
        }
        let scaled = basis.eigenvalues().iter().map(|&l| power(l, exponent)).collect();
        Ok(Self {
            basis,
            exponent,
            scaled,
        })
    }

    pub fn basis(&self) -> &Arc<SpectralBasis> {
        &self.basis
    }

    pub fn exponent(&self) -> f64 {
        self.exponent
    }

    /// `lambda_j^p` for each retained mode.
    pub fn symbol(&self) -> &[f64] {
        &self.scaled
    }

    pub fn with_exponent(&self, exponent: f64) -> Result<Self> {
        Self::new(self.basis.clone(), exponent)
    }

    pub fn apply(&self, v: &Field) -> Result<Field> {
        if !self.basis.grid().same_as(v.grid()) {
            return Err(Error::GridMismatch);
        }
        Ok(Field {
            grid: v.grid().clone(),
            values: self.apply_raw(v.values()),
        })
    }

    pub(crate) fn apply_raw(&self, v: &DVector<f64>) -> DVector<f64> {
        let mut c = self.basis.project(v);
        for (cj, s) in c.iter_mut().zip(&self.scaled) {
            *cj *= s;
        }
        self.basis.synthesize(&c)
    }

    /// Grid-space matrix `E diag(lambda^p) E^T W`.
    pub fn matrix(&self) -> DMatrix<f64> {
        let mut scaled_e = self.basis.eigvecs().clone();
        for (j, s) in self.scaled.iter().enumerate() {
            scaled_e.column_mut(j).scale_mut(*s);
        }
        scaled_e * self.basis.analysis()
    }

    /// `(||v||^2 + ||X^p v||^2)^(1/2)`.
    pub fn graph_norm(&self, v: &Field) -> Result<f64> {
        let xv = self.apply(v)?;
        Ok((v.norm().powi(2) + xv.norm().powi(2)).sqrt())
    }

    pub(crate) fn graph_norm_raw(&self, v: &DVector<f64>) -> f64 {
        let grid = self.basis.grid();
        let xv = self.apply_raw(v);
        (grid.dot(v, v) + grid.dot(&xv, &xv)).sqrt()
    }

    /// Solves `X^p x + m x = rhs` for a pointwise multiplier `m >= 0`.
    ///
    /// With a complete basis the grid-space system is solved exactly; with a
    /// truncated basis the Galerkin solution in the span of the retained
    /// modes is returned.
    pub fn solve_plus_mult(&self, m: &Field, rhs: &Field) -> Result<Field> {
        m.check_grid(rhs)?;
        if !self.basis.grid().same_as(rhs.grid()) {
            return Err(Error::GridMismatch);
        }
        if m.values().iter().any(|&v| v < 0.0) {
            return Err(Error::invalid("multiplier must be nonnegative"));
        }
        let values = self.solve_plus_mult_raw(m.values(), rhs.values())?;
        Ok(Field {
            grid: rhs.grid().clone(),
            values,
        })
    }

    pub(crate) fn solve_plus_mult_raw(
        &self,
        m: &DVector<f64>,
        rhs: &DVector<f64>,
    ) -> Result<DVector<f64>> {
        let lowest = self.scaled.iter().cloned().fold(f64::INFINITY, f64::min);
        if lowest <= 0.0 && m.iter().all(|&v| v == 0.0) {
            return Err(Error::Degenerate(
                "zero eigenvalue with vanishing multiplier".into(),
            ));
        }
        if rhs.iter().all(|&v| v == 0.0) {
            return Ok(DVector::zeros(rhs.len()));
        }
        if self.basis.is_complete() {
            let mut mat = self.matrix();
            for i in 0..m.len() {
                mat[(i, i)] += m[i];
            }
            mat.lu()
                .solve(rhs)
                .ok_or_else(|| Error::Degenerate("singular power-plus-multiplier matrix".into()))
        } else {
            let e = self.basis.eigvecs();
            let mut me = e.clone();
            for (i, mi) in m.iter().enumerate() {
                me.row_mut(i).scale_mut(*mi);
            }
            let mut mat = self.basis.analysis() * me;
            for (j, s) in self.scaled.iter().enumerate() {
                mat[(j, j)] += s;
            }
            let b = self.basis.project(rhs);
            let y = mat
                .lu()
                .solve(&b)
                .ok_or_else(|| Error::Degenerate("singular Galerkin system".into()))?;
            Ok(e * y)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn grid(n: usize) -> Arc<QuadratureGrid> {
        QuadratureGrid::midpoint(PI, n).unwrap()
    }

    fn basis(kind: BasisKind, modes: usize, n: usize) -> Arc<SpectralBasis> {
        Arc::new(SpectralBasis::build(kind, modes, grid(n)).unwrap())
    }

    #[test]
    fn grid_weights_sum_to_length() {
        let g = QuadratureGrid::midpoint(2.5, 37).unwrap();
        let s: f64 = g.weights().iter().sum();
        assert!((s - 2.5).abs() <= 1e-12 * 2.5);
        assert!(g.points().windows(2).all(|w| w[1] > w[0]));
        assert!(g.points()[0] > 0.0 && *g.points().last().unwrap() < 2.5);
    }

    #[test]
    fn laplace_eigenvalues() {
        let d = basis(BasisKind::DirichletLaplace, 3, 16);
        assert_relative_eq!(d.eigenvalues()[0], 1.0, epsilon = 1e-14);
        assert_relative_eq!(d.eigenvalues()[1], 4.0, epsilon = 1e-14);
        assert_relative_eq!(d.eigenvalues()[2], 9.0, epsilon = 1e-13);
        let nb = basis(BasisKind::NeumannLaplace, 2, 16);
        assert_eq!(nb.eigenvalues()[0], 0.0);
        assert_relative_eq!(nb.eigenvalues()[1], 1.0, epsilon = 1e-14);
    }

    #[test]
    fn complete_bases_are_orthonormal() {
        for kind in [BasisKind::DirichletLaplace, BasisKind::NeumannLaplace] {
            for n in [1, 2, 7, 64] {
                let b = basis(kind, n, n);
                // direct Gram product, independent of gram_deviation
                let e = b.eigvecs();
                let w = b.grid().weights()[0];
                let gram = e.transpose() * e * w;
                assert!((gram - DMatrix::identity(n, n)).amax() < 1e-10, "{kind:?} n={n}");
            }
        }
    }

    #[test]
    fn custom_basis_rejects_non_orthonormal() {
        let g = grid(4);
        let e = DMatrix::from_element(4, 2, 0.5);
        let err = SpectralBasis::custom(g, vec![1.0, 2.0], e).unwrap_err();
        assert!(matches!(err, Error::NonOrthonormal(_)));
    }

    #[test]
    fn custom_basis_accepts_builtin_copy() {
        let b = basis(BasisKind::DirichletLaplace, 8, 8);
        let c = SpectralBasis::custom(b.grid().clone(), b.eigenvalues().to_vec(), b.eigvecs().clone())
            .unwrap();
        assert_eq!(c.kind(), BasisKind::Custom);
    }

    #[test]
    fn modal_transforms() {
        let b = basis(BasisKind::DirichletLaplace, 8, 8);
        let c = b.to_modal(&b.mode(1)).unwrap();
        for (j, v) in c.iter().enumerate() {
            let expected = if j == 1 { 1.0 } else { 0.0 };
            assert!((v - expected).abs() < 1e-12);
        }
        let z = b.from_modal(&DVector::zeros(8)).unwrap();
        assert_eq!(z.max_abs(), 0.0);
        assert!(b.from_modal(&DVector::zeros(3)).is_err());
    }

    #[test]
    fn power_on_eigenvector() {
        let b = basis(BasisKind::DirichletLaplace, 16, 16);
        let fp = FractionalPower::new(b.clone(), 0.75).unwrap();
        let out = fp.apply(&b.mode(1)).unwrap();
        let expected = 4f64.powf(0.75);
        assert_relative_eq!(expected, 2.8284271, epsilon = 1e-7);
        for (o, e) in out.values().iter().zip(b.mode(1).values().iter()) {
            assert!((o - expected * e).abs() < 1e-12);
        }
        assert!(FractionalPower::new(b, -0.5).is_err());
    }

    #[test]
    fn neumann_constant_is_annihilated() {
        let b = basis(BasisKind::NeumannLaplace, 32, 32);
        let c = Field::from_fn(b.grid().clone(), |_| 3.0);
        for p in [0.1, 0.5, 1.7] {
            let fp = FractionalPower::new(b.clone(), p).unwrap();
            // round-off leaking into mode j is amplified by lambda_j^p
            let lam_max = b.eigenvalues().iter().cloned().fold(0.0, f64::max);
            assert!(fp.apply(&c).unwrap().max_abs() < 1e-14 * 3.0 * lam_max.powf(p));
        }
    }

    #[test]
    fn inner_products_and_graph_norm() {
        let b = basis(BasisKind::DirichletLaplace, 16, 16);
        let e1 = b.mode(0);
        let e2 = b.mode(1);
        assert_relative_eq!(inner_product(&e1, &e1).unwrap(), 1.0, epsilon = 1e-12);
        assert!(inner_product(&e1, &e2).unwrap().abs() < 1e-12);
        let fp = FractionalPower::new(b.clone(), 0.5).unwrap();
        assert_relative_eq!(fp.graph_norm(&e1).unwrap(), 2f64.sqrt(), epsilon = 1e-12);
        let other = Field::zeros(grid(8));
        assert!(matches!(inner_product(&e1, &other), Err(Error::GridMismatch)));
    }

    #[test]
    fn power_matrix_single_mode_outer_product() {
        let b = basis(BasisKind::DirichletLaplace, 1, 12);
        let fp = FractionalPower::new(b.clone(), 1.0).unwrap();
        let m = fp.matrix();
        let e = b.eigvecs().column(0);
        let w = b.grid().weights()[0];
        for i in 0..12 {
            for j in 0..12 {
                let expected = b.eigenvalues()[0] * e[i] * e[j] * w;
                assert!((m[(i, j)] - expected).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn power_matrix_is_self_adjoint_and_diagonalized() {
        let b = basis(BasisKind::NeumannLaplace, 24, 24);
        let fp = FractionalPower::new(b.clone(), 1.3).unwrap();
        let m = fp.matrix();
        // uniform weights: W^{-1} M^T W = M^T
        assert!((&m - m.transpose()).amax() <= 1e-9);
        for j in 0..24 {
            let ej = b.eigvecs().column(j).into_owned();
            let lhs = &m * &ej;
            let rhs = ej * fp.symbol()[j];
            assert!((lhs - rhs).amax() < 1e-10 * (1.0 + fp.symbol()[j]));
        }
    }

    #[test]
    fn solve_plus_mult_cases() {
        let b = basis(BasisKind::DirichletLaplace, 16, 16);
        let fp = FractionalPower::new(b.clone(), 1.0).unwrap(); // 2 rho with rho = 0.5
        let g = b.grid().clone();
        let zero = Field::zeros(g.clone());
        let x = fp.solve_plus_mult(&zero, &b.mode(0)).unwrap();
        assert!((x.values() - b.mode(0).values()).amax() < 1e-12);
        let c = 0.7;
        let m = Field::from_fn(g.clone(), |_| c);
        for j in [0, 3, 9] {
            let x = fp.solve_plus_mult(&m, &b.mode(j)).unwrap();
            let expected = b.mode(j).values() / (b.eigenvalues()[j] + c);
            assert!((x.values() - expected).amax() < 1e-11);
        }
        let x = fp.solve_plus_mult(&m, &zero).unwrap();
        assert_eq!(x.max_abs(), 0.0);
    }

    #[test]
    fn solve_plus_mult_degenerate() {
        let b = basis(BasisKind::NeumannLaplace, 8, 8);
        let fp = FractionalPower::new(b.clone(), 1.0).unwrap();
        let zero = Field::zeros(b.grid().clone());
        let err = fp.solve_plus_mult(&zero, &b.mode(0)).unwrap_err();
        assert!(matches!(err, Error::Degenerate(_)));
    }
}
