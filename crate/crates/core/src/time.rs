use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spectral::QuadratureGrid;

/// Uniform grid `t_k = k dt`, `k = 0..=n_steps`, on `[0, T]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    pub t_final: f64,
    pub n_steps: usize,
}

impl TimeGrid {
    pub fn new(t_final: f64, n_steps: usize) -> Result<Self> {
        if !(t_final.is_finite() && t_final > 0.0) {
            return Err(Error::invalid(format!("final time must be positive, got {t_final}")));
        }
        if n_steps == 0 {
            return Err(Error::invalid("need at least one time step"));
        }
        Ok(Self { t_final, n_steps })
    }

    /// Grid with step closest to `dt` that divides `T`.
    pub fn with_step(t_final: f64, dt: f64) -> Result<Self> {
        if !(dt.is_finite() && dt > 0.0) {
            return Err(Error::invalid(format!("time step must be positive, got {dt}")));
        }
        Self::new(t_final, (t_final / dt).round().max(1.0) as usize)
    }

    pub fn dt(&self) -> f64 {
        self.t_final / self.n_steps as f64
    }

    pub fn n_nodes(&self) -> usize {
        self.n_steps + 1
    }

    pub fn time(&self, k: usize) -> f64 {
        k as f64 * self.dt()
    }

    pub fn times(&self) -> Vec<f64> {
        (0..self.n_nodes()).map(|k| self.time(k)).collect()
    }

    /// The same horizon with the step count multiplied by `factor`.
    pub fn refined(&self, factor: usize) -> Self {
        Self {
            t_final: self.t_final,
            n_steps: self.n_steps * factor,
        }
    }
}

/// Grid vectors indexed by time node.
pub type Series = Vec<DVector<f64>>;

/// `L^2(Q)` inner product of two step-indexed series (piecewise constant on
/// the steps, one value per step).
pub fn step_inner(grid: &QuadratureGrid, dt: f64, u: &[DVector<f64>], v: &[DVector<f64>]) -> f64 {
    dt * u.iter().zip(v).map(|(a, b)| grid.dot(a, b)).sum::<f64>()
}

pub fn step_norm(grid: &QuadratureGrid, dt: f64, u: &[DVector<f64>]) -> f64 {
    step_inner(grid, dt, u, u).sqrt()
}

pub(crate) fn zeros_series(len: usize, n: usize) -> Series {
    vec![DVector::zeros(n); len]
}

pub(crate) fn check_series(name: &str, series: &[DVector<f64>], len: usize, n: usize) -> Result<()> {
    if series.len() != len {
        return Err(Error::invalid(format!(
            "{name}: expected {len} time entries, got {}",
            series.len()
        )));
    }
    for v in series {
        if v.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: v.len(),
            });
        }
        if v.iter().any(|x| !x.is_finite()) {
            return Err(Error::invalid(format!("{name}: non-finite values")));
        }
    }
    Ok(())
}
