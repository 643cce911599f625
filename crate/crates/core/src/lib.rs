//! Spectral-Galerkin solvers and projected-gradient optimal control for a
//! three-field fractional Cahn–Hilliard tumor growth model with `alpha = 0`,
//! `beta = 1`.
//!
//! The crate is organised bottom-up:
//!
//! - [`spectral`]: quadrature grids, eigenbases and fractional powers;
//! - [`model`]: potentials, proliferation and the separation interval;
//! - [`state`], [`linearized`], [`adjoint`]: forward, tangent and backward solves;
//! - [`control`]: cost, projection, reduced gradient and the optimizer;
//! - [`config`], [`io`], [`verify`], [`experiment`]: the driver layer used by the CLI.

pub mod adjoint;
pub mod config;
pub mod control;
pub mod error;
pub mod experiment;
pub mod io;
pub mod linearized;
pub mod model;
pub mod oracle;
pub mod par;
pub mod spectral;
pub mod state;
pub mod system;
pub mod time;
pub mod verify;

pub use error::{Error, Result};
