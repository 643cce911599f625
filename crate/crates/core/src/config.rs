//! TOML experiment configuration.
//!
//! Every section is optional; missing keys take the desk-scale defaults
//! (`Omega = (0, pi)`, `N = 64`, `T = 1`, `dt = 1e-3`). See
//! `configs/default.toml` for the full schema with comments.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::control::{control_to_state, ControlProblemSpec, ControlSetup, PgdOptions};
use crate::error::{Error, Result};
use crate::model::{Potential, Proliferation};
use crate::spectral::{BasisKind, QuadratureGrid, SpectralBasis};
use crate::state::SolverConfig;
use crate::system::StateSystem;
use crate::time::{Series, TimeGrid};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub run_id: String,
    pub output_dir: PathBuf,
    pub seed: u64,
    pub domain: DomainConfig,
    pub operators: OperatorsConfig,
    pub potential: PotentialConfig,
    pub proliferation: ProliferationConfig,
    pub initial: InitialConfig,
    pub time: TimeConfig,
    pub solver: SolverConfig,
    pub problem: ProblemConfig,
    pub optimizer: PgdOptions,
    pub probes: ProbeConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            run_id: "default".into(),
            output_dir: PathBuf::from("out"),
            seed: 20240521,
            domain: DomainConfig::default(),
            operators: OperatorsConfig::default(),
            potential: PotentialConfig::Regular,
            proliferation: ProliferationConfig::Rational { p0: 1.0, p1: 0.1 },
            initial: InitialConfig::default(),
            time: TimeConfig::default(),
            solver: SolverConfig::default(),
            problem: ProblemConfig::default(),
            optimizer: PgdOptions::default(),
            probes: ProbeConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DomainConfig {
    pub length: f64,
    pub n_grid: usize,
}

impl Default for DomainConfig {
    fn default() -> Self {
        Self {
            length: PI,
            n_grid: 64,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OperatorConfig {
    pub kind: BasisKind,
    /// Defaults to the number of grid points.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_modes: Option<usize>,
    /// `rho`, `sigma` or `tau`; the equations use twice this value.
    pub exponent: f64,
    /// JSON file with `eigenvalues` and `eigvecs` (`eigvecs[i][j] = e_j(x_i)`)
    /// for `kind = "custom"`, relative to the config file.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub file: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OperatorsConfig {
    pub a: OperatorConfig,
    pub b: OperatorConfig,
    pub c: OperatorConfig,
}

impl Default for OperatorsConfig {
    fn default() -> Self {
        let op = |kind| OperatorConfig {
            kind,
            n_modes: None,
            exponent: 0.5,
            file: None,
        };
        Self {
            a: op(BasisKind::DirichletLaplace),
            b: op(BasisKind::NeumannLaplace),
            c: op(BasisKind::NeumannLaplace),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PotentialConfig {
    Regular,
    Logarithmic { c1: f64 },
    Custom { coefficients: Vec<f64> },
}

impl Default for PotentialConfig {
    fn default() -> Self {
        PotentialConfig::Regular
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ProliferationConfig {
    /// `P(s) = p0 / (1 + s^2) + p1`.
    Rational { p0: f64, p1: f64 },
    Constant { value: f64 },
}

impl Default for ProliferationConfig {
    fn default() -> Self {
        ProliferationConfig::Rational { p0: 1.0, p1: 0.1 }
    }
}

/// Spatial field presets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "preset", rename_all = "snake_case", deny_unknown_fields)]
pub enum FieldPreset {
    Zero,
    Constant {
        value: f64,
    },
    /// `offset + amplitude * cos(mode * pi * x / L)`.
    Cosine {
        amplitude: f64,
        #[serde(default = "one")]
        mode: u32,
        #[serde(default)]
        offset: f64,
    },
    /// `offset + amplitude * sin(mode * pi * x / L)`.
    Sine {
        amplitude: f64,
        #[serde(default = "one")]
        mode: u32,
        #[serde(default)]
        offset: f64,
    },
    /// Coefficients in the retained modes of one operator's basis.
    Modal {
        basis: OperatorSlot,
        coefficients: Vec<f64>,
    },
}

fn one() -> u32 {
    1
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OperatorSlot {
    A,
    B,
    C,
}

/// Time profiles `g(t)` for separable space-time fields.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TimeProfile {
    Constant,
    /// `t / T`
    Linear,
    /// `sin(pi t / T)`
    SinPi,
    /// `cos(pi t / T)`
    CosPi,
}

impl TimeProfile {
    fn eval(self, t: f64, t_final: f64) -> f64 {
        match self {
            TimeProfile::Constant => 1.0,
            TimeProfile::Linear => t / t_final,
            TimeProfile::SinPi => (PI * t / t_final).sin(),
            TimeProfile::CosPi => (PI * t / t_final).cos(),
        }
    }
}

/// Space-time field presets (controls, bounds, targets).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "preset", rename_all = "snake_case", deny_unknown_fields)]
pub enum SpaceTimePreset {
    Zero,
    Constant { value: f64 },
    /// `space(x) * time(t)`.
    Separable { space: FieldPreset, time: TimeProfile },
    /// The state component generated by the given control (synthetic target;
    /// only meaningful for `phi_q` and `s_q`).
    StateOf { control: Box<SpaceTimePreset> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InitialConfig {
    pub phi0: FieldPreset,
    pub s0: FieldPreset,
}

impl Default for InitialConfig {
    fn default() -> Self {
        Self {
            phi0: FieldPreset::Cosine {
                amplitude: 0.3,
                mode: 1,
                offset: 0.0,
            },
            s0: FieldPreset::Cosine {
                amplitude: 0.2,
                mode: 1,
                offset: 0.5,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TimeConfig {
    pub t_final: f64,
    pub n_steps: usize,
}

impl Default for TimeConfig {
    fn default() -> Self {
        Self {
            t_final: 1.0,
            n_steps: 1000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProblemConfig {
    pub kappa: [f64; 5],
    pub phi_q: SpaceTimePreset,
    pub s_q: SpaceTimePreset,
    pub phi_omega: FieldPreset,
    pub s_omega: FieldPreset,
    pub u_min: SpaceTimePreset,
    pub u_max: SpaceTimePreset,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub r_ball: Option<f64>,
    /// Control used by `simulate` and as the optimizer's starting point.
    pub u0: SpaceTimePreset,
}

impl Default for ProblemConfig {
    fn default() -> Self {
        let synthetic = SpaceTimePreset::Separable {
            space: FieldPreset::Cosine {
                amplitude: 0.5,
                mode: 1,
                offset: 0.0,
            },
            time: TimeProfile::SinPi,
        };
        Self {
            kappa: [100.0, 0.0, 0.0, 0.0, 0.3],
            phi_q: SpaceTimePreset::StateOf {
                control: Box::new(synthetic),
            },
            s_q: SpaceTimePreset::Zero,
            phi_omega: FieldPreset::Zero,
            s_omega: FieldPreset::Zero,
            u_min: SpaceTimePreset::Constant { value: -1.0 },
            u_max: SpaceTimePreset::Constant { value: 1.0 },
            r_ball: None,
            u0: SpaceTimePreset::Zero,
        }
    }
}

/// Sizes of the randomized probes run by `verify`, `linearize-check` and
/// `adjoint-check`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProbeConfig {
    pub random_fields: usize,
    pub frechet_pairs: usize,
    pub frechet_eps: Vec<f64>,
    pub fd_eps: Vec<f64>,
    pub lipschitz_pairs: usize,
    pub lipschitz_radius: f64,
    pub viscosities: Vec<u64>,
    pub ode_tol: f64,
    pub vi_samples: usize,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        Self {
            random_fields: 100,
            frechet_pairs: 3,
            frechet_eps: vec![1e-1, 1e-2, 1e-3, 1e-4],
            fd_eps: vec![1e-4],
            lipschitz_pairs: 20,
            lipschitz_radius: 1.0,
            viscosities: vec![10, 100, 1000, 10000],
            ode_tol: 1e-10,
            vi_samples: 100,
        }
    }
}

/// Fully resolved objects built from a config.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub config: ExperimentConfig,
    pub setup: ControlSetup,
    pub spec: ControlProblemSpec,
    pub u0: Series,
}

impl ExperimentConfig {
    /// Reads and validates a config file. Relative `file` references resolve
    /// against the config's directory.
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::config(path.display().to_string(), e.to_string()))?;
        let mut cfg = Self::from_toml(&text)?;
        if let Some(dir) = path.parent() {
            for op in [&mut cfg.operators.a, &mut cfg.operators.b, &mut cfg.operators.c] {
                if let Some(f) = &op.file {
                    if f.is_relative() {
                        op.file = Some(dir.join(f));
                    }
                }
            }
        }
        Ok(cfg)
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| {
            let span = e.span().map(|s| format!(" (bytes {}..{})", s.start, s.end)).unwrap_or_default();
            Error::config("<toml>", format!("{}{span}", e.message().trim()))
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::config("<toml>", e.to_string()))
    }

    /// Replaces the step count by `round(T / dt)`.
    pub fn with_dt(mut self, dt: f64) -> Result<Self> {
        let grid = TimeGrid::with_step(self.time.t_final, dt)
            .map_err(|e| Error::config("time.dt", e.to_string()))?;
        self.time.n_steps = grid.n_steps;
        Ok(self)
    }

    /// Load-time checks of every hypothesis that does not need a solve.
    pub fn validate(&self) -> Result<()> {
        let d = &self.domain;
        if !(d.length.is_finite() && d.length > 0.0) {
            return Err(Error::config("domain.length", "the domain length L must be positive"));
        }
        if d.n_grid == 0 {
            return Err(Error::config("domain.n_grid", "need at least one grid point"));
        }
        for (name, op) in [
            ("operators.a", &self.operators.a),
            ("operators.b", &self.operators.b),
            ("operators.c", &self.operators.c),
        ] {
            if !(op.exponent.is_finite() && op.exponent > 0.0) {
                return Err(Error::config(
                    format!("{name}.exponent"),
                    "rho, sigma and tau must be positive real numbers",
                ));
            }
            if let Some(m) = op.n_modes {
                if m == 0 || m > d.n_grid {
                    return Err(Error::config(
                        format!("{name}.n_modes"),
                        format!("n_modes must lie in 1..={}", d.n_grid),
                    ));
                }
            }
            if (op.kind == BasisKind::Custom) != op.file.is_some() {
                return Err(Error::config(
                    format!("{name}.file"),
                    "a file is required for, and only allowed with, kind = \"custom\"",
                ));
            }
        }
        if self.operators.a.kind == BasisKind::NeumannLaplace {
            return Err(Error::config(
                "operators.a.kind",
                "the first eigenvalue of A must be strictly positive; the Neumann Laplacian has a zero eigenvalue",
            ));
        }
        self.build_potential()?;
        self.build_proliferation()?;
        if !(self.time.t_final.is_finite() && self.time.t_final > 0.0) {
            return Err(Error::config("time.t_final", "the final time T must be positive"));
        }
        if self.time.n_steps == 0 {
            return Err(Error::config("time.n_steps", "need at least one time step"));
        }
        self.solver
            .validate()
            .map_err(|e| Error::config("solver", e.to_string()))?;
        for (i, &k) in self.problem.kappa.iter().enumerate() {
            if !(k.is_finite() && k >= 0.0) {
                return Err(Error::config(
                    format!("problem.kappa[{i}]"),
                    format!("kappa{} = {k} violates the hypothesis kappa_i >= 0", i + 1),
                ));
            }
        }
        if let Some(r) = self.problem.r_ball {
            if !(r > 0.0) {
                return Err(Error::config("problem.r_ball", "the ball radius R must be positive"));
            }
        }
        self.optimizer
            .validate()
            .map_err(|e| Error::config("optimizer", e.to_string()))?;
        let p = &self.probes;
        if p.frechet_eps.len() < 2 || p.frechet_eps.iter().any(|&e| !(e > 0.0)) {
            return Err(Error::config("probes.frechet_eps", "need at least two positive scales"));
        }
        if p.fd_eps.is_empty() || p.fd_eps.iter().any(|&e| !(e > 0.0)) {
            return Err(Error::config("probes.fd_eps", "need positive scales"));
        }
        if p.viscosities.contains(&0) {
            return Err(Error::config("probes.viscosities", "viscosity indices must be >= 1"));
        }
        if !(p.ode_tol > 0.0) {
            return Err(Error::config("probes.ode_tol", "must be positive"));
        }
        if !(p.lipschitz_radius > 0.0) {
            return Err(Error::config("probes.lipschitz_radius", "must be positive"));
        }
        Ok(())
    }

    pub fn build_potential(&self) -> Result<Potential> {
        match &self.potential {
            PotentialConfig::Regular => Ok(Potential::Regular),
            PotentialConfig::Logarithmic { c1 } => Potential::logarithmic(*c1)
                .map_err(|_| Error::config("potential.c1", format!("c1 = {c1}: the logarithmic potential needs c1 > 1"))),
            PotentialConfig::Custom { coefficients } => Potential::custom(coefficients.clone())
                .map_err(|e| Error::config("potential.coefficients", e.to_string())),
        }
    }

    pub fn build_proliferation(&self) -> Result<Proliferation> {
        let msg = "P must be nonnegative, bounded and Lipschitz (p0, p1 >= 0)";
        match self.proliferation {
            ProliferationConfig::Rational { p0, p1 } => {
                Proliferation::rational(p0, p1).map_err(|_| Error::config("proliferation", msg))
            }
            ProliferationConfig::Constant { value } => {
                Proliferation::constant(value).map_err(|_| Error::config("proliferation.value", msg))
            }
        }
    }

    fn build_basis(&self, name: &str, op: &OperatorConfig, grid: &Arc<QuadratureGrid>) -> Result<Arc<SpectralBasis>> {
        let located = |e: Error| Error::config(format!("operators.{name}"), e.to_string());
        let basis = match op.kind {
            BasisKind::Custom => {
                let path = op.file.as_ref().expect("validated");
                let text = std::fs::read_to_string(path)
                    .map_err(|e| Error::config(path.display().to_string(), e.to_string()))?;
                let raw: CustomBasisFile = serde_json::from_str(&text)
                    .map_err(|e| Error::config(path.display().to_string(), e.to_string()))?;
                let rows = raw.eigvecs.len();
                let cols = raw.eigvecs.first().map_or(0, |r| r.len());
                if raw.eigvecs.iter().any(|r| r.len() != cols) {
                    return Err(Error::config(path.display().to_string(), "ragged eigvecs"));
                }
                let m = DMatrix::from_fn(rows, cols, |i, j| raw.eigvecs[i][j]);
                SpectralBasis::custom(grid.clone(), raw.eigenvalues, m).map_err(located)?
            }
            kind => {
                SpectralBasis::build(kind, op.n_modes.unwrap_or(grid.len()), grid.clone()).map_err(located)?
            }
        };
        Ok(Arc::new(basis))
    }

    /// Builds grids, bases, the state system, initial data, problem data and
    /// the starting control. Initial data outside the potential domain are
    /// rejected here.
    pub fn build(&self) -> Result<Experiment> {
        self.validate()?;
        let grid = QuadratureGrid::midpoint(self.domain.length, self.domain.n_grid)
            .map_err(|e| Error::config("domain", e.to_string()))?;
        let a = self.build_basis("a", &self.operators.a, &grid)?;
        let b = self.build_basis("b", &self.operators.b, &grid)?;
        let c = self.build_basis("c", &self.operators.c, &grid)?;
        let bases = [a.clone(), b.clone(), c.clone()];
        let system = StateSystem::new(
            a,
            self.operators.a.exponent,
            b,
            self.operators.b.exponent,
            c,
            self.operators.c.exponent,
            self.build_potential()?,
            self.build_proliferation()?,
        )
        .map_err(|e| Error::config("operators", e.to_string()))?;
        let time = TimeGrid::new(self.time.t_final, self.time.n_steps)
            .map_err(|e| Error::config("time", e.to_string()))?;
        let field = |key: &str, p: &FieldPreset| eval_field(key, p, &grid, &bases);
        let phi0 = field("initial.phi0", &self.initial.phi0)?;
        let (lo, hi) = system.potential().domain();
        if let Some(v) = phi0.iter().find(|v| system.potential().check(**v).is_err()) {
            return Err(Error::config(
                "initial.phi0",
                format!(
                    "phi0 = {v} lies outside ({lo}, {hi}); the initial phase must take values in a compact [a0, b0] inside the potential domain"
                ),
            ));
        }
        let s0 = field("initial.s0", &self.initial.s0)?;
        let setup = ControlSetup {
            system,
            phi0,
            s0,
            time,
            solver: self.solver,
        };
        let pr = &self.problem;
        let steps = |key: &str, p: &SpaceTimePreset| eval_space_time(key, p, &grid, &bases, &time, false);
        let u0 = steps("problem.u0", &pr.u0)?;
        let u_min = steps("problem.u_min", &pr.u_min)?;
        let u_max = steps("problem.u_max", &pr.u_max)?;
        if u_min
            .iter()
            .zip(&u_max)
            .any(|(a, b)| a.iter().zip(b.iter()).any(|(x, y)| x > y))
        {
            return Err(Error::config(
                "problem.u_min",
                "u_min > u_max somewhere; the bounds must satisfy u_min <= u_max a.e. in Q",
            ));
        }
        let target = |key: &str, p: &SpaceTimePreset, which_s: bool| -> Result<Series> {
            match p {
                SpaceTimePreset::StateOf { control } => {
                    let u = eval_space_time(key, control, &grid, &bases, &time, false)?;
                    let traj = control_to_state(&setup, &u)
                        .map_err(|e| Error::config(key, format!("synthetic target solve failed: {e}")))?;
                    Ok(if which_s { traj.s } else { traj.phi })
                }
                other => eval_space_time(key, other, &grid, &bases, &time, true),
            }
        };
        let spec = ControlProblemSpec::new(
            pr.kappa,
            target("problem.phi_q", &pr.phi_q, false)?,
            target("problem.s_q", &pr.s_q, true)?,
            field("problem.phi_omega", &pr.phi_omega)?,
            field("problem.s_omega", &pr.s_omega)?,
            u_min,
            u_max,
            pr.r_ball,
        )
        .map_err(|e| Error::config("problem", e.to_string()))?;
        Ok(Experiment {
            config: self.clone(),
            setup,
            spec,
            u0,
        })
    }
}

#[derive(Deserialize)]
struct CustomBasisFile {
    eigenvalues: Vec<f64>,
    eigvecs: Vec<Vec<f64>>,
}

fn eval_field(
    key: &str,
    p: &FieldPreset,
    grid: &QuadratureGrid,
    bases: &[Arc<SpectralBasis>; 3],
) -> Result<DVector<f64>> {
    let l = grid.length();
    let pts = grid.points();
    let v = match p {
        FieldPreset::Zero => DVector::zeros(grid.len()),
        FieldPreset::Constant { value } => DVector::from_element(grid.len(), *value),
        FieldPreset::Cosine {
            amplitude,
            mode,
            offset,
        } => DVector::from_iterator(
            grid.len(),
            pts.iter()
                .map(|x| offset + amplitude * (*mode as f64 * PI * x / l).cos()),
        ),
        FieldPreset::Sine {
            amplitude,
            mode,
            offset,
        } => DVector::from_iterator(
            grid.len(),
            pts.iter()
                .map(|x| offset + amplitude * (*mode as f64 * PI * x / l).sin()),
        ),
        FieldPreset::Modal {
            basis,
            coefficients,
        } => {
            let b = &bases[*basis as usize];
            if coefficients.len() > b.n_modes() {
                return Err(Error::config(
                    key,
                    format!(
                        "{} modal coefficients for a basis with {} modes",
                        coefficients.len(),
                        b.n_modes()
                    ),
                ));
            }
            let mut c = DVector::zeros(b.n_modes());
            c.rows_mut(0, coefficients.len())
                .copy_from_slice(coefficients);
            b.from_modal(&c)?.into_values()
        }
    };
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::config(key, "non-finite field values"));
    }
    Ok(v)
}

/// Values at the control nodes `t_1..t_n`, or at all nodes `t_0..t_n` when
/// `nodes` is set.
fn eval_space_time(
    key: &str,
    p: &SpaceTimePreset,
    grid: &QuadratureGrid,
    bases: &[Arc<SpectralBasis>; 3],
    time: &TimeGrid,
    nodes: bool,
) -> Result<Series> {
    let ks: Vec<usize> = if nodes {
        (0..=time.n_steps).collect()
    } else {
        (1..=time.n_steps).collect()
    };
    match p {
        SpaceTimePreset::Zero => Ok(vec![DVector::zeros(grid.len()); ks.len()]),
        SpaceTimePreset::Constant { value } => Ok(vec![DVector::from_element(grid.len(), *value); ks.len()]),
        SpaceTimePreset::Separable { space, time: prof } => {
            let s = eval_field(key, space, grid, bases)?;
            Ok(ks
                .iter()
                .map(|&k| &s * prof.eval(time.time(k), time.t_final))
                .collect())
        }
        SpaceTimePreset::StateOf { .. } => Err(Error::config(
            key,
            "state_of is only allowed for the tracking targets phi_q and s_q",
        )),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn err_path(r: Result<ExperimentConfig>) -> String {
        match r {
            Err(Error::Config { path, message }) => format!("{path}: {message}"),
            other => panic!("expected a config error, got {other:?}"),
        }
    }

    #[test]
    fn empty_file_gives_defaults() {
        assert_eq!(ExperimentConfig::from_toml("").unwrap(), ExperimentConfig::default());
    }

    #[test]
    fn shipped_default_matches_code_defaults() {
        let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/default.toml");
        assert_eq!(ExperimentConfig::from_path(&path).unwrap(), ExperimentConfig::default());
    }

    #[test]
    fn round_trip_is_identity() {
        let mut cfg = ExperimentConfig::default();
        cfg.potential = PotentialConfig::Logarithmic { c1: 2.0 };
        cfg.problem.r_ball = Some(3.0);
        cfg.operators.b.n_modes = Some(7);
        cfg.initial.s0 = FieldPreset::Modal {
            basis: OperatorSlot::C,
            coefficients: vec![0.1, 1.0 / 3.0],
        };
        let text = cfg.to_toml().unwrap();
        assert_eq!(ExperimentConfig::from_toml(&text).unwrap(), cfg);
    }

    #[test]
    fn negative_kappa_names_the_hypothesis() {
        let msg = err_path(ExperimentConfig::from_toml("[problem]\nkappa = [1, 1, 1, -1, 1]"));
        assert!(msg.contains("problem.kappa[3]") && msg.contains("kappa_i >= 0"), "{msg}");
    }

    #[test]
    fn unknown_and_ill_typed_keys_are_located() {
        let msg = err_path(ExperimentConfig::from_toml("[time]\nn_step = 3"));
        assert!(msg.contains("n_step"), "{msg}");
        let msg = err_path(ExperimentConfig::from_toml("[domain]\nn_grid = \"many\""));
        assert!(msg.contains("n_grid") || msg.contains("bytes"), "{msg}");
    }

    #[test]
    fn hypothesis_violations_rejected() {
        for (text, needle) in [
            ("[potential]\nkind = \"logarithmic\"\nc1 = 0.5", "c1 > 1"),
            ("[operators.a]\nkind = \"neumann_laplace\"\nexponent = 0.5", "first eigenvalue"),
            ("[operators.b]\nkind = \"neumann_laplace\"\nexponent = 0.0", "positive"),
            ("[proliferation]\nkind = \"rational\"\np0 = -1.0\np1 = 0.0", "nonnegative"),
        ] {
            let msg = err_path(ExperimentConfig::from_toml(text));
            assert!(msg.contains(needle), "{text}: {msg}");
        }
    }

    fn small() -> ExperimentConfig {
        let mut cfg = ExperimentConfig::default();
        cfg.domain.n_grid = 8;
        cfg.time.n_steps = 10;
        cfg.problem.phi_q = SpaceTimePreset::Zero;
        cfg
    }

    #[test]
    fn crossed_bounds_rejected_at_build() {
        let mut cfg = small();
        cfg.problem.u_min = SpaceTimePreset::Constant { value: 1.0 };
        cfg.problem.u_max = SpaceTimePreset::Constant { value: 0.0 };
        let msg = err_path(cfg.build().map(|e| e.config));
        assert!(msg.contains("u_min <= u_max"), "{msg}");
    }

    #[test]
    fn phi0_outside_domain_rejected_at_build() {
        let mut cfg = small();
        cfg.potential = PotentialConfig::Logarithmic { c1: 2.0 };
        cfg.initial.phi0 = FieldPreset::Constant { value: 1.0 };
        let msg = err_path(cfg.build().map(|e| e.config));
        assert!(msg.contains("initial.phi0"), "{msg}");
    }

    #[test]
    fn dt_override_rounds_step_count() {
        let cfg = ExperimentConfig::default().with_dt(2.5e-3).unwrap();
        assert_eq!(cfg.time.n_steps, 400);
        assert!(ExperimentConfig::default().with_dt(-1.0).is_err());
    }

    #[test]
    fn synthetic_target_is_the_generated_state() {
        let mut cfg = small();
        cfg.problem = ProblemConfig::default();
        let exp = cfg.build().unwrap();
        let u = eval_space_time(
            "",
            &SpaceTimePreset::Separable {
                space: FieldPreset::Cosine { amplitude: 0.5, mode: 1, offset: 0.0 },
                time: TimeProfile::SinPi,
            },
            exp.setup.grid(),
            &[exp.setup.system.a_op().basis().clone(), exp.setup.system.b_op().basis().clone(), exp.setup.system.c_op().basis().clone()],
            &exp.setup.time,
            false,
        )
        .unwrap();
        let traj = control_to_state(&exp.setup, &u).unwrap();
        assert_eq!(traj.phi, exp.spec.phi_q);
    }

    #[test]
    fn custom_basis_file_is_loaded() {
        let dir = tempfile::tempdir().unwrap();
        let n = 4;
        let grid = QuadratureGrid::midpoint(PI, n).unwrap();
        let basis = SpectralBasis::build(BasisKind::NeumannLaplace, n, grid).unwrap();
        let eigvecs: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| basis.eigvecs()[(i, j)]).collect()).collect();
        let json = serde_json::json!({ "eigenvalues": basis.eigenvalues(), "eigvecs": eigvecs });
        std::fs::write(dir.path().join("b.json"), json.to_string()).unwrap();
        let text = format!(
            "[domain]\nn_grid = {n}\n[time]\nn_steps = 4\n[problem.phi_q]\npreset = \"zero\"\n[operators.b]\nkind = \"custom\"\nexponent = 0.5\nfile = \"b.json\"\n"
        );
        std::fs::write(dir.path().join("c.toml"), text).unwrap();
        let cfg = ExperimentConfig::from_path(&dir.path().join("c.toml")).unwrap();
        let exp = cfg.build().unwrap();
        assert_eq!(exp.setup.system.b_op().basis().kind(), BasisKind::Custom);
    }
}
