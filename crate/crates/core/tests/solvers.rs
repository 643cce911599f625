//! End-to-end examples for the state, linearized and adjoint solvers and
//! the optimizer, on small grids.

use std::sync::Arc;

use nalgebra::DVector;
use tumorctl::adjoint::{adjoint_residuals, solve_adjoint, solve_q_algebraic};
use tumorctl::config::{ExperimentConfig, FieldPreset, SpaceTimePreset};
use tumorctl::control::{
    control_to_state, cost_eval, evaluate, project_admissible, projected_gradient_descent, reduced_gradient,
    stationarity_residual, ControlProblemSpec, ControlSetup, PgdOptions, Termination,
};
use tumorctl::linearized::{linearized_residuals, solve_linearized};
use tumorctl::model::{Potential, Proliferation};
use tumorctl::spectral::{BasisKind, Field, QuadratureGrid, SpectralBasis};
use tumorctl::state::{initial_mu, pde_residuals, Scheme};
use tumorctl::system::{Kernel, StateSystem};
use tumorctl::verify::SmoothControl;

fn small_config() -> ExperimentConfig {
    let mut cfg = ExperimentConfig::default();
    cfg.domain.n_grid = 16;
    cfg.time.n_steps = 50;
    cfg
}

fn zero_data_config() -> ExperimentConfig {
    let mut cfg = small_config();
    cfg.initial.phi0 = FieldPreset::Zero;
    cfg.initial.s0 = FieldPreset::Zero;
    cfg.problem.u0 = SpaceTimePreset::Zero;
    cfg.problem.phi_q = SpaceTimePreset::Zero;
    cfg
}

fn system(n: usize, p: Proliferation) -> StateSystem {
    let grid = QuadratureGrid::midpoint(std::f64::consts::PI, n).unwrap();
    let a = Arc::new(SpectralBasis::build(BasisKind::DirichletLaplace, n, grid.clone()).unwrap());
    let b = Arc::new(SpectralBasis::build(BasisKind::NeumannLaplace, n, grid.clone()).unwrap());
    StateSystem::new(a, 0.5, b.clone(), 0.5, b, 0.5, Potential::Regular, p).unwrap()
}

fn max_abs(series: &[DVector<f64>]) -> f64 {
    series.iter().map(|v| v.amax()).fold(0.0, f64::max)
}

fn max_diff(a: &[DVector<f64>], b: &[DVector<f64>]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).amax()).fold(0.0, f64::max)
}

fn random_control(setup: &ControlSetup, seed: u64, amplitude: f64) -> Vec<DVector<f64>> {
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    SmoothControl::random(&mut rng, 4, amplitude).sample(setup.grid(), &setup.time)
}

#[test]
fn zero_data_gives_zero_trajectory() {
    let exp = zero_data_config().build().unwrap();
    let traj = control_to_state(&exp.setup, &exp.u0).unwrap();
    assert_eq!(max_abs(&traj.mu), 0.0);
    assert_eq!(max_abs(&traj.phi), 0.0);
    assert_eq!(max_abs(&traj.s), 0.0);
    let res = pde_residuals(&exp.setup.system, &traj, &exp.u0).unwrap();
    assert!(res.iter().flatten().all(|&r| r == 0.0));
}

#[test]
fn initial_mu_examples() {
    let sys = system(16, Proliferation::zero());
    let grid = sys.grid().clone();
    let e1 = sys.a_op().basis().mode(0);
    let mu = initial_mu(&sys, &Field::zeros(grid.clone()), &e1).unwrap();
    assert_eq!(mu.max_abs(), 0.0);

    // P = 1, lambda_1^{2 rho} = 1: mu0 = e1 / 2.
    let sys = system(16, Proliferation::constant(1.0).unwrap());
    let mu = initial_mu(&sys, &Field::zeros(grid), &e1).unwrap();
    let err = (mu.values() - e1.values() * 0.5).amax();
    assert!(err < 1e-12, "{err}");
}

#[test]
fn solve_q_examples() {
    let sys = system(16, Proliferation::zero());
    let grid = sys.grid().clone();
    let zero = Field::zeros(grid.clone());
    let e1 = sys.a_op().basis().mode(0);
    let q = solve_q_algebraic(&sys, &zero, &e1, &zero).unwrap();
    assert!((q.values() - e1.values()).amax() < 1e-12);

    // P = c, p = 0, r = e_j: q = c e_j / (lambda_j + c).
    let c = 0.7;
    let pc = Field::from_fn(grid, |_| c);
    for j in [0, 2, 5] {
        let ej = sys.a_op().basis().mode(j);
        let lam = sys.a_op().basis().eigenvalues()[j];
        let q = solve_q_algebraic(&sys, &pc, &zero, &ej).unwrap();
        let expect = ej.values() * (c / (lam + c));
        assert!((q.values() - expect).amax() < 1e-11);
    }
    assert!(solve_q_algebraic(&sys, &Field::from_fn(sys.grid().clone(), |_| -1.0), &e1, &e1).is_err());
}

#[test]
fn converged_run_has_small_residuals_and_perturbation_is_detected() {
    let exp = small_config().build().unwrap();
    let u = random_control(&exp.setup, 3, 1.0);
    let mut traj = control_to_state(&exp.setup, &u).unwrap();
    let res = pde_residuals(&exp.setup.system, &traj, &u).unwrap();
    let worst = res.iter().flatten().cloned().fold(0.0, f64::max);
    assert!(worst <= 1e-9, "{worst}");
    assert!(traj.newton_iterations.iter().all(|&i| i <= 10));

    traj.phi[10].iter_mut().for_each(|v| *v += 1e-3);
    let res = pde_residuals(&exp.setup.system, &traj, &u).unwrap();
    let worst = res.iter().flatten().cloned().fold(0.0, f64::max);
    assert!(worst >= 1e-5, "{worst}");
}

#[test]
fn kernels_agree_on_complete_bases() {
    let exp = small_config().build().unwrap();
    assert_eq!(exp.setup.system.kernel(), Kernel::Collocation);
    let u = random_control(&exp.setup, 5, 1.0);
    let colloc = control_to_state(&exp.setup, &u).unwrap();
    let mut galerkin = exp.setup.clone();
    galerkin.system = galerkin.system.with_kernel(Kernel::Galerkin).unwrap();
    let modal = control_to_state(&galerkin, &u).unwrap();
    assert!(max_diff(&colloc.phi, &modal.phi) < 1e-9);
    assert!(max_diff(&colloc.s, &modal.s) < 1e-9);
    assert!(max_diff(&colloc.mu, &modal.mu) < 1e-9);
}

#[test]
fn fully_implicit_scheme_converges_and_differs_at_order_dt() {
    let exp = small_config().build().unwrap();
    let u = random_control(&exp.setup, 7, 1.0);
    let semi = control_to_state(&exp.setup, &u).unwrap();
    let mut full = exp.setup.clone();
    full.solver.scheme = Scheme::FullyImplicit;
    let traj = control_to_state(&full, &u).unwrap();
    let res = pde_residuals(&full.system, &traj, &u).unwrap();
    assert!(res.iter().flatten().all(|&r| r <= 1e-9));
    let gap = max_diff(&semi.phi, &traj.phi);
    assert!(gap > 0.0 && gap < 10.0 * exp.setup.dt(), "{gap}");
}

#[test]
fn logarithmic_potential_keeps_phi_inside() {
    let mut cfg = small_config();
    cfg.potential = tumorctl::config::PotentialConfig::Logarithmic { c1: 2.0 };
    cfg.initial.phi0 = FieldPreset::Cosine {
        amplitude: 0.5,
        mode: 1,
        offset: 0.0,
    };
    let exp = cfg.build().unwrap();
    let traj = control_to_state(&exp.setup, &exp.u0).unwrap();
    let (lo, hi) = traj.phi_range();
    assert!(lo > -1.0 + 1e-3 && hi < 1.0 - 1e-3, "{lo} {hi}");
}

#[test]
fn linearized_zero_direction_and_homogeneity() {
    let exp = small_config().build().unwrap();
    let setup = &exp.setup;
    let u = random_control(setup, 11, 1.0);
    let traj = control_to_state(setup, &u).unwrap();
    let zero = solve_linearized(&setup.system, &traj, &setup.zero_control()).unwrap();
    assert_eq!(max_abs(&zero.xi) + max_abs(&zero.zeta) + max_abs(&zero.eta), 0.0);

    let h = random_control(setup, 12, 1.0);
    let h2: Vec<_> = h.iter().map(|v| v * 2.0).collect();
    let one = solve_linearized(&setup.system, &traj, &h).unwrap();
    let two = solve_linearized(&setup.system, &traj, &h2).unwrap();
    let scaled: Vec<_> = one.xi.iter().map(|v| v * 2.0).collect();
    assert!(max_diff(&scaled, &two.xi) <= 1e-12 * max_abs(&two.xi).max(1.0));
    let scaled: Vec<_> = one.zeta.iter().map(|v| v * 2.0).collect();
    assert!(max_diff(&scaled, &two.zeta) <= 1e-12 * max_abs(&two.zeta).max(1.0));

    let res = linearized_residuals(&setup.system, &traj, &one, &h).unwrap();
    assert!(res.iter().flatten().all(|&r| r <= 1e-9));
}

#[test]
fn adjoint_vanishes_without_cost_and_satisfies_its_equations() {
    let exp = small_config().build().unwrap();
    let setup = &exp.setup;
    let u = random_control(setup, 13, 1.0);
    let traj = control_to_state(setup, &u).unwrap();
    let mut spec = exp.spec.clone();
    spec.kappa = [0.0; 5];
    let adj = solve_adjoint(&setup.system, &traj, &spec).unwrap();
    assert_eq!(max_abs(&adj.q) + max_abs(&adj.p) + max_abs(&adj.r), 0.0);

    let spec = ControlProblemSpec {
        kappa: [1.0, 0.5, 1.0, 0.5, 0.1],
        ..exp.spec.clone()
    };
    let adj = solve_adjoint(&setup.system, &traj, &spec).unwrap();
    let res = adjoint_residuals(&setup.system, &traj, &spec, &adj).unwrap();
    let worst = res.iter().flatten().cloned().fold(0.0, f64::max);
    assert!(worst <= 1e-9, "{worst}");
}

#[test]
fn cost_examples() {
    let exp = zero_data_config().build().unwrap();
    let setup = &exp.setup;
    let traj = control_to_state(setup, &setup.zero_control()).unwrap();
    let ones: Vec<_> = setup.zero_control().iter().map(|v| v.add_scalar(1.0)).collect();
    let spec = ControlProblemSpec::constant([0.0, 0.0, 0.0, 0.0, 2.0], &setup.time, setup.system.n(), -10.0, 10.0)
        .unwrap();
    let j = cost_eval(setup.grid(), &ones, &traj, &spec).unwrap();
    assert!((j - std::f64::consts::PI).abs() < 1e-12, "{j}");

    let spec = ControlProblemSpec {
        kappa: [0.0; 5],
        ..spec
    };
    assert_eq!(cost_eval(setup.grid(), &ones, &traj, &spec).unwrap(), 0.0);
    let spec = ControlProblemSpec {
        kappa: [0.0, 3.0, 0.0, 0.0, 0.0],
        ..spec
    };
    assert_eq!(cost_eval(setup.grid(), &ones, &traj, &spec).unwrap(), 0.0);
}

#[test]
fn projection_clamps_to_the_box() {
    let exp = small_config().build().unwrap();
    let setup = &exp.setup;
    let spec = ControlProblemSpec::constant([0.0; 5], &setup.time, setup.system.n(), -1.0, 1.0).unwrap();
    let threes: Vec<_> = setup.zero_control().iter().map(|v| v.add_scalar(3.0)).collect();
    let p = project_admissible(&threes, &spec);
    assert!(p.iter().all(|v| v.iter().all(|&x| x == 1.0)));
    let inside = random_control(setup, 17, 0.2);
    assert!(spec.is_admissible(&inside));
    assert_eq!(project_admissible(&inside, &spec), inside);
}

#[test]
fn gradient_and_stationarity_examples() {
    let exp = small_config().build().unwrap();
    let setup = &exp.setup;
    let u = random_control(setup, 19, 0.5);
    let mut spec = exp.spec.clone();
    spec.kappa[4] = 0.0;
    let ev = evaluate(setup, &spec, &u).unwrap();
    let g = reduced_gradient(&u, &ev.adjoint, &spec).unwrap();
    assert_eq!(max_diff(&g, &ev.adjoint.r[1..]), 0.0);

    // u = -r / kappa5 inside wide bounds is stationary.
    spec.kappa[4] = 2.0;
    spec.u_min = vec![DVector::from_element(setup.system.n(), -1e6); setup.time.n_steps];
    spec.u_max = vec![DVector::from_element(setup.system.n(), 1e6); setup.time.n_steps];
    let u_star: Vec<_> = ev.adjoint.r[1..].iter().map(|r| r * -0.5).collect();
    let res = stationarity_residual(setup.grid(), setup.dt(), &u_star, &ev.adjoint, &spec).unwrap();
    assert_eq!(res, 0.0);
    let g = reduced_gradient(&u_star, &ev.adjoint, &spec).unwrap();
    assert!(max_abs(&g) < 1e-14);
}

#[test]
fn pgd_with_control_cost_only_converges_to_zero() {
    let exp = small_config().build().unwrap();
    let setup = &exp.setup;
    let spec = ControlProblemSpec::constant([0.0, 0.0, 0.0, 0.0, 1.0], &setup.time, setup.system.n(), -1.0, 1.0)
        .unwrap();
    let u0 = random_control(setup, 23, 0.5);
    let report = projected_gradient_descent(setup, &spec, &u0, &PgdOptions::default()).unwrap();
    assert_eq!(report.termination, Termination::Converged);
    assert!(max_abs(&report.control) < 1e-8);
    assert!(report.final_stationarity() <= 1e-8);
    assert!(report.costs().windows(2).all(|w| w[1] < w[0]));
}

#[test]
fn pgd_with_zero_iterations_returns_the_start() {
    let exp = small_config().build().unwrap();
    let opts = PgdOptions {
        max_iters: 0,
        ..PgdOptions::default()
    };
    let report = projected_gradient_descent(&exp.setup, &exp.spec, &exp.u0, &opts).unwrap();
    assert_eq!(report.history.len(), 1);
    assert_eq!(report.control, project_admissible(&exp.u0, &exp.spec));
}

#[test]
fn pgd_costs_are_monotone_on_the_tracking_problem() {
    let mut cfg = small_config();
    cfg.optimizer.max_iters = 15;
    let exp = cfg.build().unwrap();
    let report = projected_gradient_descent(&exp.setup, &exp.spec, &exp.u0, &cfg.optimizer).unwrap();
    assert!(report.costs().windows(2).all(|w| w[1] <= w[0]));
    assert!(exp.spec.is_admissible(&report.control));
}
