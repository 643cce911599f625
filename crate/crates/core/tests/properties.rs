//! Property tests over random fields and controls.

use std::sync::Arc;

use approx::assert_relative_eq;
use nalgebra::DVector;
use proptest::prelude::*;
use tumorctl::config::ExperimentConfig;
use tumorctl::control::{project_admissible, ControlProblemSpec};
use tumorctl::model::{Potential, Proliferation};
use tumorctl::spectral::{inner_product, BasisKind, FractionalPower, Field, QuadratureGrid, SpectralBasis};
use tumorctl::time::TimeGrid;

const N: usize = 24;

fn basis(kind: BasisKind) -> Arc<SpectralBasis> {
    let grid = QuadratureGrid::midpoint(std::f64::consts::PI, N).unwrap();
    Arc::new(SpectralBasis::build(kind, N, grid).unwrap())
}

fn field(b: &SpectralBasis, values: Vec<f64>) -> Field {
    Field::new(b.grid().clone(), DVector::from_vec(values)).unwrap()
}

fn kind() -> impl Strategy<Value = BasisKind> {
    prop_oneof![Just(BasisKind::DirichletLaplace), Just(BasisKind::NeumannLaplace)]
}

fn values() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1.0f64..1.0, N)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn semigroup(kind in kind(), p in 0.05f64..1.0, q in 0.05f64..1.0, v in values()) {
        let b = basis(kind);
        let v = field(&b, v);
        let fp = FractionalPower::new(b.clone(), p).unwrap();
        let fq = FractionalPower::new(b.clone(), q).unwrap();
        let fpq = FractionalPower::new(b, p + q).unwrap();
        let lhs = fp.apply(&fq.apply(&v).unwrap()).unwrap();
        let rhs = fpq.apply(&v).unwrap();
        let scale = rhs.norm().max(1e-300);
        prop_assert!((lhs.values() - rhs.values()).norm() * lhs.grid().weights()[0].sqrt() <= 1e-10 * scale);
    }

    #[test]
    fn self_adjoint(kind in kind(), p in 0.05f64..1.5, u in values(), v in values()) {
        let b = basis(kind);
        let (u, v) = (field(&b, u), field(&b, v));
        let fp = FractionalPower::new(b, p).unwrap();
        let a = inner_product(&fp.apply(&u).unwrap(), &v).unwrap();
        let c = inner_product(&u, &fp.apply(&v).unwrap()).unwrap();
        let scale = fp.apply(&u).unwrap().norm() * v.norm() + fp.apply(&v).unwrap().norm() * u.norm();
        prop_assert!((a - c).abs() <= 1e-10 * scale.max(1e-300));
    }

    #[test]
    fn coercive_on_dirichlet(p in 0.05f64..1.0, v in values()) {
        let b = basis(BasisKind::DirichletLaplace);
        let v = field(&b, v);
        let fp = FractionalPower::new(b.clone(), p).unwrap();
        let lam1 = b.eigenvalues()[0].powf(p);
        prop_assert!(fp.apply(&v).unwrap().norm() >= lam1 * v.norm() * (1.0 - 1e-12));
        prop_assert!(fp.graph_norm(&v).unwrap() >= v.norm());
    }

    #[test]
    fn solve_is_a_two_sided_inverse(p in 0.1f64..1.2, m in prop::collection::vec(0.0f64..2.0, N), rhs in values()) {
        let b = basis(BasisKind::DirichletLaplace);
        let fp = FractionalPower::new(b.clone(), p).unwrap();
        let m = field(&b, m);
        let rhs = field(&b, rhs);
        let x = fp.solve_plus_mult(&m, &rhs).unwrap();
        let back = fp.apply(&x).unwrap().values() + m.values().component_mul(x.values());
        let res = field(&b, (back - rhs.values()).as_slice().to_vec()).norm();
        prop_assert!(res <= 1e-9 * rhs.norm());
    }

    #[test]
    fn modal_round_trip(kind in kind(), v in values()) {
        let b = basis(kind);
        let v = field(&b, v);
        let back = b.from_modal(&b.to_modal(&v).unwrap()).unwrap();
        prop_assert!((back.values() - v.values()).amax() <= 1e-10);
    }

    #[test]
    fn split_reconstructs_f(s in -3.0f64..3.0) {
        let (f1, f2) = Potential::Regular.split_f(s).unwrap();
        let f = Potential::Regular.f(s).unwrap();
        prop_assert!((f1 + f2 - f).abs() <= 1e-10 * (1.0 + f.abs()));
    }

    #[test]
    fn split_f1_is_monotone(s1 in -3.0f64..3.0, ds in 0.0f64..1.0) {
        let lo = Potential::Regular.split_f(s1).unwrap().0;
        let hi = Potential::Regular.split_f(s1 + ds).unwrap().0;
        prop_assert!(hi >= lo - 1e-14);
    }

    #[test]
    fn log_derivatives_match_differences(s in -0.95f64..0.95) {
        let pot = Potential::logarithmic(2.0).unwrap();
        let h = 1e-6;
        let fd = (pot.f(s + h).unwrap() - pot.f(s - h).unwrap()) / (2.0 * h);
        let exact = pot.f_prime(s).unwrap();
        prop_assert!((fd - exact).abs() <= 1e-5 * exact.abs().max(1.0));
    }

    #[test]
    fn quadratic_lower_bound(s in -10.0f64..10.0) {
        prop_assert!(Potential::Regular.eval(s).unwrap() >= s * s / 8.0 - 1.0);
    }

    #[test]
    fn proliferation_is_bounded_and_nonnegative(p0 in 0.0f64..5.0, p1 in 0.0f64..5.0, s in -10.0f64..10.0) {
        let p = Proliferation::rational(p0, p1).unwrap();
        let v = p.eval(s);
        prop_assert!(v >= 0.0 && v <= p.sup_bound() + 1e-15);
    }

    #[test]
    fn projection_is_idempotent_and_admissible(
        raw in prop::collection::vec(-5.0f64..5.0, 4 * N),
        lo in -2.0f64..0.0,
        width in 0.0f64..3.0,
    ) {
        let time = TimeGrid::new(1.0, 4).unwrap();
        let spec = ControlProblemSpec::constant([0.0; 5], &time, N, lo, lo + width).unwrap();
        let u: Vec<_> = raw.chunks(N).map(|c| DVector::from_column_slice(c)).collect();
        let once = project_admissible(&u, &spec);
        prop_assert!(spec.is_admissible(&once));
        prop_assert_eq!(project_admissible(&once, &spec), once);
    }

    #[test]
    fn negative_weights_are_rejected(i in 0usize..5, k in -10.0f64..-1e-9) {
        let mut cfg = ExperimentConfig::default();
        cfg.problem.kappa[i] = k;
        prop_assert!(cfg.validate().is_err());
    }
}

#[test]
fn graph_norm_of_first_mode() {
    let b = basis(BasisKind::DirichletLaplace);
    let fp = FractionalPower::new(b.clone(), 0.5).unwrap();
    assert_relative_eq!(fp.graph_norm(&b.mode(0)).unwrap(), 2f64.sqrt(), max_relative = 1e-12);
}
