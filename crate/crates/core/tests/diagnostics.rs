use std::sync::Arc;

use chdyn::diagnostics::{
    coercivity_constant, decay_experiment, dissipation_check, energy, fit_log_slope, generate_test_functions, record,
    trace_mismatch, vi_residual, DiagnosticsRecord, TestFunction, DEFAULT_DELTA_W,
};
use chdyn::discretization::{DiscreteOperators, Domain, Field};
use chdyn::potentials::{PotentialSpec, RegularizedPotential};
use chdyn::solver::{Solver, SolverConfig, State};
use chdyn::Error;
use proptest::prelude::*;

fn setup(d: Domain, lambda: f64, dt: f64) -> (Arc<DiscreteOperators>, Solver) {
    let ops = Arc::new(DiscreteOperators::new(d).unwrap());
    let cfg = SolverConfig::new(&ops, RegularizedPotential::new(PotentialSpec::logarithmic().with_lambda(lambda), 16).unwrap(), dt);
    (ops.clone(), Solver::new(ops, cfg).unwrap())
}

fn wave(d: &Domain, amp: f64, c: f64) -> Field {
    Field::from_bulk(d, d.sample(|x, y| c + amp * (2.0 * x + 0.4).cos() * (1.0 - 0.2 * y)))
}

#[test]
fn energy_of_zero_state_vanishes() {
    let d = Domain::Strip { lx: 1.0, nx: 4, ny: 5 };
    let (ops, s) = setup(d, 1.0, 0.01);
    let e = energy(s.config(), &ops, &Field::constant(&d, 0.0));
    assert_eq!(e.total, 0.0);
}

#[test]
fn energy_gradient_terms_match_quadrature() {
    // u = x/2: the bulk term is int 1/8 dx = 1/4 and the trace has no tangential gradient
    let d = Domain::Interval { n: 33 };
    let (ops, s) = setup(d, 0.0, 0.01);
    let e = energy(s.config(), &ops, &Field::from_bulk(&d, d.sample(|x, _| 0.5 * x)));
    assert!((e.bulk_gradient - 0.25).abs() < 1e-12, "{e:?}");
    assert_eq!(e.boundary_gradient, 0.0);
}

#[test]
fn csv_header_matches_row() {
    let d = Domain::Interval { n: 9 };
    let (ops, s) = setup(d, 0.0, 0.01);
    let (next, _) = s.step(&State::initial(wave(&d, 0.3, 0.0))).unwrap();
    let r: DiagnosticsRecord = record(s.config(), &ops, &next, 3).unwrap();
    assert_eq!(r.csv_row().split(',').count(), DiagnosticsRecord::CSV_HEADER.split(',').count());
    assert!(r.boundary_margin > 0.0 && r.bulk_margin > 0.0);
}

#[test]
fn dissipation_ledger_is_clean() {
    let d = Domain::Interval { n: 33 };
    let (ops, s) = setup(d, 2.0, 1e-3);
    let traj = s.simulate(wave(&d, 0.5, 0.1), 0.05, 1e-3).unwrap();
    let rep = dissipation_check(s.config(), &ops, &traj).unwrap();
    assert_eq!(rep.violations, 0);
    assert!(rep.max_increase <= 1e-12);
    assert_eq!(rep.rows.len(), 50);
}

#[test]
fn log_slope_oracle() {
    let t: Vec<f64> = (0..10).map(|k| k as f64 * 0.1).collect();
    let y: Vec<f64> = t.iter().map(|t| 3.0 * (-2.0 * t).exp()).collect();
    let (k, c) = fit_log_slope(&t, &y, 0.0).unwrap();
    assert!((k + 2.0).abs() < 1e-12 && (c - 3f64.ln()).abs() < 1e-12);
    assert!(fit_log_slope(&[1.0], &[1.0], 0.0).is_none());
}

#[test]
fn zero_state_has_no_trace_mismatch() {
    let d = Domain::Strip { lx: 1.0, nx: 4, ny: 5 };
    let (ops, s) = setup(d, 0.0, 0.01);
    let (next, _) = s.step(&State::initial(Field::constant(&d, 0.0))).unwrap();
    assert!(trace_mismatch(s.config(), &ops, &next).unwrap().gap < 1e-14);
}

#[test]
fn vi_rejects_bad_inputs() {
    let d = Domain::Interval { n: 17 };
    let (ops, s) = setup(d, 1.0, 1e-2);
    let traj = s.simulate(wave(&d, 0.3, 0.0), 0.1, 1e-2).unwrap();
    let narrow = vi_residual(s.config(), &ops, &traj, (0.05, 0.051), &[TestFunction::Blend { weight: 1.0 }], None, DEFAULT_DELTA_W);
    assert!(matches!(narrow, Err(Error::InsufficientData(_))));
    let wrong_mass = TestFunction::Static(vec![0.3; 17]);
    let r = vi_residual(s.config(), &ops, &traj, (0.0, 0.1), &[wrong_mass], None, DEFAULT_DELTA_W);
    assert!(matches!(r, Err(Error::InadmissibleTestFunction { index: 0, .. })));
}

#[test]
fn generated_tests_are_admissible() {
    let ops = DiscreteOperators::new(Domain::Strip { lx: 2.0, nx: 8, ny: 9 }).unwrap();
    let tests = generate_test_functions(&ops, 0.2, 30, DEFAULT_DELTA_W, 4);
    assert_eq!(tests.len(), 30);
    for t in &tests {
        if let TestFunction::Static(w) = t {
            assert!((ops.mean(w) - 0.2).abs() < 1e-12);
            assert!(w.iter().all(|v| v.abs() <= 1.0 - DEFAULT_DELTA_W));
        }
    }
}

#[test]
fn decay_checks_mass_and_shrinks() {
    let d = Domain::Interval { n: 33 };
    let (ops, s) = setup(d, 0.0, 1e-2);
    let centered = |amp: f64| {
        let f = wave(&d, amp, 0.0);
        let m = ops.mean(&f.bulk);
        Field::from_bulk(&d, f.bulk.iter().map(|v| v - m).collect())
    };
    let ens = vec![centered(0.4), centered(-0.3), Field::constant(&d, 0.0)];
    let rep = decay_experiment(&s, &ens, 1.0, 0.25).unwrap();
    assert_eq!(rep.times.len(), 5);
    assert!(rep.phi_w_diameter.last().unwrap() < &rep.phi_w_diameter[0]);
    let bad = vec![centered(0.4), Field::constant(&d, 0.2)];
    assert!(decay_experiment(&s, &bad, 1.0, 0.25).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn coercivity_constant_is_sufficient(lambda in 0.0f64..10.0, vals in prop::collection::vec(-1.0f64..1.0, 25)) {
        let ops = DiscreteOperators::new(Domain::Interval { n: 25 }).unwrap();
        let mut u = vals;
        let m = ops.mean(&u);
        u.iter_mut().for_each(|v| *v -= m);
        let l = coercivity_constant(&ops, lambda, 0.0);
        let grad = 2.0 * ops.dirichlet_energy(&u);
        let l2 = ops.inner(&u, &u);
        let lhs = grad - lambda * l2 + l * ops.h_minus1_norm_sq(&u).unwrap();
        prop_assert!(lhs >= 0.5 * (l2 + grad) - 1e-9 * (1.0 + l2 + grad), "lhs {} vs {}", lhs, 0.5 * (l2 + grad));
    }
}
