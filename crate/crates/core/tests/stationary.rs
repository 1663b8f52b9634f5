use chdyn::potentials::PotentialSpec;
use chdyn::stationary::{
    classify, critical_k, shoot, solve_bvp, time_of_flight, variational_equilibrium_check, BvpSolution, Classification,
    CriticalFlux, Exit, ShootOptions, StationaryProblem,
};
use proptest::prelude::*;

fn k_plus_log() -> f64 {
    match critical_k(&PotentialSpec::logarithmic()).unwrap() {
        CriticalFlux::Finite { k_plus, .. } => k_plus,
        CriticalFlux::NotApplicable => panic!("logarithmic potential has a finite F(1)"),
    }
}

/// `x1(s)` by composite Simpson after `v = 1 - w^2`, which removes the endpoint singularity.
fn flight_oracle(spec: &PotentialSpec, s: f64) -> f64 {
    let big_f = |v: f64| spec.antiderivative(v).unwrap().finite().unwrap_or(f64::INFINITY);
    let g = |w: f64| 2.0 * w / (s * s + 2.0 * big_f(1.0 - w * w)).sqrt();
    let n = 20000;
    let h = 1.0 / n as f64;
    let mut acc = g(0.0) + g(1.0);
    for i in 1..n {
        acc += g(i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    acc * h / 3.0
}

#[test]
fn time_of_flight_matches_simpson() {
    for spec in [PotentialSpec::logarithmic(), PotentialSpec::power(0.5, 3.0)] {
        for s in [0.3, 1.0, 2.5] {
            let a = time_of_flight(&spec, s);
            let b = flight_oracle(&spec, s);
            assert!((a - b).abs() < 1e-9, "{spec:?} s={s}: {a} vs {b}");
        }
    }
}

#[test]
fn power_potential_has_no_critical_flux() {
    assert_eq!(critical_k(&PotentialSpec::power(1.0, 3.0)).unwrap(), CriticalFlux::NotApplicable);
    let p = StationaryProblem { potential: PotentialSpec::power(1.0, 3.0), k: 50.0 };
    assert_eq!(classify(&p).unwrap(), Classification::Classical);
}

#[test]
fn small_flux_is_linear() {
    // y'' = 2 y near 0, so y'(0) = K / cosh(sqrt 2)
    let k = 1e-4;
    let sol = solve_bvp(&StationaryProblem { potential: PotentialSpec::logarithmic(), k }).unwrap();
    let BvpSolution::Classical { s, .. } = sol else { panic!("expected a classical solution") };
    let lin = k / 2f64.sqrt().cosh();
    assert!((s - lin).abs() < 1e-6 * lin, "{s} vs {lin}");
}

#[test]
fn classical_solution_meets_boundary_flux() {
    let spec = PotentialSpec::logarithmic();
    let sol = solve_bvp(&StationaryProblem { potential: spec, k: 1.0 }).unwrap();
    let p = sol.profile();
    assert_eq!(sol.classification(), Classification::Classical);
    assert_eq!(p.exit, Exit::Interior);
    assert!((p.yp_end() - 1.0).abs() < 1e-9);
    assert!(p.y_end() < 1.0);
    assert!((p.x[0] + 1.0).abs() < 1e-12 && (p.x.last().unwrap() - 1.0).abs() < 1e-12);
    assert!(variational_equilibrium_check(&spec, &p.x, &p.y, &p.yp) < 1e-4);
}

#[test]
fn supercritical_flux_is_variational() {
    let spec = PotentialSpec::logarithmic();
    let kp = k_plus_log();
    let sol = solve_bvp(&StationaryProblem { potential: spec, k: 2.0 * kp }).unwrap();
    match &sol {
        BvpSolution::VariationalOnly { defect, profile, .. } => {
            assert!((defect - kp).abs() < 1e-12);
            let hit = profile.x_hit().unwrap();
            assert!((hit - 1.0).abs() < 1e-8, "saturates at {hit}");
        }
        other => panic!("expected a saturated profile, got {:?}", other.classification()),
    }
}

#[test]
fn critical_flux_is_reproducible() {
    let a = critical_k(&PotentialSpec::logarithmic()).unwrap();
    let b = critical_k(&PotentialSpec::logarithmic()).unwrap();
    assert_eq!(a, b);
    if let CriticalFlux::Finite { s_star, k_plus } = a {
        assert!((time_of_flight(&PotentialSpec::logarithmic(), s_star) - 1.0).abs() < 1e-12);
        assert!((k_plus * k_plus - s_star * s_star - 4.0 * 2f64.ln()).abs() < 1e-12);
    }
}

#[test]
fn negative_flux_is_rejected() {
    assert!(solve_bvp(&StationaryProblem { potential: PotentialSpec::logarithmic(), k: -1.0 }).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn classify_is_monotone_in_k(a in 0.0f64..5.0, b in 0.0f64..5.0) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let spec = PotentialSpec::logarithmic();
        let c_lo = classify(&StationaryProblem { potential: spec, k: lo }).unwrap();
        let c_hi = classify(&StationaryProblem { potential: spec, k: hi }).unwrap();
        if c_lo == Classification::VariationalOnly {
            prop_assert_eq!(c_hi, Classification::VariationalOnly);
        }
    }

    #[test]
    fn first_integral_is_conserved(s in 0.01f64..6.0, power in any::<bool>()) {
        let spec = if power { PotentialSpec::power(1.0, 3.0) } else { PotentialSpec::logarithmic() };
        let r = shoot(&spec, s, ShootOptions::default()).unwrap();
        prop_assert!(r.first_integral_defect <= 1e-8 * (1.0 + s * s));
        prop_assert!(r.y.windows(2).all(|w| w[1] >= w[0] - 1e-15));
    }

    #[test]
    fn time_of_flight_decreases(s in 0.05f64..5.0, d in 0.01f64..1.0) {
        let spec = PotentialSpec::logarithmic();
        prop_assert!(time_of_flight(&spec, s + d) < time_of_flight(&spec, s));
    }
}
