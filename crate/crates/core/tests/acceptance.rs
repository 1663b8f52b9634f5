//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each and
//! exits non-zero if any criterion fails.

use std::f64::consts::PI;
use std::time::Instant;

use rayon::prelude::*;

use chdyn::diagnostics::{self, generate_test_functions, TestFunction, DEFAULT_DELTA_W};
use chdyn::discretization::{DiscreteOperators, Domain, Field};
use chdyn::experiments::{self, Forcing, H2Layout, InitialData, InitialKind, Setup};
use chdyn::potentials::{BoundaryNonlinearity, PotentialSpec};
use chdyn::stationary::{self, Classification, CriticalFlux, ShootOptions, StationaryProblem};

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn err(e: chdyn::Error) -> String {
    format!("error: {e}")
}

fn setup(domain: Domain, potential: PotentialSpec, n_reg: u32, dt: f64, t_final: f64) -> Setup {
    Setup { domain, ..Setup::interval(0, potential, n_reg, dt, t_final) }
}

fn strip() -> Domain {
    Domain::Strip { lx: 2.0, nx: 16, ny: 17 }
}

fn interval(n: usize) -> Domain {
    Domain::Interval { n }
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn mass_conservation() -> Outcome {
    let mut strip_run = setup(strip(), PotentialSpec::logarithmic().with_lambda(1.0), 16, 1e-3, 1.0);
    strip_run.g = BoundaryNonlinearity::Tanh { amp: 0.5 };
    strip_run.h1 = Forcing::Constant(0.3);
    strip_run.h2 = Forcing::Constant(0.5);
    strip_run.initial = InitialData { kind: InitialKind::Random { amplitude: 0.6 }, mass: 0.2, trace_offset: 0.1 };
    strip_run.seed = 7;
    let mut interval_run = setup(interval(65), PotentialSpec::power(1.0, 3.0).with_lambda(10.0), 32, 1e-3, 1.0);
    interval_run.h2 = Forcing::Constant(-0.4);
    interval_run.initial = InitialData { kind: InitialKind::Cosine { amplitude: 0.1, mode: 0.5 }, mass: -0.3, trace_offset: 0.0 };
    let drifts: Vec<(usize, f64)> = [strip_run, interval_run]
        .par_iter_mut()
        .map(|s| {
            s.cadence = s.dt;
            let ops = s.operators()?;
            let solver = s.solver(&ops, s.n_reg)?;
            let u0 = s.initial_field(&ops)?;
            let m0 = ops.mean(&u0.bulk);
            let traj = solver.simulate(u0, s.t_final, s.cadence)?;
            let drift = traj.records.iter().map(|r| (r.diagnostics.mass - m0).abs()).fold(0.0, f64::max);
            Ok((traj.records.len(), drift))
        })
        .collect::<chdyn::Result<_>>()
        .map_err(err)?;
    let worst = drifts.iter().map(|d| d.1).fold(0.0, f64::max);
    let steps = drifts.iter().map(|d| d.0).min().unwrap_or(0);
    check(steps >= 1000 && worst <= 1e-10, format!("{steps} steps per run, max |<u^n> - <u^0>| = {worst:.2e} (tol 1e-10)"))
}

fn energy_dissipation() -> Outcome {
    let mut matrix = Vec::new();
    for dom in [interval(65), strip()] {
        for pot in [PotentialSpec::logarithmic(), PotentialSpec::power(1.0, 3.0)] {
            for n in [8u32, 32] {
                for dt in [1e-2, 1e-3] {
                    let t_final = if dt > 5e-3 { 1.0 } else { 0.3 };
                    let mut s = setup(dom, pot.with_lambda(1.0), n, dt, t_final);
                    s.cadence = dt;
                    s.h2 = Forcing::Constant(0.3);
                    s.initial = InitialData { kind: InitialKind::Random { amplitude: 0.9 }, mass: 0.0, trace_offset: 0.0 };
                    s.seed = 3;
                    matrix.push(s);
                }
            }
        }
    }
    let results: Vec<(usize, usize)> = matrix
        .par_iter()
        .map(|s| {
            let ops = s.operators()?;
            let solver = s.solver(&ops, s.n_reg)?;
            let u0 = s.initial_field(&ops)?;
            let mut prev = diagnostics::energy(solver.config(), &ops, &u0).total;
            let traj = solver.simulate(u0, s.t_final, s.cadence)?;
            let mut violations = 0;
            for r in &traj.records {
                let e = r.diagnostics.energy.total;
                if e > prev + 1e-8 * (1.0 + prev.abs()) {
                    violations += 1;
                }
                prev = e;
            }
            Ok((violations, traj.records.len()))
        })
        .collect::<chdyn::Result<_>>()
        .map_err(err)?;
    let violations: usize = results.iter().map(|r| r.0).sum();
    let steps: usize = results.iter().map(|r| r.1).sum();
    check(violations == 0, format!("{} runs, {steps} steps, {violations} violations", results.len()))
}

fn regularization_consistency() -> Outcome {
    let mut a = setup(interval(65), PotentialSpec::logarithmic(), 4, 1e-3, 0.5);
    a.initial.kind = InitialKind::Cosine { amplitude: 0.5, mode: 0.5 };
    let mut b = setup(strip(), PotentialSpec::logarithmic().with_lambda(1.0), 4, 1e-3, 0.5);
    b.initial.kind = InitialKind::Random { amplitude: 0.6 };
    b.seed = 11;
    let mut lines = Vec::new();
    let mut ok = true;
    for mut s in [a, b] {
        s.cadence = 0.05;
        s.newton_tol = 1e-12;
        let ops = s.operators().map_err(err)?;
        let u0 = s.initial_field(&ops).map_err(err)?;
        let trajs: Vec<_> = [4u32, 8, 16]
            .par_iter()
            .map(|&n| s.solver(&ops, n)?.simulate(u0.clone(), s.t_final, s.cadence))
            .collect::<chdyn::Result<_>>()
            .map_err(err)?;
        let top = trajs[0].states().flat_map(|st| st.field.bulk.iter()).fold(0.0f64, |m, v| m.max(v.abs()));
        let confined = top <= 1.0 - 1.0 / 4.0;
        let mut worst = 0.0f64;
        for pair in trajs.windows(2) {
            for (x, y) in pair[0].states().zip(pair[1].states()) {
                worst = worst.max(max_abs_diff(&x.field.bulk, &y.field.bulk)).max(max_abs_diff(&x.field.trace, &y.field.trace));
            }
        }
        ok &= confined && worst <= 1e-9;
        lines.push(format!("{}: max|u| = {top:.3}, max N->2N difference {worst:.1e}", if s.domain.is_strip() { "strip" } else { "interval" }));
    }
    check(ok, lines.join("; "))
}

fn n_cauchy() -> Outcome {
    let mut s = setup(interval(65), PotentialSpec::logarithmic().with_lambda(10.0), 4, 1e-3, 1.0);
    s.initial.kind = InitialKind::Cosine { amplitude: 0.05, mode: 0.5 };
    let rep = experiments::run_converge_n(&s, &[4, 8, 16, 32, 64], &[1.0]).map_err(err)?;
    let d: Vec<f64> = rep.distances_at(1.0).into_iter().map(|v| v.unwrap_or(f64::NAN)).collect();
    let monotone = d.windows(2).all(|w| w[1] < w[0]);
    let reduction = d[0] / d[d.len() - 1];
    let table: Vec<String> = d.iter().map(|v| format!("{v:.3e}")).collect();
    check(monotone && reduction >= 10.0, format!("d(N,2N) at t=1 for N=4..64: [{}], reduction {reduction:.1}x", table.join(", ")))
}

fn lipschitz() -> Outcome {
    let mut s = setup(interval(65), PotentialSpec::logarithmic().with_lambda(4.0), 32, 1e-3, 1.0);
    s.cadence = 0.1;
    s.initial.kind = InitialKind::Cosine { amplitude: 0.3, mode: 0.5 };
    let rep = experiments::run_lipschitz(&s, &[1e-2, 1e-3, 1e-4]).map_err(err)?;
    let ratios: Vec<f64> = rep.runs.iter().map(|r| r.ratio).collect();
    let (rmin, rmax) = ratios.iter().fold((f64::INFINITY, 0.0f64), |(a, b), &r| (a.min(r), b.max(r)));
    let ratio_ok = rmax / rmin - 1.0 <= 0.1;
    let k_star = rep.runs.iter().map(|r| r.k).sum::<f64>() / rep.runs.len() as f64;
    // one envelope constant valid for every perturbation size
    let c_star = rep
        .runs
        .iter()
        .flat_map(|r| rep.times.iter().zip(&r.distances).map(move |(t, d)| d / r.distances[0] / (k_star * t).exp()))
        .fold(0.0f64, f64::max);
    let fits_ok = rep
        .runs
        .iter()
        .all(|r| (r.k - k_star).abs() <= 0.2 * k_star.abs() && (r.envelope_c - c_star).abs() <= 0.2 * c_star);
    check(
        ratio_ok && fits_ok,
        format!("d(T)/d(0) in [{rmin:.6}, {rmax:.6}], envelope C = {c_star:.4}, K = {k_star:.4}"),
    )
}

fn read_golden() -> Result<(f64, f64), String> {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/tests/golden/critical_flux_log.txt");
    let text = std::fs::read_to_string(path).map_err(|e| format!("{path}: {e}"))?;
    let field = |key: &str| -> Result<f64, String> {
        text.lines()
            .filter(|l| !l.starts_with('#'))
            .find_map(|l| l.split_once('=').filter(|(k, _)| k.trim() == key).map(|(_, v)| v.trim().to_string()))
            .ok_or(format!("golden file lacks {key}"))?
            .parse()
            .map_err(|e| format!("{key}: {e}"))
    };
    Ok((field("s_star")?, field("k_plus")?))
}

fn stationary_critical_flux() -> Outcome {
    let spec = PotentialSpec::logarithmic();
    let mut worst = 0.0f64;
    for s in [1.0, 2.0, 4.0] {
        let a = stationary::shoot(&spec, s, ShootOptions::default()).map_err(err)?.x_hit().ok_or("shooting did not saturate")?;
        let b = stationary::time_of_flight(&spec, s);
        let c = stationary::bvp_hit_position(&spec, s, 400).map_err(err)?;
        worst = worst.max((a - b).abs()).max((b - c).abs()).max((a - c).abs());
    }
    let (s_gold, k_gold) = read_golden()?;
    let mut k_err = 0.0f64;
    let mut k_plus = f64::NAN;
    for _ in 0..2 {
        match stationary::critical_k(&spec).map_err(err)? {
            CriticalFlux::Finite { s_star, k_plus: k } => {
                k_err = k_err.max((k - k_gold).abs()).max((s_star - s_gold).abs());
                k_plus = k;
            }
            CriticalFlux::NotApplicable => return Err("no critical flux for the logarithmic potential".into()),
        }
    }
    let low = stationary::classify(&StationaryProblem { potential: spec, k: 0.5 * k_plus }).map_err(err)?;
    let high = stationary::classify(&StationaryProblem { potential: spec, k: 2.0 * k_plus }).map_err(err)?;
    check(
        worst <= 1e-6 && k_err <= 1e-10 && low == Classification::Classical && high == Classification::VariationalOnly,
        format!("pairwise hit-position spread {worst:.1e}; K+ = {k_plus:.13} (golden deviation {k_err:.1e}); K+/2 -> {low:?}, 2K+ -> {high:?}"),
    )
}

fn separation_dichotomy() -> Outcome {
    let base = |pot: PotentialSpec| {
        let mut s = setup(interval(9), pot, 32, 1e-3, 4.0);
        s.cadence = 0.1;
        s.h2 = Forcing::Constant(3.0);
        s.h2_layout = H2Layout::Normal;
        s
    };
    let power = experiments::run_separation(&base(PotentialSpec::power(1.0, 3.0)), &[32, 64]).map_err(err)?;
    let delta: Vec<f64> = power.iter().map(|r| r.report.min_boundary_margin_after(1.0)).collect();
    let power_ok = delta.iter().all(|d| *d > 0.0) && (delta[0] - delta[1]).abs() < 0.1 * delta[1];

    let log = experiments::run_separation(&base(PotentialSpec::logarithmic()), &[32, 64]).map_err(err)?;
    let margins: Vec<f64> = log.iter().map(|r| r.report.final_boundary_margin()).collect();
    let margin_ok = log.iter().zip(&margins).all(|(r, m)| *m <= 4.0 / r.n as f64);
    let gaps: Vec<f64> = log.iter().map(|r| r.final_gap).collect();
    let gap_ok = (gaps[0] - gaps[1]).abs() < 0.1 * gaps[1];
    check(
        power_ok && margin_ok && gap_ok,
        format!(
            "p=3 margin delta {:.4}/{:.4}; log final margin {:.4}/{:.4} (bounds {:.4}/{:.4}), gap {:.4}/{:.4} at N=32/64",
            delta[0], delta[1], margins[0], margins[1], 4.0 / 32.0, 4.0 / 64.0, gaps[0], gaps[1]
        ),
    )
}

/// `int ||u - w||^2_{H^-1} dt` over the same snapshots and trapezoid weights as the residual.
fn h_minus1_defect(ops: &DiscreteOperators, states: &[&chdyn::solver::State], window: (f64, f64), dt: f64, c: f64, test: &TestFunction) -> f64 {
    let tol = 1e-9 * dt;
    let picked: Vec<&chdyn::solver::State> =
        states.iter().skip(1).filter(|s| s.t >= window.0 - tol && s.t <= window.1 + tol).copied().collect();
    let q: Vec<f64> = picked
        .iter()
        .map(|s| {
            let u = &s.field.bulk;
            let w: Vec<f64> = match test {
                TestFunction::Static(w) => w.clone(),
                TestFunction::Blend { weight } => u.iter().map(|x| weight * x + (1.0 - weight) * c).collect(),
            };
            let mut v: Vec<f64> = u.iter().zip(&w).map(|(a, b)| a - b).collect();
            let m = ops.mean(&v);
            v.iter_mut().for_each(|x| *x -= m);
            let a = ops.inverse_laplacian(&v).unwrap();
            a.iter().zip(&v).zip(ops.weights()).map(|((p, q), wt)| p * q * wt).sum()
        })
        .collect();
    (1..picked.len()).map(|j| 0.5 * (picked[j].t - picked[j - 1].t) * (q[j] + q[j - 1])).sum()
}

fn variational_inequality() -> Outcome {
    let mut s = setup(interval(33), PotentialSpec::logarithmic().with_lambda(2.0), 16, 1e-3, 0.3);
    s.cadence = s.dt;
    s.initial = InitialData { kind: InitialKind::Cosine { amplitude: 0.6, mode: 0.5 }, mass: 0.1, trace_offset: 0.0 };
    let ops = s.operators().map_err(err)?;
    let solver = s.solver(&ops, s.n_reg).map_err(err)?;
    let traj = solver.simulate(s.initial_field(&ops).map_err(err)?, s.t_final, s.cadence).map_err(err)?;
    let c = ops.mean(&traj.initial.field.bulk);
    let mut tests = generate_test_functions(&ops, c, 24, DEFAULT_DELTA_W, 17);
    tests.push(TestFunction::Blend { weight: 1.0 });
    let exact = tests.len() - 1;
    let states: Vec<&chdyn::solver::State> = traj.states().collect();
    let windows = [(0.01, 0.1), (0.1, 0.2), (0.2, 0.3)];
    let (mut worst_norm, mut worst_shift, mut zero_ok, mut sign_ok) = (f64::NEG_INFINITY, 0.0f64, true, true);
    let mut l_used = 0.0;
    for &win in &windows {
        let r1 = diagnostics::vi_residual(solver.config(), &ops, &traj, win, &tests, None, DEFAULT_DELTA_W).map_err(err)?;
        let l2 = 1.5 * r1.l_constant;
        l_used = r1.l_constant;
        let r2 = diagnostics::vi_residual(solver.config(), &ops, &traj, win, &tests, Some(l2), DEFAULT_DELTA_W).map_err(err)?;
        worst_norm = worst_norm.max(r1.max_normalized).max(r2.max_normalized);
        zero_ok &= r1.residuals[exact] == 0.0 && r2.residuals[exact] == 0.0;
        for (i, t) in tests.iter().enumerate() {
            let q = h_minus1_defect(&ops, &states, win, traj.dt, c, t);
            // the L terms contribute -L q, so res + L q does not depend on L
            let shift = ((r1.residuals[i] + r1.l_constant * q) - (r2.residuals[i] + l2 * q)).abs();
            worst_shift = worst_shift.max(shift / r1.scales[i].max(1.0));
            let tol = 1e-6;
            sign_ok &= (r1.residuals[i] <= tol * r1.scales[i]) == (r2.residuals[i] <= tol * r2.scales[i]);
        }
    }
    check(
        worst_norm <= 1e-6 && zero_ok && worst_shift <= 1e-12 && sign_ok,
        format!(
            "{} tests x {} windows, max residual/scale {worst_norm:.2e}, zero at w=u: {zero_ok}, L = {l_used:.3} -> 1.5L shift {worst_shift:.1e}",
            tests.len(),
            windows.len()
        ),
    )
}

fn discrete_operators() -> Outcome {
    let eig_err = |n: usize| -> chdyn::Result<f64> {
        let ops = DiscreteOperators::new(interval(n))?;
        let r = ops.domain().sample(|x, _| (PI * (x + 1.0) / 2.0).cos());
        let w = ops.inverse_laplacian(&r)?;
        Ok(w.iter().zip(&r).map(|(a, b)| (a - 4.0 / (PI * PI) * b).abs()).fold(0.0, f64::max))
    };
    let phi_err = |n: usize| -> chdyn::Result<f64> {
        let ops = DiscreteOperators::new(interval(n))?;
        let d = *ops.domain();
        let a = Field::from_bulk(&d, d.sample(|x, _| 0.1 + (PI * (x + 1.0) / 2.0).cos()));
        let b = Field::constant(&d, 0.1);
        let dist = ops.phi_w_distance(&a, &b)?;
        Ok((dist * dist - (2.0 + 4.0 / (PI * PI))).abs())
    };
    let (e1, e2) = (eig_err(51).map_err(err)?, eig_err(101).map_err(err)?);
    let (p1, p2) = (phi_err(51).map_err(err)?, phi_err(101).map_err(err)?);
    let (re, rp) = (e1 / e2, p1 / p2);
    check(
        (re - 4.0).abs() <= 0.8 && (rp - 4.0).abs() <= 0.8 && e2 < 1e-3 && p2 < 1e-3,
        format!("4/pi^2 eigen error {e1:.2e} -> {e2:.2e} (ratio {re:.3}); Phi^w^2 error {p1:.2e} -> {p2:.2e} (ratio {rp:.3})"),
    )
}

fn first_integral() -> Outcome {
    let specs = [PotentialSpec::logarithmic(), PotentialSpec::power(1.0, 3.0), PotentialSpec::power(0.5, 2.0), PotentialSpec::smooth(1.0)];
    let slopes = [0.05, 0.3, 0.709137060032738, 1.0, 2.0, 4.0];
    let mut worst = 0.0f64;
    let mut count = 0;
    for spec in &specs {
        for &s in &slopes {
            let r = stationary::shoot(spec, s, ShootOptions::default()).map_err(err)?;
            worst = worst.max(r.first_integral_defect / (1.0 + s * s));
            count += 1;
        }
    }
    check(worst <= 1e-8, format!("{count} profiles, max defect/(1+s^2) = {worst:.2e} (tol 1e-8)"))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("mass conservation", mass_conservation),
        ("energy dissipation", energy_dissipation),
        ("regularization consistency", regularization_consistency),
        ("N-Cauchy property", n_cauchy),
        ("Lipschitz estimate", lipschitz),
        ("stationary critical flux", stationary_critical_flux),
        ("separation dichotomy", separation_dichotomy),
        ("variational inequality", variational_inequality),
        ("discrete operators", discrete_operators),
        ("first integral", first_integral),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        if !filter.is_empty() && !filter.iter().any(|p| name.contains(p.as_str())) {
            continue;
        }
        let start = Instant::now();
        let outcome = f();
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(d) => println!("PASS {:>2} {name}: {d} [{secs:.1}s]", i + 1),
            Err(d) => {
                failed += 1;
                println!("FAIL {:>2} {name}: {d} [{secs:.1}s]", i + 1)
            }
        }
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
