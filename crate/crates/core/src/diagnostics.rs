//! Energy, dissipation, variational-inequality, trace and separation reports
//! computed from fields and trajectories.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::discretization::{DiscreteOperators, Field};
use crate::error::{Error, Result};
use crate::solver::{Solver, SolverConfig, State, Trajectory};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct EnergyBreakdown {
    pub bulk_gradient: f64,
    pub boundary_gradient: f64,
    pub bulk_potential: f64,
    pub boundary_potential: f64,
    pub forcing: f64,
    pub total: f64,
}

/// `1/2 |grad u|^2 + 1/2 |grad_G psi|^2 + int F~_N(u) + int_G G(psi) + (h1, u) - (h2, psi)_G`.
pub fn energy(cfg: &SolverConfig, ops: &DiscreteOperators, field: &Field) -> EnergyBreakdown {
    let pot = &cfg.potential;
    let bulk_gradient = ops.dirichlet_energy(&field.bulk);
    let boundary_gradient = ops.boundary_dirichlet_energy(&field.trace);
    let fw: Vec<f64> = field.bulk.iter().map(|&u| pot.big_f_tilde(u)).collect();
    let bulk_potential = ops.integral(&fw);
    let gw: Vec<f64> = field.trace.iter().map(|&p| cfg.g.big_g(p)).collect();
    let boundary_potential = ops.boundary_integral(&gw);
    let forcing = ops.inner(&cfg.h1, &field.bulk) - ops.boundary_inner(&cfg.h2, &field.trace);
    EnergyBreakdown {
        bulk_gradient,
        boundary_gradient,
        bulk_potential,
        boundary_potential,
        forcing,
        total: bulk_gradient + boundary_gradient + bulk_potential + boundary_potential + forcing,
    }
}

/// Per-snapshot summary written to `diagnostics.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsRecord {
    pub t: f64,
    pub mass: f64,
    pub energy: EnergyBreakdown,
    pub newton_iters: usize,
    pub min_u: f64,
    pub max_u: f64,
    pub bulk_margin: f64,
    pub boundary_margin: f64,
    pub fn_l1: f64,
    pub mu_mean: Option<f64>,
}

impl DiagnosticsRecord {
    pub const CSV_HEADER: &'static str = "t,mass,energy,bulk_gradient,boundary_gradient,bulk_potential,boundary_potential,forcing,newton_iters,min_u,max_u,bulk_margin,boundary_margin,fn_l1,mu_mean";

    pub fn csv_row(&self) -> String {
        let e = &self.energy;
        format!(
            "{},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{},{:e},{:e},{:e},{:e},{:e},{}",
            self.t,
            self.mass,
            e.total,
            e.bulk_gradient,
            e.boundary_gradient,
            e.bulk_potential,
            e.boundary_potential,
            e.forcing,
            self.newton_iters,
            self.min_u,
            self.max_u,
            self.bulk_margin,
            self.boundary_margin,
            self.fn_l1,
            self.mu_mean.map_or(String::from("nan"), |v| format!("{v:e}"))
        )
    }
}

pub fn record(cfg: &SolverConfig, ops: &DiscreteOperators, s: &State, newton_iters: usize) -> Result<DiagnosticsRecord> {
    let (min_u, max_u) = s.field.min_max();
    let (bulk_margin, boundary_margin) = margins(&s.field);
    Ok(DiagnosticsRecord {
        t: s.t,
        mass: ops.mean(&s.field.bulk),
        energy: energy(cfg, ops, &s.field),
        newton_iters,
        min_u,
        max_u,
        bulk_margin,
        boundary_margin,
        fn_l1: fn_l1(cfg, ops, &s.field),
        mu_mean: s.mu.as_ref().map(|m| ops.mean(m)),
    })
}

/// `(min over nodes of 1 - |u|, min over boundary dofs of 1 - |psi|)`.
pub fn margins(field: &Field) -> (f64, f64) {
    let m = |v: &[f64]| v.iter().fold(1.0f64, |acc, x| acc.min(1.0 - x.abs()));
    (m(&field.bulk), m(&field.trace))
}

/// `|| f_N(u) ||_{L^1(Omega)}`.
pub fn fn_l1(cfg: &SolverConfig, ops: &DiscreteOperators, field: &Field) -> f64 {
    let v: Vec<f64> = field.bulk.iter().map(|&u| cfg.potential.f_n(u).abs()).collect();
    ops.integral(&v)
}

/// One row of the dissipation ledger, for the interval between two snapshots.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DissipationRow {
    pub t: f64,
    pub energy_change: f64,
    /// `dt (|du/dt|^2_{H^-1} + |dpsi/dt|^2_G)`.
    pub dissipation: f64,
    pub violated: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DissipationReport {
    pub violations: usize,
    /// Largest `E(t_{n+1}) - E(t_n) + (1 - tol_frac) * dissipation` over the ledger.
    pub max_violation: f64,
    /// Largest energy increase `E(t_{n+1}) - E(t_n)`.
    pub max_increase: f64,
    pub rows: Vec<DissipationRow>,
}

pub const DISSIPATION_TOL_FRAC: f64 = 0.2;
const MONOTONE_TOL: f64 = 1e-8;

/// Checks the energy ledger of a sequence of snapshots `(t, field, energy)`.
pub fn dissipation_ledger(ops: &DiscreteOperators, snaps: &[(f64, &Field, f64)], tol_frac: f64) -> Result<DissipationReport> {
    if snaps.len() < 2 {
        return Err(Error::InsufficientData(format!("dissipation check needs >= 2 snapshots, got {}", snaps.len())));
    }
    let mut rows = Vec::with_capacity(snaps.len() - 1);
    let (mut violations, mut max_violation, mut max_increase) = (0, f64::NEG_INFINITY, f64::NEG_INFINITY);
    for w in snaps.windows(2) {
        let (t0, f0, e0) = w[0];
        let (t1, f1, e1) = w[1];
        let dt = t1 - t0;
        let du: Vec<f64> = f1.bulk.iter().zip(&f0.bulk).map(|(a, b)| (a - b) / dt).collect();
        let dp: Vec<f64> = f1.trace.iter().zip(&f0.trace).map(|(a, b)| (a - b) / dt).collect();
        let dissipation = dt * (ops.h_minus1_norm_sq(&du)?.max(0.0) + ops.boundary_inner(&dp, &dp));
        let change = e1 - e0;
        let slack = MONOTONE_TOL * (1.0 + e0.abs());
        let excess = change + (1.0 - tol_frac) * dissipation;
        let violated = excess > slack || change > slack;
        violations += violated as usize;
        max_violation = max_violation.max(excess);
        max_increase = max_increase.max(change);
        rows.push(DissipationRow { t: t1, energy_change: change, dissipation, violated });
    }
    Ok(DissipationReport { violations, max_violation, max_increase, rows })
}

pub fn dissipation_check(cfg: &SolverConfig, ops: &DiscreteOperators, traj: &Trajectory) -> Result<DissipationReport> {
    let snaps: Vec<(f64, &Field, f64)> = traj.states().map(|s| (s.t, &s.field, energy(cfg, ops, &s.field).total)).collect();
    dissipation_ledger(ops, &snaps, DISSIPATION_TOL_FRAC)
}

/// Smallest `L` with `|grad u|^2 - lambda |u|^2 + L |u|^2_{H^-1} >= 1/2 |u|^2_{H^1}` on
/// discrete zero-mean functions, times `1 + margin`.
pub fn coercivity_constant(ops: &DiscreteOperators, lambda: f64, margin: f64) -> f64 {
    let need = ops
        .neumann_eigenvalues()
        .iter()
        .map(|&s| s * (lambda + 0.5 - 0.5 * s))
        .fold(0.0f64, f64::max);
    need * (1.0 + margin)
}

/// Test function of the variational inequality. The trace is always the
/// restriction of the bulk values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum TestFunction {
    /// A fixed field `w(x)`.
    Static(Vec<f64>),
    /// `w(t) = weight * u(t) + (1 - weight) * c` with `c` the conserved mass.
    Blend { weight: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VIReport {
    pub window: (f64, f64),
    pub l_constant: f64,
    /// Time-integrated left minus right side per test function; `<= 0` when the inequality holds.
    pub residuals: Vec<f64>,
    /// Time integral of the sum of absolute values of all terms, per test function.
    pub scales: Vec<f64>,
    pub min_residual: f64,
    pub max_residual: f64,
    /// `max(residual / scale)` over test functions with nonzero scale.
    pub max_normalized: f64,
}

pub const DEFAULT_DELTA_W: f64 = 0.05;

fn vi_integrand(
    cfg: &SolverConfig,
    ops: &DiscreteOperators,
    prev: &State,
    cur: &State,
    w: &[f64],
    l: f64,
) -> Result<(f64, f64)> {
    let dt = cur.t - prev.t;
    let u = &cur.field.bulk;
    let psi = &cur.field.trace;
    let n = u.len();
    let v: Vec<f64> = u.iter().zip(w).map(|(a, b)| a - b).collect();
    let vg = ops.trace_of(&v);
    let wg = ops.trace_of(w);
    let du: Vec<f64> = u.iter().zip(&prev.field.bulk).map(|(a, b)| (a - b) / dt).collect();
    let dp: Vec<f64> = psi.iter().zip(&prev.field.trace).map(|(a, b)| (a - b) / dt).collect();
    let a_du = ops.inverse_laplacian(&du)?;
    let mean_w = ops.mean(w);
    let wbar: Vec<f64> = w.iter().map(|x| x - mean_w).collect();
    let mean_u = ops.mean(u);
    let ubar: Vec<f64> = u.iter().map(|x| x - mean_u).collect();
    let a_w = ops.inverse_laplacian(&wbar)?;
    let a_u = ops.inverse_laplacian(&ubar)?;
    let kw = ops.apply_stiffness(w);
    let kgw = ops.apply_boundary_stiffness(&wg);
    let lam = cfg.potential.lambda();
    let fw: Vec<f64> = w.iter().map(|&x| cfg.potential.f_n(x)).collect();
    let gpsi: Vec<f64> = psi.iter().map(|&p| cfg.g.g(p)).collect();

    let t_adu = ops.inner(&a_du, &v);
    let t_dp = ops.boundary_inner(&dp, &vg);
    let t_grad: f64 = (0..n).map(|k| kw[k] * v[k]).sum();
    let t_lam = -lam * ops.inner(w, &v);
    let t_lw = l * ops.inner(&a_w, &v);
    let t_gam: f64 = kgw.iter().zip(&vg).map(|(a, b)| a * b).sum();
    let t_f = ops.inner(&fw, &v);
    let t_lu = l * ops.inner(&a_u, &v);
    let t_g = ops.boundary_inner(&gpsi, &vg);
    let t_h1 = ops.inner(&cfg.h1, &v);
    let t_h2 = ops.boundary_inner(&cfg.h2, &vg);
    let lhs = t_adu + t_dp + t_grad + t_lam + t_lw + t_gam + t_f;
    let rhs = t_lu - t_g - t_h1 + t_h2;
    let scale = [t_adu, t_dp, t_grad, t_lam, t_lw, t_gam, t_f, t_lu, t_g, t_h1, t_h2].iter().map(|x| x.abs()).sum();
    Ok((lhs - rhs, scale))
}

/// Time-integrated variational inequality over the recorded states with
/// `s <= t_k <= t`, trapezoid rule in time. Each integrand uses the backward
/// difference to the preceding stored state, so the trajectory should be
/// recorded at every step.
pub fn vi_residual(
    cfg: &SolverConfig,
    ops: &DiscreteOperators,
    traj: &Trajectory,
    window: (f64, f64),
    tests: &[TestFunction],
    l_constant: Option<f64>,
    delta_w: f64,
) -> Result<VIReport> {
    let states: Vec<&State> = traj.states().collect();
    let c = ops.mean(&traj.initial.field.bulk);
    let tol_t = 1e-9 * traj.dt;
    let idx: Vec<usize> = (1..states.len())
        .filter(|&k| states[k].t >= window.0 - tol_t && states[k].t <= window.1 + tol_t)
        .collect();
    if idx.len() < 2 {
        return Err(Error::InsufficientData(format!("window {:?} holds {} usable snapshots", window, idx.len())));
    }
    let l = l_constant.unwrap_or_else(|| coercivity_constant(ops, cfg.potential.lambda(), 0.1));

    let mut residuals = Vec::with_capacity(tests.len());
    let mut scales = Vec::with_capacity(tests.len());
    for (ti, test) in tests.iter().enumerate() {
        if let TestFunction::Static(w) = test {
            check_admissible(ops, ti, w, c, delta_w)?;
        }
        let vals: Vec<(f64, f64)> = idx
            .par_iter()
            .map(|&k| {
                let cur = states[k];
                let w: Vec<f64> = match test {
                    TestFunction::Static(w) => w.clone(),
                    TestFunction::Blend { weight } => {
                        if *weight == 1.0 {
                            cur.field.bulk.clone()
                        } else {
                            cur.field.bulk.iter().map(|u| weight * u + (1.0 - weight) * c).collect()
                        }
                    }
                };
                if let TestFunction::Blend { .. } = test {
                    check_admissible(ops, ti, &w, c, delta_w)?;
                }
                vi_integrand(cfg, ops, states[k - 1], cur, &w, l)
            })
            .collect::<Result<_>>()?;
        let (mut r, mut s) = (0.0, 0.0);
        for j in 1..idx.len() {
            let h = states[idx[j]].t - states[idx[j - 1]].t;
            r += 0.5 * h * (vals[j].0 + vals[j - 1].0);
            s += 0.5 * h * (vals[j].1 + vals[j - 1].1);
        }
        residuals.push(r);
        scales.push(s);
    }
    let min_residual = residuals.iter().copied().fold(f64::INFINITY, f64::min);
    let max_residual = residuals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let max_normalized = residuals
        .iter()
        .zip(&scales)
        .map(|(r, s)| if *s > 0.0 { r / s } else { 0.0 })
        .fold(f64::NEG_INFINITY, f64::max);
    Ok(VIReport { window, l_constant: l, residuals, scales, min_residual, max_residual, max_normalized })
}

fn check_admissible(ops: &DiscreteOperators, index: usize, w: &[f64], c: f64, delta_w: f64) -> Result<()> {
    if w.len() != ops.n_nodes() {
        return Err(Error::InadmissibleTestFunction { index, reason: format!("length {} != {}", w.len(), ops.n_nodes()) });
    }
    let m = ops.mean(w);
    if (m - c).abs() > 1e-10 {
        return Err(Error::InadmissibleTestFunction { index, reason: format!("mean {m} differs from mass {c}") });
    }
    let top = w.iter().fold(0.0f64, |a, x| a.max(x.abs()));
    if top > 1.0 - delta_w {
        return Err(Error::InadmissibleTestFunction { index, reason: format!("max |w| = {top} exceeds 1 - {delta_w}") });
    }
    Ok(())
}

/// Admissible test functions: the constant `c`, convex combinations with `u`,
/// and random smooth bumps rescaled into `[-1 + delta_w, 1 - delta_w]` with mean `c`.
pub fn generate_test_functions(ops: &DiscreteOperators, c: f64, count: usize, delta_w: f64, seed: u64) -> Vec<TestFunction> {
    let mut out = vec![TestFunction::Static(vec![c; ops.n_nodes()])];
    for wgt in [0.25, 0.5, 0.75] {
        out.push(TestFunction::Blend { weight: wgt });
    }
    let d = *ops.domain();
    let lx = match d {
        crate::discretization::Domain::Strip { lx, .. } => lx,
        _ => 1.0,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let room = 1.0 - delta_w - c.abs();
    while out.len() < count {
        let (a, b, kx, ky, phase) = (
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
            rng.gen_range(1..=3) as f64,
            rng.gen_range(1..=4) as f64,
            rng.gen_range(0.0..std::f64::consts::TAU),
        );
        let raw = d.sample(|x, y| {
            if d.is_strip() {
                a * (std::f64::consts::TAU * kx * x / lx + phase).cos() * (0.5 * std::f64::consts::PI * ky * (y + 1.0)).cos()
                    + b * (0.5 * std::f64::consts::PI * ky * (y + 1.0)).cos()
            } else {
                a * (0.5 * std::f64::consts::PI * ky * (x + 1.0)).cos() + b * (std::f64::consts::PI * kx * x + phase).sin()
            }
        });
        let m = ops.mean(&raw);
        let centered: Vec<f64> = raw.iter().map(|v| v - m).collect();
        let peak = centered.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        if peak == 0.0 {
            continue;
        }
        // 0.98 keeps the bound strict after rounding
        let amp = 0.98 * room * rng.gen_range(0.3..1.0) / peak;
        out.push(TestFunction::Static(centered.iter().map(|v| c + amp * v).collect()));
    }
    out.truncate(count.max(1));
    out
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceMismatch {
    /// `d_n u` from the one-sided bulk stencil.
    pub internal: Vec<f64>,
    /// `h2 - d_t psi + Delta_G psi - g(psi)` from the boundary equation.
    pub external: Vec<f64>,
    /// `|| internal - external ||_{L^1(Gamma)}`.
    pub gap: f64,
}

pub fn trace_mismatch(cfg: &SolverConfig, ops: &DiscreteOperators, s: &State) -> Result<TraceMismatch> {
    let rate = s.trace_rate()?;
    let psi = &s.field.trace;
    let internal = ops.normal_derivative(&s.field.bulk);
    let lb = ops.laplace_beltrami(psi);
    let external: Vec<f64> = (0..psi.len()).map(|m| cfg.h2[m] - rate[m] + lb[m] - cfg.g.g(psi[m])).collect();
    let diff: Vec<f64> = internal.iter().zip(&external).map(|(a, b)| (a - b).abs()).collect();
    let gap = ops.boundary_integral(&diff);
    Ok(TraceMismatch { internal, external, gap })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SeparationReport {
    pub times: Vec<f64>,
    pub bulk_margin: Vec<f64>,
    pub boundary_margin: Vec<f64>,
    pub fn_l1: Vec<f64>,
}

impl SeparationReport {
    pub fn final_bulk_margin(&self) -> f64 {
        *self.bulk_margin.last().unwrap_or(&1.0)
    }

    pub fn final_boundary_margin(&self) -> f64 {
        *self.boundary_margin.last().unwrap_or(&1.0)
    }

    /// Smallest boundary margin over snapshots with `t >= t0`.
    pub fn min_boundary_margin_after(&self, t0: f64) -> f64 {
        self.times
            .iter()
            .zip(&self.boundary_margin)
            .filter(|(t, _)| **t >= t0)
            .map(|(_, m)| *m)
            .fold(1.0, f64::min)
    }
}

pub fn separation_tracker(cfg: &SolverConfig, ops: &DiscreteOperators, traj: &Trajectory) -> SeparationReport {
    let mut rep = SeparationReport { times: vec![], bulk_margin: vec![], boundary_margin: vec![], fn_l1: vec![] };
    for s in traj.states() {
        let (b, g) = margins(&s.field);
        rep.times.push(s.t);
        rep.bulk_margin.push(b);
        rep.boundary_margin.push(g);
        rep.fn_l1.push(fn_l1(cfg, ops, &s.field));
    }
    rep
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DecayReport {
    pub times: Vec<f64>,
    pub h1_diameter: Vec<f64>,
    pub phi_w_diameter: Vec<f64>,
    pub energy_spread: Vec<f64>,
    /// Exponential rate fitted to the Phi^w diameter over the transient; `None` if undefined.
    pub alpha: Option<f64>,
}

fn diameters(ops: &DiscreteOperators, cfg: &SolverConfig, fields: &[&Field]) -> Result<(f64, f64, f64)> {
    let (mut h1, mut pw) = (0.0f64, 0.0f64);
    for i in 0..fields.len() {
        for j in i + 1..fields.len() {
            let d = fields[i].sub(fields[j]);
            h1 = h1.max(ops.h1_norm_sq(&d.bulk).sqrt());
            pw = pw.max(ops.phi_w_distance(fields[i], fields[j])?);
        }
    }
    let es: Vec<f64> = fields.iter().map(|f| energy(cfg, ops, f).total).collect();
    let spread = es.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b)) - es.iter().fold(f64::INFINITY, |a, &b| a.min(b));
    Ok((h1, pw, if fields.is_empty() { 0.0 } else { spread }))
}

/// Least-squares slope of `ln y` against `t` over the points with `y > floor`.
pub fn fit_log_slope(t: &[f64], y: &[f64], floor: f64) -> Option<(f64, f64)> {
    let pts: Vec<(f64, f64)> = t.iter().zip(y).filter(|(_, v)| **v > floor).map(|(a, v)| (*a, v.ln())).collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mt = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mt).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = pts.iter().map(|p| (p.0 - mt) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    Some((slope, my - slope * mt))
}

/// Runs every member of the ensemble and reports diameters against time.
pub fn decay_experiment(solver: &Solver, ensemble: &[Field], t_final: f64, cadence: f64) -> Result<DecayReport> {
    let ops = solver.operators();
    if let Some(first) = ensemble.first() {
        let c = ops.mean(&first.bulk);
        for (i, f) in ensemble.iter().enumerate() {
            if (ops.mean(&f.bulk) - c).abs() > 1e-10 {
                return Err(Error::InvalidParameter(format!("ensemble member {i} has a different mass")));
            }
        }
    }
    let trajs: Vec<Trajectory> =
        ensemble.par_iter().map(|f| solver.simulate(f.clone(), t_final, cadence)).collect::<Result<_>>()?;
    let cfg = solver.config();
    let mut rep = DecayReport { times: vec![], h1_diameter: vec![], phi_w_diameter: vec![], energy_spread: vec![], alpha: None };
    let nsnap = trajs.first().map_or(0, |t| t.records.len() + 1);
    for k in 0..nsnap {
        let fields: Vec<&Field> = trajs.iter().map(|t| &t.states().nth(k).unwrap().field).collect();
        let (h1, pw, es) = diameters(ops, cfg, &fields)?;
        rep.times.push(trajs[0].states().nth(k).unwrap().t);
        rep.h1_diameter.push(h1);
        rep.phi_w_diameter.push(pw);
        rep.energy_spread.push(es);
    }
    if let Some(&d0) = rep.phi_w_diameter.first() {
        rep.alpha = fit_log_slope(&rep.times, &rep.phi_w_diameter, 1e-12 * d0.max(1e-300)).map(|(s, _)| -s);
    }
    Ok(rep)
}
