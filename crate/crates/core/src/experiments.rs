//! Experiment drivers shared by the command line tool and the test suites.
//!
//! Each driver is a pure computation returning a serialisable report. Sweep
//! rows run in parallel on the current rayon pool; results come back in row
//! order, so reports are deterministic.

use std::path::PathBuf;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{ConfigError, ConfigResult, ExperimentConfig};
use crate::diagnostics::{self, DecayReport, DissipationReport, SeparationReport};
use crate::discretization::{read_field_csv, DiscreteOperators, Domain, Field};
use crate::error::{Error, Result};
use crate::potentials::{check_sign_condition, BoundaryNonlinearity, PotentialKind, PotentialSpec, RegularizedPotential};
use crate::solver::{Solver, SolverConfig, State, Trajectory};
use crate::stationary::{self, Classification, CriticalFlux, StationaryProblem};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum Forcing {
    Constant(f64),
    /// One value per node (bulk) or per boundary degree of freedom.
    Values(Vec<f64>),
}

/// How a constant boundary forcing is laid out over the boundary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum H2Layout {
    Uniform,
    /// `h2 = value * n_y`: negative on the `y = -1` side (left end of the
    /// interval), positive on the `y = 1` side.
    Normal,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum InitialKind {
    /// `amplitude * cos(mode * pi * (y + 1))`, modulated by `1 + cos(2 pi x / Lx) / 2` on the strip.
    Cosine { amplitude: f64, mode: f64 },
    /// Seeded random smooth field built from a few cosine modes.
    Random { amplitude: f64 },
    Constant,
    File(PathBuf),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InitialData {
    pub kind: InitialKind,
    /// Mean of the bulk field; except for `File`, the generated profile is shifted to it.
    pub mass: f64,
    /// Added to the boundary trace, so `psi_0` may differ from `u_0` on the boundary.
    pub trace_offset: f64,
}

/// Everything needed to build solvers and initial data for a run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Setup {
    pub domain: Domain,
    pub potential: PotentialSpec,
    pub n_reg: u32,
    pub g: BoundaryNonlinearity,
    pub dt: f64,
    pub t_final: f64,
    pub cadence: f64,
    pub newton_tol: f64,
    pub newton_max_iter: usize,
    pub h1: Forcing,
    pub h2: Forcing,
    pub h2_layout: H2Layout,
    pub initial: InitialData,
    pub seed: u64,
}

fn invalid(key: &str, reason: impl ToString) -> ConfigError {
    ConfigError::Invalid { key: key.into(), reason: reason.to_string() }
}

fn forcing(cfg: &ExperimentConfig, key: &str) -> ConfigResult<Forcing> {
    let v = cfg.get(key);
    if let Ok(c) = v.parse::<f64>() {
        return Ok(Forcing::Constant(c));
    }
    let text = std::fs::read_to_string(v).map_err(|e| ConfigError::Io { path: v.into(), reason: e.to_string() })?;
    let vals = text
        .split_whitespace()
        .map(|s| s.parse::<f64>().map_err(|_| invalid(key, format!("{v}: {s:?} is not a number"))))
        .collect::<ConfigResult<Vec<f64>>>()?;
    Ok(Forcing::Values(vals))
}

pub fn potential_from(kind: &str, cfg: &ExperimentConfig) -> ConfigResult<PotentialSpec> {
    let k = match kind {
        "logarithmic" | "log" => {
            PotentialKind::Logarithmic { kappa0: cfg.f64("potential.kappa0")?, kappa1: cfg.f64("potential.kappa1")? }
        }
        "power" => PotentialKind::PowerSingular { kappa: cfg.f64("potential.kappa")?, p: cfg.f64("potential.p")? },
        "smooth" => PotentialKind::SmoothDoubleWell { a: cfg.f64("potential.a")? },
        other => return Err(invalid("potential.kind", format!("expected logarithmic, power or smooth, got {other:?}"))),
    };
    let spec = PotentialSpec::new(k, cfg.f64("potential.lambda")?);
    spec.validate().map_err(|e| invalid("potential.kind", e))?;
    Ok(spec)
}

impl Setup {
    pub fn from_config(cfg: &ExperimentConfig) -> ConfigResult<Self> {
        let domain = match cfg.get("domain.kind") {
            "interval" => Domain::Interval { n: cfg.usize("domain.n")? },
            "strip" => Domain::Strip { lx: cfg.f64("domain.Lx")?, nx: cfg.usize("domain.nx")?, ny: cfg.usize("domain.ny")? },
            other => return Err(invalid("domain.kind", format!("expected interval or strip, got {other:?}"))),
        };
        domain.validate().map_err(|e| invalid("domain.kind", e))?;
        let potential = potential_from(cfg.get("potential.kind"), cfg)?;
        let gp = cfg.f64("potential.g_param")?;
        let g = match cfg.get("potential.g") {
            "linear" => BoundaryNonlinearity::Linear,
            "tanh" => BoundaryNonlinearity::Tanh { amp: gp },
            "shift" => BoundaryNonlinearity::Shift { b: gp },
            other => return Err(invalid("potential.g", format!("expected linear, tanh or shift, got {other:?}"))),
        };
        let n_reg = cfg.usize("regularization.N")?;
        if n_reg < 2 || n_reg > u32::MAX as usize {
            return Err(invalid("regularization.N", "must be an integer >= 2"));
        }
        let h2_layout = match cfg.get("forcing.h2_layout") {
            "uniform" => H2Layout::Uniform,
            "normal" => H2Layout::Normal,
            other => return Err(invalid("forcing.h2_layout", format!("expected uniform or normal, got {other:?}"))),
        };
        let amplitude = cfg.f64("initial.amplitude")?;
        let kind = match cfg.get("initial.kind") {
            "cosine" => InitialKind::Cosine { amplitude, mode: cfg.f64("initial.mode")? },
            "random" => InitialKind::Random { amplitude },
            "constant" => InitialKind::Constant,
            "file" => InitialKind::File(PathBuf::from(cfg.get("initial.file"))),
            other => return Err(invalid("initial.kind", format!("expected cosine, random, constant or file, got {other:?}"))),
        };
        let setup = Self {
            domain,
            potential,
            n_reg: n_reg as u32,
            g,
            dt: cfg.f64("solver.dt")?,
            t_final: cfg.f64("solver.T")?,
            cadence: cfg.f64("solver.cadence")?,
            newton_tol: cfg.f64("solver.newton_tol")?,
            newton_max_iter: cfg.usize("solver.newton_max_iter")?,
            h1: forcing(cfg, "forcing.h1")?,
            h2: forcing(cfg, "forcing.h2")?,
            h2_layout,
            initial: InitialData { kind, mass: cfg.f64("initial.mass")?, trace_offset: cfg.f64("initial.trace_offset")? },
            seed: cfg.u64("seed")?,
        };
        if !(setup.dt > 0.0) {
            return Err(invalid("solver.dt", "must be positive"));
        }
        if !(setup.t_final > 0.0) {
            return Err(invalid("solver.T", "must be positive"));
        }
        if !(setup.cadence > 0.0 && setup.cadence <= setup.t_final * (1.0 + 1e-12)) {
            return Err(invalid("solver.cadence", "must lie in (0, T]"));
        }
        if !(setup.initial.mass.abs() < 1.0) {
            return Err(invalid("initial.mass", "must lie in (-1, 1)"));
        }
        Ok(setup)
    }

    /// Interval run with the given potential and otherwise default settings.
    pub fn interval(n: usize, potential: PotentialSpec, n_reg: u32, dt: f64, t_final: f64) -> Self {
        Self {
            domain: Domain::Interval { n },
            potential,
            n_reg,
            g: BoundaryNonlinearity::Linear,
            dt,
            t_final,
            cadence: t_final,
            newton_tol: 1e-10,
            newton_max_iter: 50,
            h1: Forcing::Constant(0.0),
            h2: Forcing::Constant(0.0),
            h2_layout: H2Layout::Uniform,
            initial: InitialData { kind: InitialKind::Constant, mass: 0.0, trace_offset: 0.0 },
            seed: 0,
        }
    }

    pub fn operators(&self) -> Result<Arc<DiscreteOperators>> {
        Ok(Arc::new(DiscreteOperators::new(self.domain)?))
    }

    /// Boundary forcing vector for a constant `value` under the configured layout.
    pub fn boundary_layout(&self, ops: &DiscreteOperators, value: f64) -> Vec<f64> {
        let nb = ops.n_boundary();
        (0..nb)
            .map(|m| match self.h2_layout {
                H2Layout::Uniform => value,
                H2Layout::Normal if m < nb / 2 => -value,
                H2Layout::Normal => value,
            })
            .collect()
    }

    pub fn solver_config(&self, ops: &DiscreteOperators, n_reg: u32) -> Result<SolverConfig> {
        let pot = RegularizedPotential::new(self.potential, n_reg)?;
        let mut cfg = SolverConfig::new(ops, pot, self.dt).with_g(self.g);
        cfg.newton_tol = self.newton_tol;
        cfg.newton_max_iter = self.newton_max_iter;
        cfg.h1 = match &self.h1 {
            Forcing::Constant(c) => vec![*c; ops.n_nodes()],
            Forcing::Values(v) => v.clone(),
        };
        cfg.h2 = match &self.h2 {
            Forcing::Constant(c) => self.boundary_layout(ops, *c),
            Forcing::Values(v) => v.clone(),
        };
        cfg.validate(ops)?;
        Ok(cfg)
    }

    pub fn solver(&self, ops: &Arc<DiscreteOperators>, n_reg: u32) -> Result<Solver> {
        Solver::new(ops.clone(), self.solver_config(ops, n_reg)?)
    }

    pub fn initial_field(&self, ops: &DiscreteOperators) -> Result<Field> {
        let dom = self.domain;
        let lx = match dom {
            Domain::Strip { lx, .. } => lx,
            Domain::Interval { .. } => 1.0,
        };
        let pi = std::f64::consts::PI;
        // on the interval the single spatial coordinate is returned as `x`
        let across = |x: f64, y: f64| if dom.is_strip() { y } else { x };
        let mut bulk = match &self.initial.kind {
            InitialKind::Cosine { amplitude, mode } => dom.sample(|x, y| {
                let m = if dom.is_strip() { 1.0 + 0.5 * (2.0 * pi * x / lx).cos() } else { 1.0 };
                amplitude * (mode * pi * (across(x, y) + 1.0)).cos() * m
            }),
            InitialKind::Random { amplitude } => random_profile(dom, *amplitude, self.seed),
            InitialKind::Constant => vec![0.0; ops.n_nodes()],
            InitialKind::File(p) => {
                let f = std::fs::File::open(p).map_err(|e| Error::InvalidParameter(format!("{}: {e}", p.display())))?;
                let mut field = read_field_csv(&dom, std::io::BufReader::new(f))?;
                field.trace.iter_mut().for_each(|v| *v += self.initial.trace_offset);
                return Ok(field);
            }
        };
        let shift = self.initial.mass - ops.mean(&bulk);
        bulk.iter_mut().for_each(|v| *v += shift);
        let mut field = Field::from_bulk(&dom, bulk);
        field.trace.iter_mut().for_each(|v| *v += self.initial.trace_offset);
        Ok(field)
    }
}

/// Sum of cosine modes with seeded random coefficients, scaled to `max |u| = amplitude`.
fn random_profile(dom: Domain, amplitude: f64, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let lx = match dom {
        Domain::Strip { lx, .. } => lx,
        Domain::Interval { .. } => 1.0,
    };
    let pi = std::f64::consts::PI;
    let modes: Vec<(f64, f64, f64, f64)> = (0..6)
        .map(|_| (rng.gen_range(-1.0..1.0), rng.gen_range(0.5..3.0), rng.gen_range(0..3) as f64, rng.gen_range(0.0..2.0 * pi)))
        .collect();
    let v = dom.sample(|x, y| {
        let t = if dom.is_strip() { y } else { x };
        modes
            .iter()
            .map(|&(a, k, kx, ph)| {
                let xs = if dom.is_strip() { (2.0 * pi * kx * x / lx + ph).cos() } else { 1.0 };
                a * (k * pi * (t + 1.0) + ph).cos() * xs
            })
            .sum()
    });
    let top = v.iter().fold(0.0f64, |a, b| a.max(b.abs()));
    if top == 0.0 {
        return v;
    }
    v.into_iter().map(|x| amplitude * x / top).collect()
}

/// Mean-zero smooth direction used for perturbations: the second cosine mode across the domain.
pub fn perturbation_direction(ops: &DiscreteOperators) -> Field {
    let dom = *ops.domain();
    let pi = std::f64::consts::PI;
    let mut v = dom.sample(|x, y| (pi * ((if dom.is_strip() { y } else { x }) + 1.0)).cos());
    let m = ops.mean(&v);
    v.iter_mut().for_each(|a| *a -= m);
    Field::from_bulk(&dom, v)
}

/// States at the requested times (rounded to multiples of `dt`), advancing from `initial`.
pub fn states_at(solver: &Solver, initial: Field, times: &[f64]) -> Result<Vec<State>> {
    let dt = solver.config().dt;
    let mut out = Vec::with_capacity(times.len());
    let mut state = State::initial(initial);
    let mut n = 0usize;
    for &t in times {
        let target = (t / dt).round() as usize;
        if target < n {
            return Err(Error::InvalidParameter("times must be nondecreasing".into()));
        }
        while n < target {
            let t_now = state.t;
            let (next, _) = solver.step(&state).map_err(|e| Error::AtTime { t: t_now, source: Box::new(e) })?;
            n += 1;
            state = State { t: n as f64 * dt, ..next };
        }
        out.push(state.clone());
    }
    Ok(out)
}

#[derive(Debug, Clone, Serialize)]
pub struct SimulateReport {
    pub trajectory: Trajectory,
    pub dissipation: Option<DissipationReport>,
    pub mass_drift: f64,
}

pub fn run_simulate(setup: &Setup) -> Result<SimulateReport> {
    let ops = setup.operators()?;
    let solver = setup.solver(&ops, setup.n_reg)?;
    let u0 = setup.initial_field(&ops)?;
    let traj = solver.simulate(u0, setup.t_final, setup.cadence)?;
    let c0 = ops.mean(&traj.initial.field.bulk);
    let mass_drift = traj.records.iter().map(|r| (r.diagnostics.mass - c0).abs()).fold(0.0, f64::max);
    let dissipation = if traj.records.is_empty() { None } else { Some(diagnostics::dissipation_check(solver.config(), &ops, &traj)?) };
    Ok(SimulateReport { trajectory: traj, dissipation, mass_drift })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CauchyRow {
    pub t: f64,
    pub n: u32,
    /// `||u_N - u_2N||_{Phi^w}`; `None` if either run failed.
    pub distance: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergeNReport {
    pub rows: Vec<CauchyRow>,
    /// `max |u_N|` over the requested times, per value of `N` (including the final `2N`).
    pub max_abs: Vec<(u32, Option<f64>)>,
}

impl ConvergeNReport {
    pub fn distances_at(&self, t: f64) -> Vec<Option<f64>> {
        self.rows.iter().filter(|r| (r.t - t).abs() < 1e-12).map(|r| r.distance).collect()
    }
}

/// Cauchy table of the regularised solutions in `N`: one row per time and `N`.
pub fn run_converge_n(setup: &Setup, n_list: &[u32], times: &[f64]) -> Result<ConvergeNReport> {
    let ops = setup.operators()?;
    let u0 = setup.initial_field(&ops)?;
    let mut all_n: Vec<u32> = n_list.to_vec();
    for &n in n_list {
        if !all_n.contains(&(2 * n)) {
            all_n.push(2 * n);
        }
    }
    let runs: Vec<std::result::Result<Vec<State>, String>> = all_n
        .par_iter()
        .map(|&n| setup.solver(&ops, n).and_then(|s| states_at(&s, u0.clone(), times)).map_err(|e| e.to_string()))
        .collect();
    let find = |n: u32| &runs[all_n.iter().position(|&m| m == n).unwrap()];
    let mut rows = Vec::with_capacity(times.len() * n_list.len());
    for (ti, &t) in times.iter().enumerate() {
        for &n in n_list {
            let row = match (find(n), find(2 * n)) {
                (Ok(a), Ok(b)) => match ops.phi_w_distance(&a[ti].field, &b[ti].field) {
                    Ok(d) => CauchyRow { t, n, distance: Some(d), error: None },
                    Err(e) => CauchyRow { t, n, distance: None, error: Some(e.to_string()) },
                },
                (Err(e), _) | (_, Err(e)) => CauchyRow { t, n, distance: None, error: Some(e.clone()) },
            };
            rows.push(row);
        }
    }
    let max_abs = all_n
        .iter()
        .zip(&runs)
        .map(|(&n, r)| {
            (n, r.as_ref().ok().map(|st| st.iter().flat_map(|s| s.field.bulk.iter()).fold(0.0f64, |a, b| a.max(b.abs()))))
        })
        .collect();
    Ok(ConvergeNReport { rows, max_abs })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LipschitzRun {
    pub eps: f64,
    /// `Phi^w` distance to the unperturbed run at each time of the report grid.
    pub distances: Vec<f64>,
    /// `d(T) / d(0)`.
    pub ratio: f64,
    /// Least-squares fit `d(t) / d(0) ~ C exp(K t)`.
    pub c: f64,
    pub k: f64,
    /// Smallest `C` such that `d(t) <= C exp(K t) d(0)` on the grid, with the fitted `K`.
    pub envelope_c: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LipschitzReport {
    pub times: Vec<f64>,
    pub runs: Vec<LipschitzRun>,
    /// `d(T; eps_i) / d(T; eps_{i+1})` for consecutive perturbation sizes.
    pub ratio_table: Vec<(f64, f64, f64)>,
}

/// Distances between the configured run and runs from mean-neutral perturbations of size `eps`.
pub fn run_lipschitz(setup: &Setup, eps_list: &[f64]) -> Result<LipschitzReport> {
    let ops = setup.operators()?;
    let solver = setup.solver(&ops, setup.n_reg)?;
    let u0 = setup.initial_field(&ops)?;
    let dir = perturbation_direction(&ops);
    let steps = (setup.t_final / setup.cadence).round().max(1.0) as usize;
    let times: Vec<f64> = (0..=steps).map(|i| i as f64 * setup.t_final / steps as f64).collect();
    let mut starts = vec![u0.clone()];
    starts.extend(eps_list.iter().map(|&e| u0.axpy(e, &dir)));
    let runs: Vec<Vec<State>> = starts.par_iter().map(|f| states_at(&solver, f.clone(), &times)).collect::<Result<_>>()?;
    let base = &runs[0];
    let mut out = Vec::with_capacity(eps_list.len());
    for (i, &eps) in eps_list.iter().enumerate() {
        let d: Vec<f64> = base
            .iter()
            .zip(&runs[i + 1])
            .map(|(a, b)| ops.phi_w_distance(&a.field, &b.field))
            .collect::<Result<_>>()?;
        let d0 = d[0];
        let rel: Vec<f64> = d.iter().map(|x| if d0 > 0.0 { x / d0 } else { 0.0 }).collect();
        let (k, c) = match diagnostics::fit_log_slope(&times, &rel, 0.0) {
            Some((slope, icpt)) => (slope, icpt.exp()),
            None => (0.0, 0.0),
        };
        let envelope_c = times.iter().zip(&rel).map(|(t, r)| r / (k * t).exp()).fold(0.0, f64::max);
        out.push(LipschitzRun { eps, ratio: *rel.last().unwrap(), distances: d, c, k, envelope_c });
    }
    let ratio_table = out
        .windows(2)
        .map(|w| {
            let (a, b) = (w[0].distances.last().unwrap(), w[1].distances.last().unwrap());
            (w[0].eps, w[1].eps, if *b > 0.0 { a / b } else { f64::NAN })
        })
        .collect();
    Ok(LipschitzReport { times, runs: out, ratio_table })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SeparationRow {
    pub n: u32,
    pub report: SeparationReport,
    pub final_gap: f64,
}

/// Separation margins and the final trace-mismatch gap for every `N`.
pub fn run_separation(setup: &Setup, n_list: &[u32]) -> Result<Vec<SeparationRow>> {
    let ops = setup.operators()?;
    let u0 = setup.initial_field(&ops)?;
    n_list
        .par_iter()
        .map(|&n| {
            let solver = setup.solver(&ops, n)?;
            let traj = solver.simulate(u0.clone(), setup.t_final, setup.cadence)?;
            let report = diagnostics::separation_tracker(solver.config(), &ops, &traj);
            let final_gap = diagnostics::trace_mismatch(solver.config(), &ops, traj.last())?.gap;
            Ok(SeparationRow { n, report, final_gap })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SignBranch {
    pub h2: f64,
    pub sign_condition: bool,
    pub rows: Vec<SeparationRow>,
    /// Boundary slope `h2 - g(1)` forced on a saturated boundary, and its
    /// stationary classification (only meaningful for the `Normal` layout).
    pub k_analogue: f64,
    pub classification: Option<Classification>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SignConditionReport {
    pub eps: f64,
    pub critical: CriticalFlux,
    pub satisfied: SignBranch,
    pub violated: SignBranch,
}

/// Paired runs with identical settings except the boundary forcing.
pub fn run_sign_condition(setup: &Setup, n_list: &[u32], h2_ok: f64, h2_bad: f64, eps: f64) -> Result<SignConditionReport> {
    let ops = setup.operators()?;
    let critical = stationary::critical_k(&setup.potential)?;
    let branch = |h2: f64| -> Result<SignBranch> {
        let s = Setup { h2: Forcing::Constant(h2), ..setup.clone() };
        let vec = s.boundary_layout(&ops, h2);
        let k_analogue = h2.abs() - setup.g.g(1.0);
        let classification = if k_analogue >= 0.0 {
            Some(stationary::classify(&StationaryProblem { potential: setup.potential, k: k_analogue })?)
        } else {
            Some(Classification::Classical)
        };
        Ok(SignBranch { h2, sign_condition: check_sign_condition(&setup.g, &vec, eps), rows: run_separation(&s, n_list)?, k_analogue, classification })
    };
    Ok(SignConditionReport { eps, critical, satisfied: branch(h2_ok)?, violated: branch(h2_bad)? })
}

pub fn decay_ensemble(setup: &Setup, ops: &DiscreteOperators, size: usize) -> Result<Vec<Field>> {
    let base = setup.initial_field(ops)?;
    let amp = match setup.initial.kind {
        InitialKind::Cosine { amplitude, .. } | InitialKind::Random { amplitude } => amplitude.abs().max(0.05),
        _ => 0.1,
    };
    (0..size)
        .map(|i| {
            if i == 0 {
                return Ok(base.clone());
            }
            let p = random_profile(setup.domain, amp, setup.seed.wrapping_add(i as u64));
            let m = ops.mean(&p);
            let mut f = base.clone();
            for (a, b) in f.bulk.iter_mut().zip(&p) {
                *a += b - m;
            }
            let bn = ops.boundary_nodes();
            for (t, &k) in f.trace.iter_mut().zip(bn) {
                *t += p[k] - m;
            }
            Ok(f)
        })
        .collect()
}

pub fn run_decay(setup: &Setup, size: usize) -> Result<DecayReport> {
    let ops = setup.operators()?;
    let solver = setup.solver(&ops, setup.n_reg)?;
    let ensemble = decay_ensemble(setup, &ops, size)?;
    diagnostics::decay_experiment(&solver, &ensemble, setup.t_final, setup.cadence)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub s: f64,
    pub time_of_flight: f64,
    pub x_hit: Option<f64>,
    pub y_end: f64,
    pub yp_end: f64,
    pub first_integral_defect: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StationaryReport {
    pub potential: PotentialSpec,
    pub k: f64,
    pub critical: CriticalFlux,
    pub solution: stationary::BvpSolution,
    pub equilibrium_residual: f64,
    pub sweep: Vec<SweepRow>,
}

/// `s_min:s_max:steps` into evenly spaced slopes.
pub fn parse_sweep(text: &str) -> std::result::Result<Vec<f64>, String> {
    let parts: Vec<&str> = text.split(':').collect();
    if parts.len() != 3 {
        return Err(format!("expected s_min:s_max:steps, got {text:?}"));
    }
    let a: f64 = parts[0].trim().parse().map_err(|_| format!("bad s_min {:?}", parts[0]))?;
    let b: f64 = parts[1].trim().parse().map_err(|_| format!("bad s_max {:?}", parts[1]))?;
    let n: usize = parts[2].trim().parse().map_err(|_| format!("bad step count {:?}", parts[2]))?;
    if n == 0 || !(a >= 0.0) || !(b >= a) {
        return Err(format!("need 0 <= s_min <= s_max and steps >= 1, got {text:?}"));
    }
    if n == 1 {
        return Ok(vec![a]);
    }
    Ok((0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64).collect())
}

pub fn run_stationary(potential: PotentialSpec, k: f64, sweep: &[f64]) -> Result<StationaryReport> {
    let problem = StationaryProblem { potential, k };
    let critical = stationary::critical_k(&potential)?;
    let solution = stationary::solve_bvp(&problem)?;
    let p = solution.profile();
    let equilibrium_residual = stationary::variational_equilibrium_check(&potential, &p.x, &p.y, &p.yp);
    let sweep = sweep
        .par_iter()
        .map(|&s| {
            let r = stationary::shoot(&potential, s, stationary::ShootOptions::default())?;
            Ok(SweepRow {
                s,
                time_of_flight: stationary::time_of_flight(&potential, s),
                x_hit: r.x_hit(),
                y_end: r.y_end(),
                yp_end: r.yp_end(),
                first_integral_defect: r.first_integral_defect,
            })
        })
        .collect::<Result<_>>()?;
    Ok(StationaryReport { potential, k, critical, solution, equilibrium_residual, sweep })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn setup_from_default_config() {
        let s = Setup::from_config(&ExperimentConfig::default()).unwrap();
        assert_eq!(s.domain, Domain::Interval { n: 65 });
        assert_eq!(s.n_reg, 16);
        let ops = s.operators().unwrap();
        let f = s.initial_field(&ops).unwrap();
        assert!(ops.mean(&f.bulk).abs() < 1e-14);
    }

    #[test]
    fn bad_values_are_config_errors() {
        let c = ExperimentConfig::parse("domain.kind = disk").unwrap();
        assert!(matches!(Setup::from_config(&c), Err(ConfigError::Invalid { .. })));
        let c = ExperimentConfig::parse("regularization.N = 1").unwrap();
        assert!(Setup::from_config(&c).is_err());
        let c = ExperimentConfig::parse("potential.kind = power\npotential.p = 0.5").unwrap();
        assert!(Setup::from_config(&c).is_err());
    }

    #[test]
    fn normal_layout_signs() {
        let mut s = Setup::interval(9, PotentialSpec::logarithmic(), 8, 1e-3, 1e-2);
        s.h2_layout = H2Layout::Normal;
        let ops = s.operators().unwrap();
        assert_eq!(s.boundary_layout(&ops, 2.0), vec![-2.0, 2.0]);
    }

    #[test]
    fn sweep_parsing() {
        assert_eq!(parse_sweep("1:2:3").unwrap(), vec![1.0, 1.5, 2.0]);
        assert!(parse_sweep("1:2").is_err());
        assert!(parse_sweep("2:1:4").is_err());
    }

    #[test]
    fn random_profile_is_seeded() {
        let d = Domain::Interval { n: 33 };
        assert_eq!(random_profile(d, 0.3, 7), random_profile(d, 0.3, 7));
        assert_ne!(random_profile(d, 0.3, 7), random_profile(d, 0.3, 8));
    }

    #[test]
    fn converge_n_table_shape() {
        let mut s = Setup::interval(17, PotentialSpec::logarithmic(), 8, 1e-2, 0.1);
        s.initial.kind = InitialKind::Cosine { amplitude: 0.2, mode: 0.5 };
        let rep = run_converge_n(&s, &[4, 8, 16, 32, 64], &[0.02, 0.05, 0.1]).unwrap();
        assert_eq!(rep.rows.len(), 15);
        // |u| stays far below 1 - 1/4, so every regularisation gives the same trajectory
        assert!(rep.rows.iter().all(|r| r.distance.unwrap() <= 1e-10));
    }
}
