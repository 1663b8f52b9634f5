//! Semi-implicit time stepper for the regularized problem in the mixed
//! `(u, mu)` form.
//!
//! One step solves
//!
//! ```text
//! W (u+ - u) / dt + K mu = 0
//! -W mu + K u+ + W (f_N(u+) - lambda- u+ - lambda+ u + h1)
//!     + S^T [ B ((psi+ - psi) / dt + psi+ + g0(psi) - h2) + K_Gamma psi+ ] = 0
//! ```
//!
//! with `psi+ = S u+` (the boundary nodes of `u+`), `lambda+ = max(lambda, 0)`
//! treated explicitly and `lambda- = min(lambda, 0)` implicitly. The second
//! line is the weak form of `mu = -Delta u + f~_N(u) + h1` in which the normal
//! derivative is replaced through the boundary equation, so the trace coupling
//! is exact and the energy decreases by at least
//! `dt |grad mu|^2 + |psi+ - psi|^2_B / dt` per step.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::diagnostics::{self, DiagnosticsRecord};
use crate::discretization::banded::BandMatrix;
use crate::discretization::{DiscreteOperators, Field};
use crate::error::{Error, Result};
use crate::potentials::{BoundaryNonlinearity, RegularizedPotential};

/// Identifier written to run metadata.
pub const SCHEME: &str = "convex-splitting backward Euler, mixed (u, mu), banded Newton";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub potential: RegularizedPotential,
    pub g: BoundaryNonlinearity,
    pub dt: f64,
    pub newton_tol: f64,
    pub newton_max_iter: usize,
    /// Bulk forcing at every node.
    pub h1: Vec<f64>,
    /// Boundary forcing at every boundary degree of freedom.
    pub h2: Vec<f64>,
}

impl SolverConfig {
    /// Zero forcing, `g(z) = z`, default Newton settings.
    pub fn new(ops: &DiscreteOperators, potential: RegularizedPotential, dt: f64) -> Self {
        Self {
            potential,
            g: BoundaryNonlinearity::Linear,
            dt,
            newton_tol: 1e-10,
            newton_max_iter: 50,
            h1: vec![0.0; ops.n_nodes()],
            h2: vec![0.0; ops.n_boundary()],
        }
    }

    pub fn with_g(mut self, g: BoundaryNonlinearity) -> Self {
        self.g = g;
        self
    }

    pub fn with_h1(mut self, c: f64) -> Self {
        self.h1.iter_mut().for_each(|v| *v = c);
        self
    }

    pub fn with_h2(mut self, c: f64) -> Self {
        self.h2.iter_mut().for_each(|v| *v = c);
        self
    }

    pub fn validate(&self, ops: &DiscreteOperators) -> Result<()> {
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return Err(Error::InvalidParameter(format!("dt must be positive, got {}", self.dt)));
        }
        if !(self.newton_tol > 0.0) || self.newton_max_iter == 0 {
            return Err(Error::InvalidParameter("newton_tol > 0 and newton_max_iter >= 1 required".into()));
        }
        if self.h1.len() != ops.n_nodes() {
            return Err(Error::Shape { expected: ops.n_nodes(), got: self.h1.len() });
        }
        if self.h2.len() != ops.n_boundary() {
            return Err(Error::Shape { expected: ops.n_boundary(), got: self.h2.len() });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct State {
    pub t: f64,
    pub field: Field,
    /// Chemical potential of the last step.
    pub mu: Option<Vec<f64>>,
    /// Trace before the last step, for backward differences in time.
    pub prev_trace: Option<Vec<f64>>,
    pub last_dt: Option<f64>,
}

impl State {
    pub fn initial(field: Field) -> Self {
        Self { t: 0.0, field, mu: None, prev_trace: None, last_dt: None }
    }

    /// `(psi - psi_prev) / dt` from the last step.
    pub fn trace_rate(&self) -> Result<Vec<f64>> {
        match (&self.prev_trace, self.last_dt) {
            (Some(prev), Some(dt)) => Ok(self.field.trace.iter().zip(prev).map(|(a, b)| (a - b) / dt).collect()),
            _ => Err(Error::StaleState),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepReport {
    pub newton_iters: usize,
    pub residual: f64,
    pub energy_before: f64,
    pub energy_after: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Record {
    pub state: State,
    /// Newton iterations summed over the steps since the previous record.
    pub newton_iters: usize,
    pub diagnostics: DiagnosticsRecord,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Trajectory {
    pub dt: f64,
    pub initial: State,
    pub records: Vec<Record>,
}

impl Trajectory {
    /// Initial state followed by every recorded state.
    pub fn states(&self) -> impl Iterator<Item = &State> {
        std::iter::once(&self.initial).chain(self.records.iter().map(|r| &r.state))
    }

    pub fn last(&self) -> &State {
        self.records.last().map(|r| &r.state).unwrap_or(&self.initial)
    }
}

/// `<mu>` evaluated from the stored chemical potential and from the boundary bookkeeping.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MeanPotential {
    pub direct: f64,
    pub formula: f64,
    /// `|direct - formula| / max(1, |direct|)`.
    pub residual: f64,
}

#[derive(Debug, Clone)]
pub struct Solver {
    ops: Arc<DiscreteOperators>,
    cfg: SolverConfig,
    stiff: Vec<Vec<(usize, f64)>>,
    bstiff: Vec<Vec<(usize, f64)>>,
    /// Boundary degree of freedom carried by each node, if any.
    bdof: Vec<Option<usize>>,
    bandwidth: usize,
}

impl Solver {
    pub fn new(ops: Arc<DiscreteOperators>, cfg: SolverConfig) -> Result<Self> {
        cfg.validate(&ops)?;
        let n = ops.n_nodes();
        let stiff: Vec<_> = (0..n).map(|k| ops.stiffness_row(k)).collect();
        let bstiff: Vec<_> = (0..ops.n_boundary()).map(|m| ops.boundary_stiffness_row(m)).collect();
        let mut bdof = vec![None; n];
        for (m, &k) in ops.boundary_nodes().iter().enumerate() {
            bdof[k] = Some(m);
        }
        let bn = ops.boundary_nodes();
        let mut reach = 0usize;
        for (k, row) in stiff.iter().enumerate() {
            reach = row.iter().fold(reach, |r, &(c, _)| r.max(c.abs_diff(k)));
        }
        for (m, row) in bstiff.iter().enumerate() {
            reach = row.iter().fold(reach, |r, &(c, _)| r.max(bn[c].abs_diff(bn[m])));
        }
        if cfg.potential.lambda_exceeds_convexity() {
            log_warning(&format!(
                "lambda = {} >= f_N'(0) = {}: the shifted potential is non-convex",
                cfg.potential.lambda(),
                cfg.potential.f_n_prime(0.0)
            ));
        }
        Ok(Self { ops, cfg, stiff, bstiff, bdof, bandwidth: 2 * reach + 1 })
    }

    pub fn config(&self) -> &SolverConfig {
        &self.cfg
    }

    pub fn operators(&self) -> &Arc<DiscreteOperators> {
        &self.ops
    }

    fn check_field(&self, f: &Field) -> Result<()> {
        if f.bulk.len() != self.ops.n_nodes() {
            return Err(Error::Shape { expected: self.ops.n_nodes(), got: f.bulk.len() });
        }
        if f.trace.len() != self.ops.n_boundary() {
            return Err(Error::Shape { expected: self.ops.n_boundary(), got: f.trace.len() });
        }
        Ok(())
    }

    /// Residuals of both equations at `(u, mu)`.
    fn residual(&self, u: &[f64], mu: &[f64], old: &Field, r1: &mut [f64], r2: &mut [f64]) {
        let ops = &self.ops;
        let (w, b) = (ops.weights(), ops.boundary_weights());
        let pot = &self.cfg.potential;
        let dt = self.cfg.dt;
        let lam = pot.lambda();
        let (lp, lm) = (lam.max(0.0), lam.min(0.0));
        let ku = ops.apply_stiffness(u);
        let kmu = ops.apply_stiffness(mu);
        for k in 0..u.len() {
            r1[k] = w[k] * (u[k] - old.bulk[k]) / dt + kmu[k];
            r2[k] = -w[k] * mu[k]
                + ku[k]
                + w[k] * (pot.f_n(u[k]) - lm * u[k] - lp * old.bulk[k] + self.cfg.h1[k]);
        }
        let bn = ops.boundary_nodes();
        for (m, &k) in bn.iter().enumerate() {
            let p = u[k];
            let po = old.trace[m];
            let lb: f64 = self.bstiff[m].iter().map(|&(c, a)| a * u[bn[c]]).sum();
            r2[k] += b[m] * ((p - po) / dt + p + self.cfg.g.g0(po) - self.cfg.h2[m]) + lb;
        }
    }

    fn scaled_norms(&self, r1: &[f64], r2: &[f64]) -> (f64, f64) {
        let w = self.ops.weights();
        let b = self.ops.boundary_weights();
        let dt = self.cfg.dt;
        let mut inf = 0.0f64;
        let mut sq = 0.0;
        for k in 0..r1.len() {
            let d2 = w[k] + self.bdof[k].map_or(0.0, |m| b[m]);
            let a = (r1[k] * dt / w[k]).abs();
            let c = (r2[k] / d2).abs();
            inf = inf.max(a).max(c);
            sq += a * a + c * c;
        }
        ((sq / (2 * r1.len()) as f64).sqrt(), inf)
    }

    fn jacobian(&self, u: &[f64]) -> BandMatrix {
        let ops = &self.ops;
        let n = u.len();
        let (w, b) = (ops.weights(), ops.boundary_weights());
        let dt = self.cfg.dt;
        let lm = self.cfg.potential.lambda().min(0.0);
        let bw = self.bandwidth;
        let mut jac = BandMatrix::zeros(2 * n, bw, bw);
        let bn = ops.boundary_nodes();
        for k in 0..n {
            let (ru, rm) = (2 * k, 2 * k + 1);
            jac.add(ru, 2 * k, w[k] / dt);
            for &(c, a) in &self.stiff[k] {
                jac.add(ru, 2 * c + 1, a);
                jac.add(rm, 2 * c, a);
            }
            jac.add(rm, 2 * k, w[k] * (self.cfg.potential.f_n_prime(u[k]) - lm));
            jac.add(rm, 2 * k + 1, -w[k]);
            if let Some(m) = self.bdof[k] {
                jac.add(rm, 2 * k, b[m] * (1.0 / dt + 1.0));
                for &(c, a) in &self.bstiff[m] {
                    jac.add(rm, 2 * bn[c], a);
                }
            }
        }
        jac
    }

    /// Advances one time step.
    pub fn step(&self, s: &State) -> Result<(State, StepReport)> {
        self.check_field(&s.field)?;
        let ops = &self.ops;
        let n = ops.n_nodes();
        let old = &s.field;
        let energy_before = diagnostics::energy(&self.cfg, ops, old).total;

        let mut u = old.bulk.clone();
        let mut mu = vec![0.0; n];
        let (mut r1, mut r2) = (vec![0.0; n], vec![0.0; n]);
        // mu from the second equation at u+ = u, so an equilibrium needs no iteration
        self.residual(&u, &mu, old, &mut r1, &mut r2);
        for k in 0..n {
            mu[k] = r2[k] / ops.weights()[k];
        }
        self.residual(&u, &mu, old, &mut r1, &mut r2);
        let (mut merit, mut res) = self.scaled_norms(&r1, &r2);
        let mut iters = 0;
        let (mut tu, mut tmu) = (vec![0.0; n], vec![0.0; n]);
        while res > self.cfg.newton_tol {
            if iters >= self.cfg.newton_max_iter || !res.is_finite() {
                return Err(Error::NewtonDiverged { residual: res, iterations: iters });
            }
            iters += 1;
            let lu = self.jacobian(&u).factor().map_err(|e| Error::LinearSolveFailed(e.to_string()))?;
            let mut rhs = vec![0.0; 2 * n];
            for k in 0..n {
                rhs[2 * k] = -r1[k];
                rhs[2 * k + 1] = -r2[k];
            }
            lu.solve_in_place(&mut rhs);
            // halve the step until the residual decreases; after 8 halvings the
            // most damped trial is kept so the iteration can still make progress
            let mut alpha = 1.0;
            for trial in 0..=8 {
                for k in 0..n {
                    tu[k] = u[k] + alpha * rhs[2 * k];
                    tmu[k] = mu[k] + alpha * rhs[2 * k + 1];
                }
                self.residual(&tu, &tmu, old, &mut r1, &mut r2);
                let (m2, inf) = self.scaled_norms(&r1, &r2);
                if m2 < merit || inf <= self.cfg.newton_tol || trial == 8 {
                    merit = m2;
                    res = inf;
                    break;
                }
                alpha *= 0.5;
            }
            std::mem::swap(&mut u, &mut tu);
            std::mem::swap(&mut mu, &mut tmu);
            let step_size = rhs.iter().fold(0.0f64, |m, v| m.max(v.abs())) * alpha;
            let scale = u.iter().chain(&mu).fold(1.0f64, |m, v| m.max(v.abs()));
            if step_size <= 1e-15 * scale && res <= 1e3 * self.cfg.newton_tol {
                // round-off floor of the residual evaluation
                break;
            }
        }

        let shift = ops.mean(&old.bulk) - ops.mean(&u);
        if shift != 0.0 {
            u.iter_mut().for_each(|v| *v += shift);
        }
        let field = Field::from_bulk(ops.domain(), u);
        let energy_after = diagnostics::energy(&self.cfg, ops, &field).total;
        let next = State {
            t: s.t + self.cfg.dt,
            field,
            mu: Some(mu),
            prev_trace: Some(old.trace.clone()),
            last_dt: Some(self.cfg.dt),
        };
        Ok((next, StepReport { newton_iters: iters, residual: res, energy_before, energy_after }))
    }

    /// Runs to `t_final`, recording every `cadence` (the initial state is kept
    /// separately and not counted as a record).
    pub fn simulate(&self, initial: Field, t_final: f64, cadence: f64) -> Result<Trajectory> {
        self.check_field(&initial)?;
        let dt = self.cfg.dt;
        if !(t_final > 0.0) {
            return Err(Error::InvalidParameter(format!("final time must be positive, got {t_final}")));
        }
        if !(cadence > 0.0) || cadence > t_final * (1.0 + 1e-12) {
            return Err(Error::InvalidParameter(format!("cadence must lie in (0, T], got {cadence}")));
        }
        let steps = (t_final / dt).round().max(1.0) as usize;
        let every = ((cadence / dt).round() as usize).max(1);
        let mut state = State::initial(initial);
        let start = state.clone();
        let mut records = Vec::with_capacity(steps / every + 1);
        let mut iters = 0;
        for n in 1..=steps {
            let t = state.t;
            let (next, rep) = self.step(&state).map_err(|e| Error::AtTime { t, source: Box::new(e) })?;
            // exact multiples of dt avoid drift in the recorded times
            state = State { t: n as f64 * dt, ..next };
            iters += rep.newton_iters;
            if n % every == 0 || n == steps {
                let diag = diagnostics::record(&self.cfg, &self.ops, &state, iters)?;
                records.push(Record { state: state.clone(), newton_iters: iters, diagnostics: diag });
                iters = 0;
            }
        }
        Ok(Trajectory { dt, initial: start, records })
    }

    /// `<mu>` from the stored chemical potential and from
    /// `<d_t psi>_G + <psi + g0(psi_prev)>_G - <h2>_G + <f~_N(u)> + <h1>`.
    pub fn chemical_potential_mean(&self, s: &State) -> Result<MeanPotential> {
        let mu = s.mu.as_ref().ok_or(Error::StaleState)?;
        let prev = s.prev_trace.as_ref().ok_or(Error::StaleState)?;
        let rate = s.trace_rate()?;
        let ops = &self.ops;
        let direct = ops.mean(mu);
        let bterm: Vec<f64> = (0..ops.n_boundary())
            .map(|m| rate[m] + s.field.trace[m] + self.cfg.g.g0(prev[m]) - self.cfg.h2[m])
            .collect();
        let ft: Vec<f64> = s.field.bulk.iter().zip(&self.cfg.h1).map(|(&u, h)| self.cfg.potential.f_tilde(u) + h).collect();
        let formula = ops.boundary_mean_gamma(&bterm) + ops.mean(&ft);
        Ok(MeanPotential { direct, formula, residual: (direct - formula).abs() / direct.abs().max(1.0) })
    }
}

fn log_warning(msg: &str) {
    eprintln!("warning: {msg}");
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::discretization::Domain;
    use crate::potentials::PotentialSpec;

    fn setup(domain: Domain, spec: PotentialSpec, n: u32, dt: f64) -> Solver {
        let ops = Arc::new(DiscreteOperators::new(domain).unwrap());
        let cfg = SolverConfig::new(&ops, RegularizedPotential::new(spec, n).unwrap(), dt);
        Solver::new(ops, cfg).unwrap()
    }

    #[test]
    fn zero_is_a_fixed_point() {
        let s = setup(Domain::Interval { n: 41 }, PotentialSpec::logarithmic(), 8, 1e-2);
        let d = *s.operators().domain();
        let (next, rep) = s.step(&State::initial(Field::constant(&d, 0.0))).unwrap();
        assert_eq!(rep.newton_iters, 0);
        assert!(next.field.bulk.iter().all(|v| *v == 0.0));
        let m = s.chemical_potential_mean(&next).unwrap();
        assert_eq!(m.direct, 0.0);
    }

    #[test]
    fn constant_equilibrium_mean_potential() {
        let d = Domain::Interval { n: 31 };
        let ops = Arc::new(DiscreteOperators::new(d).unwrap());
        let c = 0.4;
        let pot = RegularizedPotential::new(PotentialSpec::logarithmic().with_lambda(1.0), 8).unwrap();
        let cfg = SolverConfig::new(&ops, pot, 1e-2).with_h2(c);
        let s = Solver::new(ops, cfg).unwrap();
        let (next, rep) = s.step(&State::initial(Field::constant(&d, c))).unwrap();
        assert_eq!(rep.newton_iters, 0);
        assert!(next.field.bulk.iter().all(|v| *v == c));
        let m = s.chemical_potential_mean(&next).unwrap();
        assert!((m.direct - pot.f_tilde(c)).abs() < 1e-12);
        assert!(m.residual < 1e-12);
    }

    #[test]
    fn stale_state_is_reported() {
        let s = setup(Domain::Interval { n: 11 }, PotentialSpec::logarithmic(), 4, 1e-2);
        let d = *s.operators().domain();
        assert_eq!(s.chemical_potential_mean(&State::initial(Field::constant(&d, 0.0))), Err(Error::StaleState));
    }

    #[test]
    fn record_count_matches_cadence() {
        let s = setup(Domain::Interval { n: 21 }, PotentialSpec::logarithmic(), 8, 1e-2);
        let d = *s.operators().domain();
        let tr = s.simulate(Field::from_bulk(&d, d.sample(|x, _| 0.1 * x)), 0.03, 0.01).unwrap();
        assert_eq!(tr.records.len(), 3);
        assert!((tr.records[2].state.t - 0.03).abs() < 1e-15);
    }

    #[test]
    fn bad_config_rejected() {
        let ops = Arc::new(DiscreteOperators::new(Domain::Interval { n: 11 }).unwrap());
        let pot = RegularizedPotential::new(PotentialSpec::logarithmic(), 4).unwrap();
        let mut cfg = SolverConfig::new(&ops, pot, -1.0);
        assert!(Solver::new(ops.clone(), cfg.clone()).is_err());
        cfg.dt = 1e-3;
        cfg.h2 = vec![0.0; 3];
        assert!(matches!(Solver::new(ops, cfg), Err(Error::Shape { .. })));
    }

    #[test]
    fn mismatched_initial_trace_is_resolved() {
        let s = setup(Domain::Interval { n: 41 }, PotentialSpec::logarithmic(), 8, 1e-3);
        let d = *s.operators().domain();
        let f = Field::new(&d, vec![0.0; 41], vec![0.5, -0.5]).unwrap();
        let (next, _) = s.step(&State::initial(f)).unwrap();
        assert_eq!(next.field.trace_gap(&d), 0.0);
        assert!(next.field.trace[0] > 0.0 && next.field.trace[1] < 0.0);
    }
}
