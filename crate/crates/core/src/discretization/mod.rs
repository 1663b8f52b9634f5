//! Node-centred grids on the interval `[-1, 1]` and the periodic strip
//! `[0, Lx) x [-1, 1]`, fields with an independently stored boundary trace, and
//! the discrete operators acting on them.
//!
//! All bulk operators come from one quadratic form: the trapezoid mass matrix `W`
//! and the Neumann stiffness matrix `K` (the Dirichlet form of piecewise linear
//! differences). The Neumann Laplacian is `-W^{-1} K`, which is the classical
//! ghost-node stencil with second-order boundary closure. The strip is treated as
//! a tensor product of a periodic direction `x` and the interval direction `y`;
//! the interval is the degenerate case with a single `x` column.

pub mod banded;

use std::io::{BufRead, Write};
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use banded::solve_tridiagonal;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Domain {
    /// `[-1, 1]` with `n` nodes including both endpoints. The boundary is the
    /// two endpoints; boundary integrals are two-point sums.
    Interval { n: usize },
    /// `[0, lx) x [-1, 1]`, periodic in `x` with `nx` nodes, `ny` nodes in `y`
    /// including the boundary lines `y = -1` and `y = 1`.
    Strip { lx: f64, nx: usize, ny: usize },
}

impl Domain {
    pub fn validate(&self) -> Result<()> {
        match *self {
            Domain::Interval { n } if n < 4 => Err(Error::InvalidParameter(format!("interval needs n >= 4 nodes, got {n}"))),
            Domain::Strip { lx, nx, ny } if !(lx > 0.0) || nx < 3 || ny < 4 => Err(Error::InvalidParameter(format!(
                "strip needs lx > 0, nx >= 3, ny >= 4; got lx = {lx}, nx = {nx}, ny = {ny}"
            ))),
            _ => Ok(()),
        }
    }

    /// Nodes per column (interval direction).
    pub fn ny(&self) -> usize {
        match *self {
            Domain::Interval { n } => n,
            Domain::Strip { ny, .. } => ny,
        }
    }

    /// Nodes per row (periodic direction); 1 for the interval.
    pub fn nx(&self) -> usize {
        match *self {
            Domain::Interval { .. } => 1,
            Domain::Strip { nx, .. } => nx,
        }
    }

    pub fn n_nodes(&self) -> usize {
        self.nx() * self.ny()
    }

    pub fn n_boundary(&self) -> usize {
        2 * self.nx()
    }

    pub fn is_strip(&self) -> bool {
        matches!(self, Domain::Strip { .. })
    }

    /// Spacing in the interval direction.
    pub fn hy(&self) -> f64 {
        2.0 / (self.ny() - 1) as f64
    }

    /// Spacing in the periodic direction; 1 (unit transversal measure) on the interval.
    pub fn hx(&self) -> f64 {
        match *self {
            Domain::Interval { .. } => 1.0,
            Domain::Strip { lx, nx, .. } => lx / nx as f64,
        }
    }

    /// `|Omega|`.
    pub fn measure(&self) -> f64 {
        match *self {
            Domain::Interval { .. } => 2.0,
            Domain::Strip { lx, .. } => 2.0 * lx,
        }
    }

    #[inline]
    pub fn node(&self, i: usize, j: usize) -> usize {
        j * self.nx() + i
    }

    /// Node index of every boundary degree of freedom: the `y = -1` line first,
    /// then `y = 1`. On the interval: `[x = -1, x = 1]`.
    pub fn boundary_nodes(&self) -> Vec<usize> {
        let (nx, ny) = (self.nx(), self.ny());
        (0..nx).map(|i| self.node(i, 0)).chain((0..nx).map(|i| self.node(i, ny - 1))).collect()
    }

    /// `(x, y)` of every node; on the interval the coordinate is `x` and `y = 0`.
    pub fn coords(&self) -> Vec<(f64, f64)> {
        let (nx, ny, hx, hy) = (self.nx(), self.ny(), self.hx(), self.hy());
        let mut out = Vec::with_capacity(nx * ny);
        for j in 0..ny {
            let t = -1.0 + j as f64 * hy;
            for i in 0..nx {
                out.push(match self {
                    Domain::Interval { .. } => (t, 0.0),
                    Domain::Strip { .. } => (i as f64 * hx, t),
                });
            }
        }
        out
    }

    pub fn sample(&self, f: impl Fn(f64, f64) -> f64) -> Vec<f64> {
        self.coords().into_iter().map(|(x, y)| f(x, y)).collect()
    }
}

/// Bulk values on all nodes plus a separately stored boundary trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Field {
    pub bulk: Vec<f64>,
    pub trace: Vec<f64>,
}

impl Field {
    /// Field whose trace is the restriction of `bulk` to the boundary nodes.
    pub fn from_bulk(domain: &Domain, bulk: Vec<f64>) -> Self {
        let trace = domain.boundary_nodes().iter().map(|&k| bulk[k]).collect();
        Self { bulk, trace }
    }

    pub fn new(domain: &Domain, bulk: Vec<f64>, trace: Vec<f64>) -> Result<Self> {
        if bulk.len() != domain.n_nodes() {
            return Err(Error::Shape { expected: domain.n_nodes(), got: bulk.len() });
        }
        if trace.len() != domain.n_boundary() {
            return Err(Error::Shape { expected: domain.n_boundary(), got: trace.len() });
        }
        Ok(Self { bulk, trace })
    }

    pub fn constant(domain: &Domain, c: f64) -> Self {
        Self::from_bulk(domain, vec![c; domain.n_nodes()])
    }

    /// Largest gap between the stored trace and the boundary values of the bulk.
    pub fn trace_gap(&self, domain: &Domain) -> f64 {
        domain.boundary_nodes().iter().zip(&self.trace).map(|(&k, &p)| (self.bulk[k] - p).abs()).fold(0.0, f64::max)
    }

    pub fn axpy(&self, a: f64, other: &Field) -> Field {
        Field {
            bulk: self.bulk.iter().zip(&other.bulk).map(|(u, v)| u + a * v).collect(),
            trace: self.trace.iter().zip(&other.trace).map(|(u, v)| u + a * v).collect(),
        }
    }

    pub fn sub(&self, other: &Field) -> Field {
        self.axpy(-1.0, other)
    }

    pub fn scale(&self, a: f64) -> Field {
        Field { bulk: self.bulk.iter().map(|v| a * v).collect(), trace: self.trace.iter().map(|v| a * v).collect() }
    }

    pub fn min_max(&self) -> (f64, f64) {
        self.bulk.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)))
    }
}

/// Writes one row per node (`x[,y],u,is_trace = 0`) followed by one row per
/// boundary degree of freedom (`is_trace = 1`) carrying the trace value.
pub fn write_field_csv<W: Write>(domain: &Domain, field: &Field, mut w: W) -> std::io::Result<()> {
    let coords = domain.coords();
    if domain.is_strip() {
        writeln!(w, "x,y,u,is_trace")?;
        for (&(x, y), u) in coords.iter().zip(&field.bulk) {
            writeln!(w, "{x},{y},{u:e},0")?;
        }
        for (&k, u) in domain.boundary_nodes().iter().zip(&field.trace) {
            let (x, y) = coords[k];
            writeln!(w, "{x},{y},{u:e},1")?;
        }
    } else {
        writeln!(w, "x,u,is_trace")?;
        for (&(x, _), u) in coords.iter().zip(&field.bulk) {
            writeln!(w, "{x},{u:e},0")?;
        }
        for (&k, u) in domain.boundary_nodes().iter().zip(&field.trace) {
            writeln!(w, "{},{u:e},1", coords[k].0)?;
        }
    }
    Ok(())
}

/// Reads the format produced by [`write_field_csv`]; rows must be in the same order.
pub fn read_field_csv<R: BufRead>(domain: &Domain, r: R) -> Result<Field> {
    let mut bulk = Vec::new();
    let mut trace = Vec::new();
    for (lineno, line) in r.lines().enumerate() {
        let line = line.map_err(|e| Error::InvalidParameter(e.to_string()))?;
        if lineno == 0 || line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split(',').map(str::trim).collect();
        let parse = |s: &str| s.parse::<f64>().map_err(|e| Error::InvalidParameter(format!("line {}: {e}", lineno + 1)));
        let n = cols.len();
        if n < 3 {
            return Err(Error::InvalidParameter(format!("line {}: expected at least 3 columns", lineno + 1)));
        }
        let u = parse(cols[n - 2])?;
        match cols[n - 1] {
            "0" => bulk.push(u),
            "1" => trace.push(u),
            other => return Err(Error::InvalidParameter(format!("line {}: bad trace flag {other}", lineno + 1))),
        }
    }
    Field::new(domain, bulk, trace)
}

/// One-dimensional Neumann grid on `[-1, 1]`: trapezoid weights and the
/// tridiagonal stiffness matrix.
#[derive(Debug, Clone)]
pub struct Line {
    pub h: f64,
    pub weights: Vec<f64>,
    pub stiff_diag: Vec<f64>,
    pub stiff_off: Vec<f64>,
}

impl Line {
    pub fn new(m: usize) -> Self {
        let h = 2.0 / (m - 1) as f64;
        let mut weights = vec![h; m];
        weights[0] = 0.5 * h;
        weights[m - 1] = 0.5 * h;
        let mut stiff_diag = vec![2.0 / h; m];
        stiff_diag[0] = 1.0 / h;
        stiff_diag[m - 1] = 1.0 / h;
        Self { h, weights, stiff_diag, stiff_off: vec![-1.0 / h; m - 1] }
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }
}

struct FourierPlan {
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for FourierPlan {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("FourierPlan")
    }
}

/// Assembled operators for one domain. Immutable after construction; every
/// method allocates its own scratch, so a shared instance is reentrant.
#[derive(Debug)]
pub struct DiscreteOperators {
    domain: Domain,
    line: Line,
    hx: f64,
    nx: usize,
    weights: Vec<f64>,
    bweights: Vec<f64>,
    bnodes: Vec<usize>,
    /// Fourier symbols of the periodic stiffness, `(4 / hx) sin^2(pi k / nx)`.
    kappa: Vec<f64>,
    fft: Option<FourierPlan>,
    mode0: nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>,
}

impl DiscreteOperators {
    pub fn new(domain: Domain) -> Result<Self> {
        domain.validate()?;
        let (nx, ny, hx) = (domain.nx(), domain.ny(), domain.hx());
        let line = Line::new(ny);
        let mut weights = Vec::with_capacity(nx * ny);
        for j in 0..ny {
            weights.extend(std::iter::repeat(hx * line.weights[j]).take(nx));
        }
        let bweights = vec![hx; 2 * nx];
        let bnodes = domain.boundary_nodes();
        let (kappa, fft) = if domain.is_strip() {
            let kappa = (0..nx)
                .map(|k| {
                    let s = (std::f64::consts::PI * k as f64 / nx as f64).sin();
                    4.0 * s * s / hx
                })
                .collect();
            let mut planner = FftPlanner::new();
            let plan = FourierPlan { forward: planner.plan_fft_forward(nx), inverse: planner.plan_fft_inverse(nx) };
            (kappa, Some(plan))
        } else {
            (vec![0.0], None)
        };
        // Mean constraint bordering the singular Neumann stiffness of the k = 0 mode.
        let mut b = DMatrix::<f64>::zeros(ny + 1, ny + 1);
        for j in 0..ny {
            b[(j, j)] = hx * line.stiff_diag[j];
            if j + 1 < ny {
                b[(j, j + 1)] = hx * line.stiff_off[j];
                b[(j + 1, j)] = hx * line.stiff_off[j];
            }
            b[(j, ny)] = line.weights[j];
            b[(ny, j)] = line.weights[j];
        }
        let mode0 = b.lu();
        if !mode0.is_invertible() {
            return Err(Error::SingularSystem("bordered Neumann system".into()));
        }
        Ok(Self { domain, line, hx, nx, weights, bweights, bnodes, kappa, fft, mode0 })
    }

    pub fn domain(&self) -> &Domain {
        &self.domain
    }

    pub fn line(&self) -> &Line {
        &self.line
    }

    pub fn hx(&self) -> f64 {
        self.hx
    }

    pub fn kappa(&self) -> &[f64] {
        &self.kappa
    }

    /// Bulk quadrature weights (diagonal mass matrix).
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Boundary quadrature weights: 1 per endpoint on the interval, `hx` per node on the strip.
    pub fn boundary_weights(&self) -> &[f64] {
        &self.bweights
    }

    pub fn boundary_nodes(&self) -> &[usize] {
        &self.bnodes
    }

    pub fn n_nodes(&self) -> usize {
        self.weights.len()
    }

    pub fn n_boundary(&self) -> usize {
        self.bnodes.len()
    }

    pub fn measure(&self) -> f64 {
        self.domain.measure()
    }

    pub fn trace_of(&self, bulk: &[f64]) -> Vec<f64> {
        self.bnodes.iter().map(|&k| bulk[k]).collect()
    }

    /// `(u, v)_Omega` under the trapezoid rule.
    pub fn inner(&self, u: &[f64], v: &[f64]) -> f64 {
        self.weights.iter().zip(u).zip(v).map(|((w, a), b)| w * a * b).sum()
    }

    /// `(p, q)_Gamma`.
    pub fn boundary_inner(&self, p: &[f64], q: &[f64]) -> f64 {
        self.bweights.iter().zip(p).zip(q).map(|((w, a), b)| w * a * b).sum()
    }

    pub fn integral(&self, v: &[f64]) -> f64 {
        self.weights.iter().zip(v).map(|(w, a)| w * a).sum()
    }

    pub fn boundary_integral(&self, p: &[f64]) -> f64 {
        self.bweights.iter().zip(p).map(|(w, a)| w * a).sum()
    }

    /// `<v> = |Omega|^{-1} int_Omega v`.
    pub fn mean(&self, v: &[f64]) -> f64 {
        self.integral(v) / self.measure()
    }

    /// `<p>_Gamma = |Omega|^{-1} int_Gamma p`.
    pub fn boundary_mean_gamma(&self, p: &[f64]) -> f64 {
        self.boundary_integral(p) / self.measure()
    }

    /// `K u`, the Neumann stiffness matrix applied to `u`.
    pub fn apply_stiffness(&self, u: &[f64]) -> Vec<f64> {
        let (nx, ny) = (self.nx, self.line.len());
        let mut out = vec![0.0; nx * ny];
        let l = &self.line;
        for j in 0..ny {
            for i in 0..nx {
                let k = j * nx + i;
                let mut s = l.stiff_diag[j] * u[k];
                if j > 0 {
                    s += l.stiff_off[j - 1] * u[k - nx];
                }
                if j + 1 < ny {
                    s += l.stiff_off[j] * u[k + nx];
                }
                let mut acc = self.hx * s;
                if nx > 1 {
                    let left = j * nx + (i + nx - 1) % nx;
                    let right = j * nx + (i + 1) % nx;
                    acc += l.weights[j] * (2.0 * u[k] - u[left] - u[right]) / self.hx;
                }
                out[k] = acc;
            }
        }
        out
    }

    /// Nonzero entries `(column, value)` of row `k` of `K`; repeated columns are possible when `nx` is small.
    pub fn stiffness_row(&self, k: usize) -> Vec<(usize, f64)> {
        let (nx, ny) = (self.nx, self.line.len());
        let l = &self.line;
        let (i, j) = (k % nx, k / nx);
        let mut out = Vec::with_capacity(5);
        out.push((k, self.hx * l.stiff_diag[j]));
        if j > 0 {
            out.push((k - nx, self.hx * l.stiff_off[j - 1]));
        }
        if j + 1 < ny {
            out.push((k + nx, self.hx * l.stiff_off[j]));
        }
        if nx > 1 {
            let c = l.weights[j] / self.hx;
            out.push((k, 2.0 * c));
            out.push((j * nx + (i + nx - 1) % nx, -c));
            out.push((j * nx + (i + 1) % nx, -c));
        }
        out
    }

    /// Nonzero entries of row `m` of `K_Gamma`, indexed by boundary degree of freedom.
    pub fn boundary_stiffness_row(&self, m: usize) -> Vec<(usize, f64)> {
        let nx = self.nx;
        if nx == 1 {
            return Vec::new();
        }
        let (line, i) = (m / nx, m % nx);
        let c = 1.0 / self.hx;
        vec![(m, 2.0 * c), (line * nx + (i + nx - 1) % nx, -c), (line * nx + (i + 1) % nx, -c)]
    }

    /// Discrete Neumann Laplacian `-W^{-1} K u`.
    pub fn laplacian(&self, u: &[f64]) -> Vec<f64> {
        self.apply_stiffness(u).iter().zip(&self.weights).map(|(k, w)| -k / w).collect()
    }

    /// `K_Gamma psi`: periodic stiffness along each boundary line; zero on the interval.
    pub fn apply_boundary_stiffness(&self, psi: &[f64]) -> Vec<f64> {
        let nx = self.nx;
        let mut out = vec![0.0; psi.len()];
        if nx > 1 {
            for line in 0..2 {
                for i in 0..nx {
                    let k = line * nx + i;
                    let l = line * nx + (i + nx - 1) % nx;
                    let r = line * nx + (i + 1) % nx;
                    out[k] = (2.0 * psi[k] - psi[l] - psi[r]) / self.hx;
                }
            }
        }
        out
    }

    /// Laplace-Beltrami operator on the boundary.
    pub fn laplace_beltrami(&self, psi: &[f64]) -> Vec<f64> {
        self.apply_boundary_stiffness(psi).iter().zip(&self.bweights).map(|(k, w)| -k / w).collect()
    }

    /// `1/2 |grad u|^2` integrated over `Omega`.
    pub fn dirichlet_energy(&self, u: &[f64]) -> f64 {
        0.5 * u.iter().zip(self.apply_stiffness(u)).map(|(a, b)| a * b).sum::<f64>()
    }

    pub fn boundary_dirichlet_energy(&self, psi: &[f64]) -> f64 {
        0.5 * psi.iter().zip(self.apply_boundary_stiffness(psi)).map(|(a, b)| a * b).sum::<f64>()
    }

    fn rms(&self, v: &[f64]) -> f64 {
        (self.inner(v, v) / self.measure()).sqrt()
    }

    fn check_zero_mean(&self, r: &[f64]) -> Result<f64> {
        let mean = self.mean(r);
        let norm = self.rms(r);
        let scale = r.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        // relative criterion plus a round-off floor for differences of O(1) fields
        if mean.abs() > 1e-8 * norm + 1e-14 * scale.max(1e-300) && mean.abs() > 1e-15 {
            return Err(Error::NonZeroMean { mean, norm });
        }
        Ok(mean)
    }

    /// Solves `-Delta w = r` with homogeneous Neumann data and `<w> = 0` for zero-mean `r`.
    pub fn inverse_laplacian(&self, r: &[f64]) -> Result<Vec<f64>> {
        if r.len() != self.n_nodes() {
            return Err(Error::Shape { expected: self.n_nodes(), got: r.len() });
        }
        let mean = self.check_zero_mean(r)?;
        let rhs: Vec<f64> = r.iter().zip(&self.weights).map(|(v, w)| (v - mean) * w).collect();
        self.solve_stiffness_zero_mean(&rhs)
    }

    /// Solves `K w = b` on the zero-mean subspace; `b` must have zero sum.
    fn solve_stiffness_zero_mean(&self, b: &[f64]) -> Result<Vec<f64>> {
        let (nx, ny) = (self.nx, self.line.len());
        let mut spec = self.forward_x(b);
        let l = &self.line;
        let mut re = vec![0.0; ny];
        let mut im = vec![0.0; ny];
        for k in 0..nx {
            for j in 0..ny {
                re[j] = spec[j * nx + k].re;
                im[j] = spec[j * nx + k].im;
            }
            if k == 0 {
                for part in [&mut re, &mut im] {
                    let mut rhs = DVector::<f64>::zeros(ny + 1);
                    for j in 0..ny {
                        rhs[j] = part[j];
                    }
                    let sol = self
                        .mode0
                        .solve(&rhs)
                        .ok_or_else(|| Error::SingularSystem("bordered Neumann system".into()))?;
                    for j in 0..ny {
                        part[j] = sol[j];
                    }
                }
            } else {
                let diag: Vec<f64> = (0..ny).map(|j| self.kappa[k] * l.weights[j] + self.hx * l.stiff_diag[j]).collect();
                let off: Vec<f64> = l.stiff_off.iter().map(|o| self.hx * o).collect();
                solve_tridiagonal(&diag, &off, &mut re)?;
                solve_tridiagonal(&diag, &off, &mut im)?;
            }
            for j in 0..ny {
                spec[j * nx + k] = Complex64::new(re[j], im[j]);
            }
        }
        Ok(self.inverse_x(spec))
    }

    /// Forward DFT along `x` of every row (identity on the interval).
    pub fn forward_x(&self, v: &[f64]) -> Vec<Complex64> {
        let mut out: Vec<Complex64> = v.iter().map(|&a| Complex64::new(a, 0.0)).collect();
        if let Some(plan) = &self.fft {
            for row in out.chunks_mut(self.nx) {
                plan.forward.process(row);
            }
        }
        out
    }

    /// Inverse of [`Self::forward_x`], keeping the real part.
    pub fn inverse_x(&self, mut spec: Vec<Complex64>) -> Vec<f64> {
        if let Some(plan) = &self.fft {
            for row in spec.chunks_mut(self.nx) {
                plan.inverse.process(row);
            }
            let s = 1.0 / self.nx as f64;
            spec.iter().map(|c| c.re * s).collect()
        } else {
            spec.iter().map(|c| c.re).collect()
        }
    }

    /// `||r||_{H^{-1}} = (A r, r)^{1/2}` for zero-mean `r`.
    pub fn h_minus1_norm(&self, r: &[f64]) -> Result<f64> {
        Ok(self.h_minus1_norm_sq(r)?.max(0.0).sqrt())
    }

    pub fn h_minus1_norm_sq(&self, r: &[f64]) -> Result<f64> {
        let w = self.inverse_laplacian(r)?;
        let mean = self.mean(r);
        let centered: Vec<f64> = r.iter().map(|v| v - mean).collect();
        Ok(self.inner(&w, &centered))
    }

    /// `sqrt(||u1 - u2||^2_{H^{-1}(Omega)} + ||psi1 - psi2||^2_{L^2(Gamma)})`.
    pub fn phi_w_distance(&self, a: &Field, b: &Field) -> Result<f64> {
        let du: Vec<f64> = a.bulk.iter().zip(&b.bulk).map(|(x, y)| x - y).collect();
        let dp: Vec<f64> = a.trace.iter().zip(&b.trace).map(|(x, y)| x - y).collect();
        Ok((self.h_minus1_norm_sq(&du)?.max(0.0) + self.boundary_inner(&dp, &dp)).sqrt())
    }

    /// `||u||^2_{H^1} = ||u||^2 + ||grad u||^2`.
    pub fn h1_norm_sq(&self, u: &[f64]) -> f64 {
        self.inner(u, u) + 2.0 * self.dirichlet_energy(u)
    }

    /// Outward normal derivative at each boundary degree of freedom by the
    /// second-order one-sided stencil.
    pub fn normal_derivative(&self, u: &[f64]) -> Vec<f64> {
        let (nx, ny, h) = (self.nx, self.line.len(), self.line.h);
        let mut out = Vec::with_capacity(2 * nx);
        for i in 0..nx {
            let v = |j: usize| u[j * nx + i];
            out.push((3.0 * v(0) - 4.0 * v(1) + v(2)) / (2.0 * h));
        }
        for i in 0..nx {
            let v = |j: usize| u[j * nx + i];
            out.push((3.0 * v(ny - 1) - 4.0 * v(ny - 2) + v(ny - 3)) / (2.0 * h));
        }
        out
    }

    /// `L^2` norm of the second derivatives carrying at least one tangential
    /// direction, `(d_xx u, d_yx u)`. Strip only.
    pub fn tangential_gradient_seminorm(&self, u: &[f64]) -> Result<f64> {
        if !self.domain.is_strip() {
            return Err(Error::UnsupportedDomain("tangential derivatives need the periodic strip"));
        }
        let (nx, ny, hx, hy) = (self.nx, self.line.len(), self.hx, self.line.h);
        let at = |i: usize, j: usize| u[j * nx + (i % nx)];
        let mut dx = vec![0.0; nx * ny];
        let mut total = 0.0;
        for j in 0..ny {
            for i in 0..nx {
                let (l, r) = (at(i + nx - 1, j), at(i + 1, j));
                dx[j * nx + i] = (r - l) / (2.0 * hx);
                let dxx = (r - 2.0 * at(i, j) + l) / (hx * hx);
                total += self.weights[j * nx + i] * dxx * dxx;
            }
        }
        for j in 0..ny {
            for i in 0..nx {
                let d = |jj: usize| dx[jj * nx + i];
                let dyx = if j == 0 {
                    (-3.0 * d(0) + 4.0 * d(1) - d(2)) / (2.0 * hy)
                } else if j == ny - 1 {
                    (3.0 * d(ny - 1) - 4.0 * d(ny - 2) + d(ny - 3)) / (2.0 * hy)
                } else {
                    (d(j + 1) - d(j - 1)) / (2.0 * hy)
                };
                total += self.weights[j * nx + i] * dyx * dyx;
            }
        }
        Ok(total.sqrt())
    }

    /// Nonzero eigenvalues of `-Delta_h` (generalized problem `K v = sigma W v`)
    /// on the zero-mean subspace, ascending.
    pub fn neumann_eigenvalues(&self) -> Vec<f64> {
        let l = &self.line;
        let ny = l.len();
        let mut s = DMatrix::<f64>::zeros(ny, ny);
        for j in 0..ny {
            s[(j, j)] = l.stiff_diag[j] / l.weights[j];
            if j + 1 < ny {
                let v = l.stiff_off[j] / (l.weights[j] * l.weights[j + 1]).sqrt();
                s[(j, j + 1)] = v;
                s[(j + 1, j)] = v;
            }
        }
        let mut line_eigs: Vec<f64> = s.symmetric_eigen().eigenvalues.iter().copied().collect();
        line_eigs.sort_by(|a, b| a.partial_cmp(b).unwrap());
        line_eigs[0] = 0.0;
        let mut out = Vec::with_capacity(self.nx * ny);
        for k in 0..self.nx {
            let kx = self.kappa[k] / self.hx;
            for (idx, &e) in line_eigs.iter().enumerate() {
                if k == 0 && idx == 0 {
                    continue;
                }
                out.push(kx + e);
            }
        }
        out.sort_by(|a, b| a.partial_cmp(b).unwrap());
        out
    }
}
