//! The odd-symmetric boundary value problem `y'' = f(y)`, `y'(+-1) = K`.
//!
//! With `y(0) = 0` and `y'(0) = s` the first integral is
//! `1/2 y'^2 - F(y) = 1/2 s^2`, so `y` reaches `1` at
//! `x1(s) = int_0^1 dv / sqrt(s^2 + 2 F(v))`. When `F(1)` is finite the slope
//! `s*` with `x1(s*) = 1` gives the critical flux `K+ = sqrt(s*^2 + 2 F(1))`;
//! above it no classical solution exists and the saturated profile with slope
//! `s*` takes over.
//!
//! Only the monotone part `f` of the potential enters; the linear shift is ignored.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::potentials::{Extended, PotentialSpec};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StationaryProblem {
    pub potential: PotentialSpec,
    pub k: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum Exit {
    /// `|y| < 1` on all of `[-1, 1]`.
    Interior,
    /// `y` reaches `1` at `x_hit <= 1`.
    Saturated { x_hit: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ShootingResult {
    pub s: f64,
    /// Profile on `[-x_end, x_end]`, mirrored by oddness, ascending in `x`.
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub yp: Vec<f64>,
    pub exit: Exit,
    /// `max |1/2 y'^2 - F(y) - 1/2 s^2|` over the integrated points.
    pub first_integral_defect: f64,
}

impl ShootingResult {
    pub fn y_end(&self) -> f64 {
        *self.y.last().unwrap()
    }

    pub fn yp_end(&self) -> f64 {
        *self.yp.last().unwrap()
    }

    pub fn x_hit(&self) -> Option<f64> {
        match self.exit {
            Exit::Saturated { x_hit } => Some(x_hit),
            Exit::Interior => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShootOptions {
    pub rtol: f64,
    pub atol: f64,
    /// Integration hands over to the first-integral quadrature once `y >= 1 - switch_margin`.
    pub switch_margin: f64,
    pub max_step: f64,
}

impl Default for ShootOptions {
    fn default() -> Self {
        Self { rtol: 1e-12, atol: 1e-14, switch_margin: 1e-4, max_step: 0.05 }
    }
}

fn big_f(spec: &PotentialSpec, v: f64) -> f64 {
    match spec.antiderivative(v.clamp(-1.0, 1.0)) {
        Ok(Extended::Finite(x)) => x,
        _ => f64::INFINITY,
    }
}

const XGK: [f64; 8] = [
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.0,
];
const WGK: [f64; 8] = [
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
];
const WG: [f64; 4] = [
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
];

fn gk15(f: &impl Fn(f64) -> f64, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kron = WGK[7] * fc;
    let mut gauss = WG[3] * fc;
    for j in 0..7 {
        let d = h * XGK[j];
        let s = f(c - d) + f(c + d);
        kron += WGK[j] * s;
        if j % 2 == 1 {
            gauss += WG[j / 2] * s;
        }
    }
    (kron * h, ((kron - gauss) * h).abs())
}

struct Segment {
    a: f64,
    b: f64,
    value: f64,
    err: f64,
}

impl PartialEq for Segment {
    fn eq(&self, other: &Self) -> bool {
        self.err == other.err
    }
}
impl Eq for Segment {}
impl PartialOrd for Segment {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Segment {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.err.total_cmp(&other.err)
    }
}

const MAX_SEGMENTS: usize = 4000;

/// Globally adaptive Gauss-Kronrod (7, 15) quadrature; bisects the worst segment
/// until the summed error estimate drops below `tol` or the rounding level.
pub fn integrate(f: impl Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    if a == b {
        return 0.0;
    }
    let seg = |a: f64, b: f64| {
        let (value, err) = gk15(&f, a, b);
        Segment { a, b, value, err: if err.is_finite() { err } else { f64::MAX } }
    };
    let mut heap = std::collections::BinaryHeap::new();
    let first = seg(a, b);
    let (mut total, mut err) = (first.value, first.err);
    heap.push(first);
    while heap.len() < MAX_SEGMENTS {
        if err <= tol.max(100.0 * f64::EPSILON * total.abs()) {
            break;
        }
        let worst = heap.pop().expect("heap is non-empty");
        let m = 0.5 * (worst.a + worst.b);
        if m <= worst.a || m >= worst.b {
            heap.push(worst);
            break;
        }
        let (l, r) = (seg(worst.a, m), seg(m, worst.b));
        total += l.value + r.value - worst.value;
        err += l.err + r.err - worst.err;
        heap.push(l);
        heap.push(r);
    }
    // re-sum to shed the drift of the running totals
    heap.iter().map(|s| s.value).sum()
}

/// `int_a^b dv / sqrt(e2 + 2 F(v))` for `0 <= a < b <= 1`, with `v = 1 - w^2`.
pub fn flight_integral(spec: &PotentialSpec, e2: f64, a: f64, b: f64, tol: f64) -> f64 {
    let (wa, wb) = ((1.0 - b).max(0.0).sqrt(), (1.0 - a).max(0.0).sqrt());
    integrate(
        |w| {
            let v = 1.0 - w * w;
            let q = e2 + 2.0 * big_f(spec, v);
            if !q.is_finite() {
                0.0
            } else {
                2.0 * w / q.sqrt()
            }
        },
        wa,
        wb,
        tol,
    )
}

/// Arrival position `x1(s) = int_0^1 dv / sqrt(s^2 + 2 F(v))`; `+inf` at `s = 0`.
pub fn time_of_flight(spec: &PotentialSpec, s: f64) -> f64 {
    time_of_flight_tol(spec, s, 1e-14)
}

pub fn time_of_flight_tol(spec: &PotentialSpec, s: f64, tol: f64) -> f64 {
    if !(s > 0.0) {
        return f64::INFINITY;
    }
    flight_integral(spec, s * s, 0.0, 1.0, tol)
}

// Dormand-Prince 5(4)
const C: [f64; 7] = [0.0, 0.2, 0.3, 0.8, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [0.2, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const B5: [f64; 7] = [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0, 0.0];
const B4: [f64; 7] =
    [5179.0 / 57600.0, 0.0, 7571.0 / 16695.0, 393.0 / 640.0, -92097.0 / 339200.0, 187.0 / 2100.0, 1.0 / 40.0];

/// One Dormand-Prince step; returns the 5th-order solution and the scaled error norm.
fn dp_step<F>(rhs: &F, x: f64, y: &[f64], h: f64, rtol: f64, atol: f64) -> Option<(Vec<f64>, f64)>
where
    F: Fn(f64, &[f64]) -> Option<Vec<f64>>,
{
    let d = y.len();
    let mut k: Vec<Vec<f64>> = Vec::with_capacity(7);
    for stage in 0..7 {
        let mut ys = y.to_vec();
        for (j, kj) in k.iter().enumerate() {
            for i in 0..d {
                ys[i] += h * A[stage][j] * kj[i];
            }
        }
        k.push(rhs(x + C[stage] * h, &ys)?);
    }
    let mut y5 = y.to_vec();
    let mut err = 0.0f64;
    for i in 0..d {
        let mut e = 0.0;
        for s in 0..7 {
            y5[i] += h * B5[s] * k[s][i];
            e += h * (B5[s] - B4[s]) * k[s][i];
        }
        let sc = atol + rtol * y[i].abs().max(y5[i].abs());
        err = err.max((e / sc).abs());
    }
    if y5.iter().all(|v| v.is_finite()) {
        Some((y5, err))
    } else {
        None
    }
}

const MAX_STEPS: usize = 2_000_000;

fn adapt(h: f64, err: f64) -> f64 {
    let fac = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
    h * fac
}

/// Integrates `y'' = f(y)`, `y(0) = 0`, `y'(0) = s` on `[0, 1]` and mirrors by oddness.
pub fn shoot(spec: &PotentialSpec, s: f64, opts: ShootOptions) -> Result<ShootingResult> {
    if !(s >= 0.0) || !s.is_finite() {
        return Err(Error::InvalidParameter(format!("initial slope must be >= 0, got {s}")));
    }
    let rhs = |_x: f64, y: &[f64]| -> Option<Vec<f64>> { spec.f(y[0]).ok().map(|f| vec![y[1], f]) };
    let invariant = |y: f64, yp: f64| 0.5 * yp * yp - big_f(spec, y) - 0.5 * s * s;

    let (mut xs, mut ys, mut yps) = (vec![0.0], vec![0.0], vec![s]);
    let mut defect = 0.0f64;
    let y_sw = 1.0 - opts.switch_margin;
    let mut x = 0.0;
    let mut y = vec![0.0, s];
    let mut h = opts.max_step.min(1e-3);
    let mut exit = Exit::Interior;
    let mut steps = 0usize;
    loop {
        if x >= 1.0 - 1e-15 {
            break;
        }
        steps += 1;
        if steps > MAX_STEPS {
            return Err(Error::StiffnessFailure { x, step: h });
        }
        h = h.min(1.0 - x).min(opts.max_step);
        let Some((yn, err)) = dp_step(&rhs, x, &y, h, opts.rtol, opts.atol).filter(|r| r.1 <= 1.0) else {
            let err = dp_step(&rhs, x, &y, h, opts.rtol, opts.atol).map_or(f64::INFINITY, |r| r.1);
            h = if err.is_finite() { adapt(h, err) } else { 0.25 * h };
            if h < 1e-14 {
                return Err(Error::StiffnessFailure { x, step: h });
            }
            continue;
        };
        if yn[0] >= y_sw {
            // land exactly on y = y_sw (Illinois regula falsi on the step length)
            let (mut lo, mut hi) = (0.0, h);
            let (mut flo, mut fhi) = (y[0] - y_sw, yn[0] - y_sw);
            let mut best = (h, yn.clone());
            let mut side = 0;
            for _ in 0..100 {
                let mid = if fhi != flo { (lo * fhi - hi * flo) / (fhi - flo) } else { 0.5 * (lo + hi) };
                let mid = if mid <= lo || mid >= hi { 0.5 * (lo + hi) } else { mid };
                let Some((ym, _)) = dp_step(&rhs, x, &y, mid, opts.rtol, opts.atol) else {
                    hi = mid;
                    fhi = 1.0;
                    continue;
                };
                let fm = ym[0] - y_sw;
                best = (mid, ym.clone());
                if fm.abs() <= 1e-15 || hi - lo < 1e-16 {
                    break;
                }
                if fm > 0.0 {
                    hi = mid;
                    fhi = fm;
                    if side == 1 {
                        flo *= 0.5;
                    }
                    side = 1;
                } else {
                    lo = mid;
                    flo = fm;
                    if side == -1 {
                        fhi *= 0.5;
                    }
                    side = -1;
                }
            }
            let (hs, ysw) = best;
            let x_sw = x + hs;
            xs.push(x_sw);
            ys.push(ysw[0]);
            yps.push(ysw[1]);
            defect = defect.max(invariant(ysw[0], ysw[1]).abs());
            let e2 = ysw[1] * ysw[1] - 2.0 * big_f(spec, ysw[0]);
            let tail = flight_integral(spec, e2, ysw[0], 1.0, 1e-15);
            let v_end = if x_sw + tail <= 1.0 {
                exit = Exit::Saturated { x_hit: x_sw + tail };
                1.0
            } else {
                // hit lies beyond x = 1: invert x(v) = 1 on the tail
                let (mut a, mut b) = (ysw[0], 1.0);
                for _ in 0..200 {
                    let m = 0.5 * (a + b);
                    if x_sw + flight_integral(spec, e2, ysw[0], m, 1e-15) < 1.0 {
                        a = m;
                    } else {
                        b = m;
                    }
                    if b - a < 1e-16 {
                        break;
                    }
                }
                0.5 * (a + b)
            };
            let (w0, w1) = ((1.0 - ysw[0]).sqrt(), (1.0 - v_end).max(0.0).sqrt());
            let npts = 24;
            for j in 1..=npts {
                let w = w0 + (w1 - w0) * j as f64 / npts as f64;
                let v = if j == npts { v_end } else { 1.0 - w * w };
                let xv = match (j == npts, exit) {
                    (true, Exit::Saturated { x_hit }) => x_hit,
                    (true, Exit::Interior) => 1.0,
                    _ => x_sw + flight_integral(spec, e2, ysw[0], v, 1e-15),
                };
                xs.push(xv);
                ys.push(v);
                yps.push((e2 + 2.0 * big_f(spec, v)).max(0.0).sqrt());
            }
            break;
        }
        x += h;
        y = yn;
        xs.push(x);
        ys.push(y[0]);
        yps.push(y[1]);
        defect = defect.max(invariant(y[0], y[1]).abs());
        h = adapt(h, err);
    }

    let n = xs.len();
    let mut x_full = Vec::with_capacity(2 * n - 1);
    let mut y_full = Vec::with_capacity(2 * n - 1);
    let mut yp_full = Vec::with_capacity(2 * n - 1);
    for i in (1..n).rev() {
        x_full.push(-xs[i]);
        y_full.push(-ys[i]);
        yp_full.push(yps[i]);
    }
    x_full.extend_from_slice(&xs);
    y_full.extend_from_slice(&ys);
    yp_full.extend_from_slice(&yps);
    Ok(ShootingResult { s, x: x_full, y: y_full, yp: yp_full, exit, first_integral_defect: defect })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum CriticalFlux {
    Finite { s_star: f64, k_plus: f64 },
    /// `F(1) = +inf`: classical solutions exist for every `K`.
    NotApplicable,
}

/// Slope `s` with `x1(s) = 1`, by bisection.
fn unit_flight_slope(spec: &PotentialSpec, tol: f64) -> f64 {
    let (mut lo, mut hi) = (1e-3, 1.0);
    while time_of_flight_tol(spec, lo, tol) < 1.0 {
        lo *= 0.5;
    }
    while time_of_flight_tol(spec, hi, tol) > 1.0 {
        hi *= 2.0;
    }
    while hi - lo > 1e-15 * hi.max(1.0) {
        let m = 0.5 * (lo + hi);
        if m <= lo || m >= hi {
            break;
        }
        if time_of_flight_tol(spec, m, tol) > 1.0 {
            lo = m;
        } else {
            hi = m;
        }
    }
    0.5 * (lo + hi)
}

/// Solves `x1(s*) = 1` by bisection; the result is accepted only if halving
/// the quadrature tolerance moves it by less than `1e-12`.
pub fn critical_k(spec: &PotentialSpec) -> Result<CriticalFlux> {
    let f1 = match spec.boundary_limit() {
        Extended::Finite(v) => v,
        Extended::Infinite => return Ok(CriticalFlux::NotApplicable),
    };
    let s1 = unit_flight_slope(spec, 1e-13);
    let s2 = unit_flight_slope(spec, 0.5e-13);
    if (s1 - s2).abs() > 1e-12 {
        return Err(Error::InvalidParameter(format!("critical slope not reproducible: {s1} vs {s2}")));
    }
    Ok(CriticalFlux::Finite { s_star: s2, k_plus: (s2 * s2 + 2.0 * f1).sqrt() })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Classification {
    Classical,
    VariationalOnly,
}

pub fn classify(problem: &StationaryProblem) -> Result<Classification> {
    Ok(match critical_k(&problem.potential)? {
        CriticalFlux::Finite { k_plus, .. } if problem.k > k_plus => Classification::VariationalOnly,
        _ => Classification::Classical,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum BvpSolution {
    Classical { s: f64, profile: ShootingResult },
    VariationalOnly { s_star: f64, profile: ShootingResult, defect: f64 },
}

impl BvpSolution {
    pub fn profile(&self) -> &ShootingResult {
        match self {
            BvpSolution::Classical { profile, .. } | BvpSolution::VariationalOnly { profile, .. } => profile,
        }
    }

    pub fn classification(&self) -> Classification {
        match self {
            BvpSolution::Classical { .. } => Classification::Classical,
            BvpSolution::VariationalOnly { .. } => Classification::VariationalOnly,
        }
    }
}

/// `(y'(1), d y'(1) / ds)` from the variational equation `z'' = f'(y) z`, for
/// slopes whose profile does not saturate on `[0, 1]`.
fn end_slope(spec: &PotentialSpec, s: f64) -> Result<Option<(f64, f64)>> {
    let rhs = |_x: f64, y: &[f64]| -> Option<Vec<f64>> {
        let f = spec.f(y[0]).ok()?;
        let fp = spec.f_prime(y[0]).ok()?;
        Some(vec![y[1], f, y[3], fp * y[2]])
    };
    let (mut x, mut y, mut h) = (0.0f64, vec![0.0, s, 0.0, 1.0], 1e-3f64);
    let mut steps = 0usize;
    while x < 1.0 - 1e-15 {
        steps += 1;
        if steps > MAX_STEPS {
            return Ok(None);
        }
        h = h.min(1.0 - x);
        match dp_step(&rhs, x, &y, h, 1e-13, 1e-15) {
            Some((yn, err)) if err <= 1.0 => {
                x += h;
                y = yn;
                h = adapt(h, err);
            }
            Some((_, err)) => h = adapt(h, err),
            None => h *= 0.25,
        }
        if h < 1e-14 {
            return Ok(None);
        }
    }
    Ok(Some((y[1], y[3])))
}

/// Classical odd solution with `y'(1) = K` when it exists; otherwise the
/// saturated profile with slope `s*` and the boundary defect `K - K+`.
pub fn solve_bvp(problem: &StationaryProblem) -> Result<BvpSolution> {
    let spec = &problem.potential;
    let k = problem.k;
    if !(k >= 0.0) {
        return Err(Error::InvalidParameter(format!("K must be >= 0, got {k}")));
    }
    let opts = ShootOptions { max_step: 2e-3, ..ShootOptions::default() };
    if k == 0.0 {
        return Ok(BvpSolution::Classical { s: 0.0, profile: shoot(spec, 0.0, opts)? });
    }
    let (mut lo, mut hi) = match critical_k(spec)? {
        CriticalFlux::Finite { s_star, k_plus } => {
            if k > k_plus {
                let profile = shoot(spec, s_star, opts)?;
                return Ok(BvpSolution::VariationalOnly { s_star, profile, defect: k - k_plus });
            }
            (0.0, s_star)
        }
        // y'(1) grows without bound as x1(s) decreases to 1
        CriticalFlux::NotApplicable => (0.0, unit_flight_slope(spec, 1e-13)),
    };
    // safeguarded Newton on s for y'(1; s) = K
    let mut s = 0.5 * (lo + hi);
    for _ in 0..200 {
        let Some((g, dg)) = end_slope(spec, s)? else {
            hi = s;
            s = 0.5 * (lo + hi);
            continue;
        };
        let r = g - k;
        if r.abs() <= 1e-12 * (1.0 + k) {
            break;
        }
        if r > 0.0 {
            hi = s;
        } else {
            lo = s;
        }
        let cand = s - r / dg;
        s = if dg > 0.0 && cand > lo && cand < hi { cand } else { 0.5 * (lo + hi) };
        if hi - lo < 1e-15 {
            break;
        }
    }
    Ok(BvpSolution::Classical { s, profile: shoot(spec, s, opts)? })
}

/// Finite-difference Newton solve of `y'' = f(y)`, `y(0) = 0`, `y(l) = 1` on
/// the mapped grid `x = l sin(pi xi / 2)`, `xi = i / m`, which clusters nodes at
/// `x = l`. Returns the slope `y'(0)`, extrapolated from `m` and `2m` nodes.
pub fn dirichlet_slope(spec: &PotentialSpec, l: f64, m: usize) -> Result<f64> {
    let a = dirichlet_slope_single(spec, l, m)?;
    let b = dirichlet_slope_single(spec, l, 2 * m)?;
    Ok((4.0 * b - a) / 3.0)
}

fn dirichlet_slope_single(spec: &PotentialSpec, l: f64, m: usize) -> Result<f64> {
    use std::f64::consts::FRAC_PI_2;
    let d = 1.0 / m as f64;
    let n = m - 1;
    let xi = |i: usize| i as f64 * d;
    let xp: Vec<f64> = (1..m).map(|i| l * FRAC_PI_2 * (FRAC_PI_2 * xi(i)).cos()).collect();
    let cc: Vec<f64> = (1..m).map(|i| -FRAC_PI_2 * (FRAC_PI_2 * xi(i)).tan()).collect();
    let mut y: Vec<f64> = (1..m).map(|i| (FRAC_PI_2 * xi(i)).sin()).collect();
    let at = |y: &[f64], j: isize| -> f64 {
        // y_0 = 0 and y_m = 1 are the Dirichlet data
        if j <= 0 {
            0.0
        } else if j as usize >= m {
            1.0
        } else {
            y[j as usize - 1]
        }
    };
    let resid = |y: &[f64]| -> Option<Vec<f64>> {
        let mut r = vec![0.0; n];
        for i in 0..n {
            let j = i as isize + 1;
            let (ym, y0, yp) = (at(y, j - 1), at(y, j), at(y, j + 1));
            let yxx = (yp - 2.0 * y0 + ym) / (d * d);
            let yx = (yp - ym) / (2.0 * d);
            r[i] = yxx - cc[i] * yx - xp[i] * xp[i] * spec.f(y0).ok()?;
        }
        Some(r)
    };
    let norm = |r: &[f64]| r.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let mut r = resid(&y).ok_or(Error::Domain { value: 1.0 })?;
    for _ in 0..100 {
        let rn = norm(&r);
        if rn <= 1e-11 {
            break;
        }
        let mut diag = vec![0.0; n];
        let mut lower = vec![0.0; n];
        let mut upper = vec![0.0; n];
        for i in 0..n {
            diag[i] = -2.0 / (d * d) - xp[i] * xp[i] * spec.f_prime(y[i]).map_err(|_| Error::Domain { value: y[i] })?;
            lower[i] = 1.0 / (d * d) + cc[i] / (2.0 * d);
            upper[i] = 1.0 / (d * d) - cc[i] / (2.0 * d);
        }
        let mut delta: Vec<f64> = r.iter().map(|v| -v).collect();
        thomas(&lower, &diag, &upper, &mut delta)?;
        let mut alpha = 1.0;
        let mut accepted = false;
        for _ in 0..30 {
            let trial: Vec<f64> = y.iter().zip(&delta).map(|(a, b)| a + alpha * b).collect();
            if trial.iter().all(|v| v.abs() < 1.0) {
                if let Some(rt) = resid(&trial) {
                    if norm(&rt) < rn || alpha < 1e-3 {
                        y = trial;
                        r = rt;
                        accepted = true;
                        break;
                    }
                }
            }
            alpha *= 0.5;
        }
        if !accepted {
            return Err(Error::NewtonDiverged { residual: rn, iterations: 0 });
        }
    }
    // y_xi(0) = (y_1 - y_{-1}) / (2 d) = y_1 / d and x_xi(0) = l pi / 2
    Ok(y[0] / d / (l * FRAC_PI_2))
}

fn thomas(lower: &[f64], diag: &[f64], upper: &[f64], rhs: &mut [f64]) -> Result<()> {
    let n = diag.len();
    let mut c = vec![0.0; n];
    let mut b = diag[0];
    if b == 0.0 {
        return Err(Error::SingularSystem("tridiagonal pivot".into()));
    }
    rhs[0] /= b;
    for i in 1..n {
        c[i - 1] = upper[i - 1] / b;
        b = diag[i] - lower[i] * c[i - 1];
        if b == 0.0 {
            return Err(Error::SingularSystem("tridiagonal pivot".into()));
        }
        rhs[i] = (rhs[i] - lower[i] * rhs[i - 1]) / b;
    }
    for i in (0..n - 1).rev() {
        rhs[i] -= c[i] * rhs[i + 1];
    }
    Ok(())
}

/// Position `L` at which the Dirichlet problem `y(0) = 0`, `y(L) = 1` has slope
/// `s` at the origin, found by a secant iteration on [`dirichlet_slope`].
pub fn bvp_hit_position(spec: &PotentialSpec, s: f64, m: usize) -> Result<f64> {
    if !(s > 0.0) {
        return Err(Error::InvalidParameter(format!("slope must be positive, got {s}")));
    }
    let g = |l: f64| dirichlet_slope(spec, l, m).map(|v| v - s);
    let (mut l0, mut l1) = (0.8 / s, 1.0 / s);
    let (mut g0, mut g1) = (g(l0)?, g(l1)?);
    for _ in 0..60 {
        if g1 == g0 {
            break;
        }
        let l2 = (l1 - g1 * (l1 - l0) / (g1 - g0)).max(0.25 * l1);
        l0 = l1;
        g0 = g1;
        l1 = l2;
        g1 = g(l1)?;
        if (l1 - l0).abs() <= 1e-13 * l1 {
            break;
        }
    }
    Ok(l1)
}

/// `L^2` norm of `y'' - f(y) - <y'' - f(y)>` over the region `|y| <= 1 - 1e-3`,
/// with `y''` the three-point derivative of `y'` on the profile grid.
pub fn variational_equilibrium_check(spec: &PotentialSpec, x: &[f64], y: &[f64], yp: &[f64]) -> f64 {
    let n = x.len();
    let mut pts = Vec::new();
    for i in 1..n.saturating_sub(1) {
        if y[i].abs() > 1.0 - 1e-3 || y[i - 1].abs() > 1.0 - 1e-3 || y[i + 1].abs() > 1.0 - 1e-3 {
            continue;
        }
        let (h0, h1) = (x[i] - x[i - 1], x[i + 1] - x[i]);
        if h0 <= 0.0 || h1 <= 0.0 {
            continue;
        }
        let ypp = (-h1 / (h0 * (h0 + h1))) * yp[i - 1] + ((h1 - h0) / (h0 * h1)) * yp[i] + (h0 / (h1 * (h0 + h1))) * yp[i + 1];
        let Ok(f) = spec.f(y[i]) else { continue };
        pts.push((0.5 * (h0 + h1), ypp - f));
    }
    let wsum: f64 = pts.iter().map(|p| p.0).sum();
    if wsum == 0.0 {
        return 0.0;
    }
    let mean = pts.iter().map(|p| p.0 * p.1).sum::<f64>() / wsum;
    pts.iter().map(|p| p.0 * (p.1 - mean).powi(2)).sum::<f64>().sqrt()
}
