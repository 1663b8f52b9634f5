//! Singular bulk nonlinearities, their linear-tail regularizations and the
//! boundary nonlinearity `g(z) = z + g0(z)`.
//!
//! Bulk potentials are split as `f~(u) = f(u) - lambda * u` with `f` monotone on
//! `(-1, 1)`. The regularization `f_N` coincides with `f` on the core interval
//! `[-1 + 1/N, 1 - 1/N]` and continues it by its tangent line outside, so it is
//! globally defined, monotone and convex in `|u|`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Value on the extended real half-line, used where a potential may diverge.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Extended {
    Finite(f64),
    Infinite,
}

impl Extended {
    pub fn is_finite(&self) -> bool {
        matches!(self, Extended::Finite(_))
    }

    pub fn finite(&self) -> Option<f64> {
        match *self {
            Extended::Finite(v) => Some(v),
            Extended::Infinite => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum PotentialKind {
    /// `f(u) = kappa1 * ln((1 + u) / (1 - u))`; the tilt `-2 kappa0 u` is carried by
    /// the linear shift (see [`PotentialSpec::effective_lambda`]).
    Logarithmic { kappa0: f64, kappa1: f64 },
    /// `f(u) = kappa * u / (1 - u^2)^(p - 1)`.
    PowerSingular { kappa: f64, p: f64 },
    /// `f(u) = a * u^3`. Regular on the whole line; cross-checks only.
    SmoothDoubleWell { a: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PotentialSpec {
    pub kind: PotentialKind,
    pub lambda: f64,
}

fn one_minus_sq(u: f64) -> f64 {
    (1.0 - u) * (1.0 + u)
}

impl PotentialSpec {
    pub fn logarithmic() -> Self {
        Self::new(PotentialKind::Logarithmic { kappa0: 0.0, kappa1: 1.0 }, 0.0)
    }

    pub fn power(kappa: f64, p: f64) -> Self {
        Self::new(PotentialKind::PowerSingular { kappa, p }, 0.0)
    }

    pub fn smooth(a: f64) -> Self {
        Self::new(PotentialKind::SmoothDoubleWell { a }, 0.0)
    }

    pub fn new(kind: PotentialKind, lambda: f64) -> Self {
        Self { kind, lambda }
    }

    pub fn with_lambda(mut self, lambda: f64) -> Self {
        self.lambda = lambda;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !self.lambda.is_finite() {
            return Err(Error::InvalidParameter("lambda must be finite".into()));
        }
        match self.kind {
            PotentialKind::Logarithmic { kappa0, kappa1 } => {
                if !(kappa0 >= 0.0 && kappa1 > kappa0) {
                    return Err(Error::InvalidParameter(format!(
                        "logarithmic potential needs 0 <= kappa0 < kappa1, got kappa0 = {kappa0}, kappa1 = {kappa1}"
                    )));
                }
            }
            PotentialKind::PowerSingular { kappa, p } => {
                if !(kappa > 0.0 && p > 1.0) {
                    return Err(Error::InvalidParameter(format!(
                        "power potential needs kappa > 0 and p > 1, got kappa = {kappa}, p = {p}"
                    )));
                }
            }
            PotentialKind::SmoothDoubleWell { a } => {
                if !(a >= 0.0) {
                    return Err(Error::InvalidParameter(format!("cubic coefficient must be >= 0, got {a}")));
                }
            }
        }
        Ok(())
    }

    pub fn is_singular(&self) -> bool {
        !matches!(self.kind, PotentialKind::SmoothDoubleWell { .. })
    }

    /// Total linear shift: `lambda` plus the logarithmic tilt `2 kappa0`.
    pub fn effective_lambda(&self) -> f64 {
        match self.kind {
            PotentialKind::Logarithmic { kappa0, .. } => self.lambda + 2.0 * kappa0,
            _ => self.lambda,
        }
    }

    fn check_domain(&self, u: f64) -> Result<()> {
        if self.is_singular() && !(u.abs() < 1.0) {
            return Err(Error::Domain { value: u });
        }
        Ok(())
    }

    /// Monotone part `f(u)`.
    pub fn f(&self, u: f64) -> Result<f64> {
        self.check_domain(u)?;
        Ok(match self.kind {
            PotentialKind::Logarithmic { kappa1, .. } => kappa1 * (u.ln_1p() - (-u).ln_1p()),
            PotentialKind::PowerSingular { kappa, p } => kappa * u / one_minus_sq(u).powf(p - 1.0),
            PotentialKind::SmoothDoubleWell { a } => a * u * u * u,
        })
    }

    pub fn f_prime(&self, u: f64) -> Result<f64> {
        self.check_domain(u)?;
        Ok(match self.kind {
            PotentialKind::Logarithmic { kappa1, .. } => 2.0 * kappa1 / one_minus_sq(u),
            PotentialKind::PowerSingular { kappa, p } => {
                kappa * (1.0 + (2.0 * p - 3.0) * u * u) / one_minus_sq(u).powf(p)
            }
            PotentialKind::SmoothDoubleWell { a } => 3.0 * a * u * u,
        })
    }

    pub fn f_second(&self, u: f64) -> Result<f64> {
        self.check_domain(u)?;
        Ok(match self.kind {
            PotentialKind::Logarithmic { kappa1, .. } => 4.0 * kappa1 * u / one_minus_sq(u).powi(2),
            PotentialKind::PowerSingular { kappa, p } => {
                2.0 * kappa * (p - 1.0) * u * (3.0 + (2.0 * p - 3.0) * u * u) / one_minus_sq(u).powf(p + 1.0)
            }
            PotentialKind::SmoothDoubleWell { a } => 6.0 * a * u,
        })
    }

    /// Antiderivative `F(u) = int_0^u f`, including the limits at `u = +-1`.
    pub fn antiderivative(&self, u: f64) -> Result<Extended> {
        if self.is_singular() && !(u.abs() <= 1.0) {
            return Err(Error::Domain { value: u });
        }
        Ok(match self.kind {
            PotentialKind::Logarithmic { kappa1, .. } => {
                let a = u.abs();
                if a == 1.0 {
                    Extended::Finite(2.0 * kappa1 * std::f64::consts::LN_2)
                } else {
                    Extended::Finite(kappa1 * ((1.0 + a) * a.ln_1p() + (1.0 - a) * (-a).ln_1p()))
                }
            }
            PotentialKind::PowerSingular { kappa, p } => {
                let q = one_minus_sq(u);
                if q == 0.0 {
                    if p < 2.0 {
                        Extended::Finite(0.5 * kappa / (2.0 - p))
                    } else {
                        Extended::Infinite
                    }
                } else if (2.0 - p).abs() < 1e-12 {
                    Extended::Finite(-0.5 * kappa * q.ln())
                } else {
                    Extended::Finite(-0.5 * kappa * ((2.0 - p) * q.ln()).exp_m1() / (2.0 - p))
                }
            }
            PotentialKind::SmoothDoubleWell { a } => Extended::Finite(0.25 * a * u.powi(4)),
        })
    }

    /// `F(1)`; finite values mean the strong-singularity condition fails.
    pub fn boundary_limit(&self) -> Extended {
        self.antiderivative(1.0).expect("1 lies in the closed domain")
    }
}

/// `f_N`: the potential with linear tails beyond `|u| = 1 - 1/N`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegularizedPotential {
    pub base: PotentialSpec,
    pub n: u32,
    theta: f64,
    f_theta: f64,
    fp_theta: f64,
    ff_theta: f64,
}

impl RegularizedPotential {
    pub fn new(base: PotentialSpec, n: u32) -> Result<Self> {
        base.validate()?;
        if n < 2 {
            return Err(Error::InvalidParameter(format!("regularization index must be >= 2, got {n}")));
        }
        let theta = 1.0 - 1.0 / n as f64;
        let f_theta = base.f(theta)?;
        let fp_theta = base.f_prime(theta)?;
        let ff_theta = base.antiderivative(theta)?.finite().expect("finite inside (-1, 1)");
        Ok(Self { base, n, theta, f_theta, fp_theta, ff_theta })
    }

    /// Edge of the core interval, `1 - 1/N`.
    pub fn threshold(&self) -> f64 {
        self.theta
    }

    pub fn lambda(&self) -> f64 {
        self.base.effective_lambda()
    }

    pub fn f_n(&self, u: f64) -> f64 {
        let a = u.abs();
        if a <= self.theta {
            self.base.f(u).expect("core interval")
        } else {
            u.signum() * (self.f_theta + self.fp_theta * (a - self.theta))
        }
    }

    pub fn f_n_prime(&self, u: f64) -> f64 {
        if u.abs() <= self.theta {
            self.base.f_prime(u).expect("core interval")
        } else {
            self.fp_theta
        }
    }

    /// `F_N` with the quadratic tails integrated in closed form.
    pub fn big_f_n(&self, u: f64) -> f64 {
        let a = u.abs();
        if a <= self.theta {
            self.base.antiderivative(u).expect("core interval").finite().expect("finite")
        } else {
            let d = a - self.theta;
            self.ff_theta + self.f_theta * d + 0.5 * self.fp_theta * d * d
        }
    }

    /// `f~_N(u) = f_N(u) - lambda u`.
    pub fn f_tilde(&self, u: f64) -> f64 {
        self.f_n(u) - self.lambda() * u
    }

    /// `F~_N(u) = F_N(u) - lambda u^2 / 2`.
    pub fn big_f_tilde(&self, u: f64) -> f64 {
        self.big_f_n(u) - 0.5 * self.lambda() * u * u
    }

    /// True when `lambda >= min f_N'`, i.e. when the shifted potential is
    /// non-convex near the origin.
    pub fn lambda_exceeds_convexity(&self) -> bool {
        self.lambda() >= self.f_n_prime(0.0)
    }
}

/// `g(z) = z + g0(z)` with `g0` bounded together with two derivatives.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub enum BoundaryNonlinearity {
    /// `g0 = 0`.
    #[default]
    Linear,
    /// `g0(z) = amp * tanh(z)`.
    Tanh { amp: f64 },
    /// `g0(z) = b`, a constant preferential attraction.
    Shift { b: f64 },
}

impl BoundaryNonlinearity {
    pub fn g(&self, z: f64) -> f64 {
        z + self.g0(z)
    }

    pub fn g0(&self, z: f64) -> f64 {
        match *self {
            BoundaryNonlinearity::Linear => 0.0,
            BoundaryNonlinearity::Tanh { amp } => amp * z.tanh(),
            BoundaryNonlinearity::Shift { b } => b,
        }
    }

    pub fn g0_prime(&self, z: f64) -> f64 {
        match *self {
            BoundaryNonlinearity::Tanh { amp } => amp / z.cosh().powi(2),
            _ => 0.0,
        }
    }

    pub fn g0_second(&self, z: f64) -> f64 {
        match *self {
            BoundaryNonlinearity::Tanh { amp } => -2.0 * amp * z.tanh() / z.cosh().powi(2),
            _ => 0.0,
        }
    }

    /// `G(z) = z^2 / 2 + G0(z)`, `G(0) = 0`.
    pub fn big_g(&self, z: f64) -> f64 {
        let g0 = match *self {
            BoundaryNonlinearity::Linear => 0.0,
            // ln cosh z, written to avoid overflow for large |z|
            BoundaryNonlinearity::Tanh { amp } => {
                let a = z.abs();
                amp * (a + (-2.0 * a).exp().ln_1p() - std::f64::consts::LN_2)
            }
            BoundaryNonlinearity::Shift { b } => b * z,
        };
        0.5 * z * z + g0
    }

    /// Sampled sup-norms of `g0, g0', g0''` over `[-radius, radius]`.
    pub fn sampled_bounds(&self, radius: f64, samples: usize) -> [f64; 3] {
        let mut out = [0.0f64; 3];
        for k in 0..=samples {
            let z = -radius + 2.0 * radius * k as f64 / samples as f64;
            out[0] = out[0].max(self.g0(z).abs());
            out[1] = out[1].max(self.g0_prime(z).abs());
            out[2] = out[2].max(self.g0_second(z).abs());
        }
        out
    }
}

/// `g(-1) + eps <= h2(x) <= g(1) - eps` at every boundary degree of freedom.
pub fn check_sign_condition(g: &BoundaryNonlinearity, h2: &[f64], eps: f64) -> bool {
    let lo = g.g(-1.0) + eps;
    let hi = g.g(1.0) - eps;
    h2.iter().all(|&v| lo <= v && v <= hi)
}

/// Outcome of testing `kappa1 / (1-u^2)^(p-1) <= f(u)/u <= kappa2 / (1-u^2)^M` with `p > 2`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SeparationConditionReport {
    pub p: Option<f64>,
    pub kappa1: Option<f64>,
    pub kappa2: Option<f64>,
    pub m: Option<f64>,
    pub satisfied: bool,
    /// `f(u) (1 - u^2) / u` at `u = 1 - 10^-k`, `k = 1..=12`.
    pub sampled_ratio: Vec<f64>,
}

/// Sample points `1 - 10^-k`, `k = 1..=12`, used by the asymptotic checks.
pub fn singular_samples() -> impl Iterator<Item = f64> {
    (1..=12).map(|k| 1.0 - 10f64.powi(-k))
}

pub fn check_separation_condition(spec: &PotentialSpec) -> SeparationConditionReport {
    let sampled_ratio: Vec<f64> = if spec.is_singular() {
        singular_samples()
            .map(|u| spec.f(u).map(|f| f * one_minus_sq(u) / u).unwrap_or(f64::NAN))
            .collect()
    } else {
        Vec::new()
    };
    match spec.kind {
        PotentialKind::PowerSingular { kappa, p } => SeparationConditionReport {
            p: Some(p),
            kappa1: Some(kappa),
            kappa2: Some(kappa),
            m: Some(p - 1.0),
            satisfied: p > 2.0,
            sampled_ratio,
        },
        PotentialKind::Logarithmic { .. } => {
            // f(u)(1-u^2)/u -> 0 along the samples: no lower bound kappa1/(1-u^2)^(p-1) with p > 2.
            SeparationConditionReport { p: None, kappa1: None, kappa2: None, m: None, satisfied: false, sampled_ratio }
        }
        PotentialKind::SmoothDoubleWell { .. } => {
            SeparationConditionReport { p: None, kappa1: None, kappa2: None, m: None, satisfied: false, sampled_ratio }
        }
    }
}

/// Sampled check of the structural assumptions on `f`: oddness, `f(0) = 0`,
/// monotonicity, convexity of `|f|` and blow-up of `f'` at the endpoints.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StructureReport {
    pub vanishes_at_zero: bool,
    pub odd: bool,
    pub monotone: bool,
    pub convex_modulus: bool,
    pub derivative_blows_up: bool,
}

impl StructureReport {
    pub fn all(&self) -> bool {
        self.vanishes_at_zero && self.odd && self.monotone && self.convex_modulus && self.derivative_blows_up
    }
}

pub fn check_structure(spec: &PotentialSpec, samples: usize) -> Result<StructureReport> {
    let mut odd = true;
    let mut monotone = true;
    let mut convex_modulus = true;
    for k in 1..samples {
        let u = -1.0 + 2.0 * k as f64 / samples as f64;
        let fu = spec.f(u)?;
        let fm = spec.f(-u)?;
        odd &= (fu + fm).abs() <= 1e-12 * (1.0 + fu.abs());
        monotone &= spec.f_prime(u)? >= 0.0;
        if u != 0.0 {
            convex_modulus &= u.signum() * spec.f_second(u)? >= 0.0;
        }
    }
    let derivs: Vec<f64> = singular_samples().map(|u| spec.f_prime(u)).collect::<Result<_>>()?;
    let derivative_blows_up = derivs.windows(2).all(|w| w[1] > w[0]);
    Ok(StructureReport { vanishes_at_zero: spec.f(0.0)? == 0.0, odd, monotone, convex_modulus, derivative_blows_up })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn f_examples() {
        let log = PotentialSpec::logarithmic();
        assert_eq!(log.f(0.0).unwrap(), 0.0);
        assert_relative_eq!(log.f(0.5).unwrap(), 3f64.ln(), max_relative = 1e-14);
        assert_relative_eq!(PotentialSpec::power(1.0, 3.0).f(0.5).unwrap(), 0.5 / 0.5625, max_relative = 1e-14);
        assert!(matches!(log.f(1.0), Err(Error::Domain { .. })));
        assert!(matches!(log.f(-1.5), Err(Error::Domain { .. })));
    }

    #[test]
    fn antiderivative_examples() {
        let log = PotentialSpec::logarithmic();
        assert_eq!(log.antiderivative(0.0).unwrap(), Extended::Finite(0.0));
        let v = log.antiderivative(0.5).unwrap().finite().unwrap();
        assert_relative_eq!(v, 0.261_624_071_882_273_9, max_relative = 1e-14);
        assert_relative_eq!(log.antiderivative(1.0).unwrap().finite().unwrap(), 1.386_294_361_119_890_6);
        assert_eq!(log.antiderivative(-1.0).unwrap(), log.antiderivative(1.0).unwrap());
        let pow = PotentialSpec::power(1.0, 3.0);
        assert_eq!(pow.antiderivative(1.0).unwrap(), Extended::Infinite);
        assert_relative_eq!(pow.antiderivative(0.5).unwrap().finite().unwrap(), 0.25 / (2.0 * 0.75));
        // p < 2 keeps F(1) finite, p = 2 is logarithmic
        assert!(PotentialSpec::power(1.0, 1.5).boundary_limit().is_finite());
        let p2 = PotentialSpec::power(2.0, 2.0);
        assert_relative_eq!(p2.antiderivative(0.5).unwrap().finite().unwrap(), -(0.75f64).ln());
        assert_eq!(p2.boundary_limit(), Extended::Infinite);
    }

    #[test]
    fn regularized_examples() {
        let reg = RegularizedPotential::new(PotentialSpec::logarithmic(), 2).unwrap();
        assert_relative_eq!(reg.f_n(0.25), (5.0f64 / 3.0).ln(), max_relative = 1e-14);
        assert_relative_eq!(reg.f_n(0.75), 1.765_278_955_334_776_4, max_relative = 1e-14);
        assert_eq!(reg.f_n(-0.75), -reg.f_n(0.75));
        let pow = RegularizedPotential::new(PotentialSpec::power(1.0, 3.0), 2).unwrap();
        assert_eq!(pow.f_n(-0.75), -pow.f_n(0.75));
        assert!(RegularizedPotential::new(PotentialSpec::logarithmic(), 1).is_err());
    }

    #[test]
    fn tails_are_continuous() {
        for base in [PotentialSpec::logarithmic(), PotentialSpec::power(1.0, 3.0), PotentialSpec::power(0.5, 1.5)] {
            let reg = RegularizedPotential::new(base, 16).unwrap();
            let t = reg.threshold();
            for (a, b) in [(t - 1e-13, t + 1e-13), (-t + 1e-13, -t - 1e-13)] {
                assert!((reg.f_n(a) - reg.f_n(b)).abs() < 1e-9);
                assert!((reg.big_f_n(a) - reg.big_f_n(b)).abs() < 1e-9);
                assert!((reg.f_n_prime(a) - reg.f_n_prime(b)).abs() < 1e-8 * reg.f_n_prime(b));
            }
        }
    }

    #[test]
    fn sign_condition_examples() {
        let lin = BoundaryNonlinearity::Linear;
        assert!(check_sign_condition(&lin, &[0.0, 0.0], 0.5));
        assert!(!check_sign_condition(&lin, &[2.0, 2.0], 0.1));
        let th = BoundaryNonlinearity::Tanh { amp: 0.5 };
        assert_relative_eq!(th.g(1.0) - 0.05, 1.330_797_077_977_882_4, max_relative = 1e-14);
        assert!(check_sign_condition(&th, &[1.2, 1.2], 0.05));
        assert_eq!(lin.g(0.0), lin.g0(0.0));
        assert_eq!(th.g(0.0), th.g0(0.0));
    }

    #[test]
    fn boundary_primitive_matches_g() {
        for g in [BoundaryNonlinearity::Linear, BoundaryNonlinearity::Tanh { amp: 0.7 }, BoundaryNonlinearity::Shift { b: -0.3 }] {
            assert_eq!(g.big_g(0.0), 0.0);
            for &z in &[-3.0, -0.4, 0.2, 1.0, 2.5] {
                let h = 1e-5;
                let fd = (g.big_g(z + h) - g.big_g(z - h)) / (2.0 * h);
                assert!((fd - g.g(z)).abs() < 1e-8, "{g:?} at {z}");
            }
            let b = g.sampled_bounds(50.0, 10_000);
            assert!(b.iter().all(|v| v.is_finite() && *v <= 1.0));
        }
    }

    #[test]
    fn separation_condition_examples() {
        let r = check_separation_condition(&PotentialSpec::power(1.0, 3.0));
        assert!(r.satisfied);
        assert_eq!(r.p, Some(3.0));
        assert_eq!(r.m, Some(2.0));
        assert!(!check_separation_condition(&PotentialSpec::power(1.0, 1.5)).satisfied);
        let log = check_separation_condition(&PotentialSpec::logarithmic());
        assert!(!log.satisfied);
        assert!(log.sampled_ratio.windows(2).all(|w| w[1] < w[0]));
        assert!(*log.sampled_ratio.last().unwrap() < 1e-10);
    }

    #[test]
    fn structural_assumptions_hold_for_singular_kinds() {
        for spec in [
            PotentialSpec::logarithmic(),
            PotentialSpec::new(PotentialKind::Logarithmic { kappa0: 0.3, kappa1: 2.0 }, 0.0),
            PotentialSpec::power(1.0, 3.0),
            PotentialSpec::power(2.0, 1.2),
        ] {
            assert!(check_structure(&spec, 2000).unwrap().all(), "{spec:?}");
        }
        let smooth = check_structure(&PotentialSpec::smooth(1.0), 2000).unwrap();
        assert!(!smooth.derivative_blows_up || smooth.all());
    }

    #[test]
    fn tilt_folds_into_lambda() {
        let spec = PotentialSpec::new(PotentialKind::Logarithmic { kappa0: 0.25, kappa1: 1.0 }, 1.0);
        assert_eq!(spec.effective_lambda(), 1.5);
        let bad = PotentialSpec::new(PotentialKind::Logarithmic { kappa0: 1.0, kappa1: 1.0 }, 0.0);
        assert!(bad.validate().is_err());
    }
}
