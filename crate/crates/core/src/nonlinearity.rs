//! The nonlinearity `g`, its primitive `G`, the sign split `G = G₊ − G₋`,
//! the ramp-regularized negative part `G₋^ε`, and the exponent bookkeeping
//! that ties them to the dimension `N` and the `q`-Laplacian exponent.
//!
//! The built-in family is `g(s) = α s ln s² + μ |s|^{p-2} s` (pure power is
//! the `α = 0` member). For it every primitive has a closed form; the only
//! numerical step is locating the sign changes of `g` on `(0, ∞)`, which is
//! done once at construction.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{aitken, bisect, integrate_adaptive};

/// Below this magnitude `g` and the primitives evaluate to exactly zero.
const ZERO_CUTOFF: f64 = 1e-300;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NonlinearityKind {
    LogPower,
    PurePower,
    Custom,
}

impl fmt::Display for NonlinearityKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            NonlinearityKind::LogPower => "log_power",
            NonlinearityKind::PurePower => "pure_power",
            NonlinearityKind::Custom => "custom",
        })
    }
}

impl std::str::FromStr for NonlinearityKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "log_power" | "log" => Ok(NonlinearityKind::LogPower),
            "pure_power" | "power" => Ok(NonlinearityKind::PurePower),
            "custom" => Ok(NonlinearityKind::Custom),
            other => Err(Error::InvalidNonlinearity(format!(
                "unknown kind `{other}` (expected log_power or pure_power)"
            ))),
        }
    }
}

/// Parameters of the nonlinearity together with the problem exponents.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NonlinearitySpec {
    pub kind: NonlinearityKind,
    /// Coefficient of `s ln s²`.
    pub alpha: f64,
    /// Coefficient of the power term.
    pub mu: f64,
    /// Power exponent; only required when `mu != 0`.
    pub p: Option<f64>,
    /// Space dimension `N`.
    #[serde(rename = "N")]
    pub dim: usize,
    /// Exponent of the `q`-Laplacian.
    pub q: f64,
}

impl NonlinearitySpec {
    pub fn log_power(alpha: f64, mu: f64, p: Option<f64>, dim: usize, q: f64) -> Self {
        NonlinearitySpec { kind: NonlinearityKind::LogPower, alpha, mu, p, dim, q }
    }

    pub fn pure_power(mu: f64, p: f64, dim: usize, q: f64) -> Self {
        NonlinearitySpec { kind: NonlinearityKind::PurePower, alpha: 0.0, mu, p: Some(p), dim, q }
    }

    pub fn validate(&self) -> Result<Exponents> {
        let exps = critical_exponents(self.dim, self.q)?;
        for (name, v) in [("alpha", self.alpha), ("mu", self.mu)] {
            if !v.is_finite() {
                return Err(Error::InvalidNonlinearity(format!("{name} must be finite")));
            }
        }
        match self.kind {
            NonlinearityKind::PurePower if self.alpha != 0.0 => {
                return Err(Error::InvalidNonlinearity("pure_power requires alpha = 0".into()));
            }
            NonlinearityKind::PurePower if self.p.is_none() => {
                return Err(Error::InvalidNonlinearity("pure_power requires p".into()));
            }
            _ => {}
        }
        if self.kind != NonlinearityKind::Custom && (self.mu != 0.0 || self.kind == NonlinearityKind::PurePower) {
            let p = self
                .p
                .ok_or_else(|| Error::InvalidNonlinearity("p is required when mu != 0".into()))?;
            if !(p.is_finite() && p > 2.0) {
                return Err(Error::InvalidNonlinearity(format!("p = {p} must satisfy p > 2")));
            }
            if self.dim >= 3 && p >= exps.q_prime {
                return Err(Error::InvalidNonlinearity(format!(
                    "p = {p} violates the growth bound p < q' = {}",
                    exps.q_prime
                )));
            }
        }
        Ok(exps)
    }
}

/// Critical and interpolation exponents for a given `(N, q)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Exponents {
    #[serde(rename = "N")]
    pub dim: usize,
    pub q: f64,
    /// `2* = 2N/(N-2)`, infinite for `N = 2`.
    pub two_star: f64,
    /// `q* = qN/(N-q)`.
    pub q_star: f64,
    /// `max{2*, q*}`.
    pub q_prime: f64,
    /// `(1 + 2/N) max{2, q}`.
    pub q_bar: f64,
    /// `(1 + 2/N) min{2, q}`.
    pub q_tilde: f64,
}

impl Exponents {
    /// `δ_p = N(p-2)/(2p)`.
    pub fn delta(&self, p: f64) -> f64 {
        self.dim as f64 * (p - 2.0) / (2.0 * p)
    }

    /// `ν_{p,q} = Nq(p-2) / (p [Nq - 2(N-q)])`.
    pub fn nu(&self, p: f64) -> f64 {
        let n = self.dim as f64;
        n * self.q * (p - 2.0) / (p * (n * self.q - 2.0 * (n - self.q)))
    }
}

/// Admissibility gate: `2N/(N+2) < q < 2` with `N >= 2`, or `2 < q < N` with `N >= 3`.
pub fn critical_exponents(dim: usize, q: f64) -> Result<Exponents> {
    if dim < 2 {
        return Err(Error::Inadmissible(format!("N = {dim} must be at least 2")));
    }
    if !q.is_finite() {
        return Err(Error::Inadmissible("q must be finite".into()));
    }
    let n = dim as f64;
    let lower = 2.0 * n / (n + 2.0);
    if q < 2.0 {
        if q <= lower {
            return Err(Error::Inadmissible(format!(
                "q = {q} must exceed 2N/(N+2) = {lower} for N = {dim}"
            )));
        }
    } else if q == 2.0 {
        return Err(Error::Inadmissible("q = 2 is excluded (need q < 2 or 2 < q < N)".into()));
    } else if dim < 3 || q >= n {
        return Err(Error::Inadmissible(format!(
            "q = {q} > 2 requires N >= 3 and q < N (got N = {dim})"
        )));
    }
    let two_star = if dim > 2 { 2.0 * n / (n - 2.0) } else { f64::INFINITY };
    let q_star = q * n / (n - q);
    Ok(Exponents {
        dim,
        q,
        two_star,
        q_star,
        q_prime: two_star.max(q_star),
        q_bar: (1.0 + 2.0 / n) * q.max(2.0),
        q_tilde: (1.0 + 2.0 / n) * q.min(2.0),
    })
}

/// Ramp parameter `ε ∈ (0, 1)`.
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Eps(f64);

impl Eps {
    pub fn new(eps: f64) -> Result<Self> {
        if eps > 0.0 && eps < 1.0 {
            Ok(Eps(eps))
        } else {
            Err(Error::InvalidArgument(format!("eps = {eps} must lie in (0, 1)")))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }

    /// `φ_ε(s) = min(|s|/ε, 1)`.
    #[inline]
    pub fn phi(self, s: f64) -> f64 {
        (s.abs() / self.0).min(1.0)
    }
}

/// Checked `φ_ε(s)`.
pub fn phi_eps(eps: f64, s: f64) -> Result<f64> {
    if !s.is_finite() {
        return Err(Error::NonFinite("s"));
    }
    Ok(Eps::new(eps)?.phi(s))
}

pub type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

#[derive(Clone)]
struct CustomFns {
    g: ScalarFn,
    primitive: ScalarFn,
}

/// A validated nonlinearity ready for pointwise evaluation.
#[derive(Clone)]
pub struct Nonlinearity {
    spec: NonlinearitySpec,
    exponents: Exponents,
    custom: Option<CustomFns>,
    /// Sign changes of `g` on `(0, ∞)`.
    pos_roots: Vec<f64>,
    /// Magnitudes of the sign changes of `g` on `(-∞, 0)` (custom only).
    neg_roots: Vec<f64>,
}

impl fmt::Debug for Nonlinearity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Nonlinearity")
            .field("spec", &self.spec)
            .field("pos_roots", &self.pos_roots)
            .field("neg_roots", &self.neg_roots)
            .finish()
    }
}

/// Ln-spaced scan for sign changes of `f` on `[lo, hi]`, refined by bisection.
fn sign_changes<F: Fn(f64) -> f64>(f: F, lo: f64, hi: f64, count: usize, extra: &[f64]) -> Result<Vec<f64>> {
    let (llo, lhi) = (lo.ln(), hi.ln());
    let mut pts: Vec<f64> = (0..=count)
        .map(|i| (llo + (lhi - llo) * i as f64 / count as f64).exp())
        .chain(extra.iter().copied().filter(|x| *x > lo && *x < hi))
        .collect();
    pts.sort_by(f64::total_cmp);
    pts.dedup();
    let mut roots = Vec::new();
    let mut prev = (pts[0], f(pts[0]));
    for &x in &pts[1..] {
        let fx = f(x);
        if fx == 0.0 {
            // An exact zero is a sign change only if the sign actually flips.
            prev = (x, prev.1);
            roots.push(x);
            continue;
        }
        if prev.1 != 0.0 && fx.signum() != prev.1.signum() {
            roots.push(bisect(&f, prev.0, x, 1e-14)?);
        }
        prev = (x, fx);
    }
    roots.dedup_by(|a, b| (*a - *b).abs() <= 1e-13 * b.abs());
    Ok(roots)
}

impl Nonlinearity {
    pub fn new(spec: NonlinearitySpec) -> Result<Self> {
        if spec.kind == NonlinearityKind::Custom {
            return Err(Error::InvalidNonlinearity(
                "custom nonlinearities are built with Nonlinearity::custom".into(),
            ));
        }
        let exponents = spec.validate()?;
        let (alpha, mu) = (spec.alpha, spec.mu);
        let p = spec.p.unwrap_or(3.0);
        let mut extra = Vec::new();
        if alpha != 0.0 && mu != 0.0 {
            // Critical point of g(t)/t, so that a narrow pair of roots is never skipped.
            let t = (2.0 * alpha / (-mu * (p - 2.0))).abs().powf(1.0 / (p - 2.0));
            extra.push(t);
        }
        if alpha != 0.0 && mu == 0.0 {
            extra.push(1.0);
        }
        let ratio = |t: f64| 2.0 * alpha * t.ln() + if mu != 0.0 { mu * t.powf(p - 2.0) } else { 0.0 };
        let pos_roots = if alpha == 0.0 {
            Vec::new()
        } else if mu == 0.0 {
            vec![1.0]
        } else {
            sign_changes(ratio, 1e-150, 1e150, 6000, &extra)?
        };
        Ok(Nonlinearity { spec, exponents, custom: None, pos_roots, neg_roots: Vec::new() })
    }

    /// A user-supplied `g` with its primitive `G` (`G(0) = 0`). The split
    /// `G₊/G₋` and `G₋^ε` are computed by adaptive quadrature.
    pub fn custom(dim: usize, q: f64, g: ScalarFn, primitive: ScalarFn) -> Result<Self> {
        let spec = NonlinearitySpec { kind: NonlinearityKind::Custom, alpha: 0.0, mu: 0.0, p: None, dim, q };
        let exponents = spec.validate()?;
        if g(0.0) != 0.0 {
            return Err(Error::InvalidNonlinearity("custom g must vanish at 0".into()));
        }
        let pos_roots = sign_changes(|t| g(t), 1e-12, 1e6, 4000, &[])?;
        let neg_roots = sign_changes(|t| g(-t), 1e-12, 1e6, 4000, &[])?;
        Ok(Nonlinearity {
            spec,
            exponents,
            custom: Some(CustomFns { g, primitive }),
            pos_roots,
            neg_roots,
        })
    }

    pub fn spec(&self) -> &NonlinearitySpec {
        &self.spec
    }

    pub fn exponents(&self) -> &Exponents {
        &self.exponents
    }

    pub fn dim(&self) -> usize {
        self.spec.dim
    }

    /// Positive sign changes of `g`.
    pub fn positive_roots(&self) -> &[f64] {
        &self.pos_roots
    }

    /// `g(s)`.
    #[inline]
    pub fn g(&self, s: f64) -> f64 {
        if let Some(c) = &self.custom {
            return (c.g)(s);
        }
        let a = s.abs();
        if a < ZERO_CUTOFF {
            return 0.0;
        }
        let mut v = 0.0;
        if self.spec.alpha != 0.0 {
            v += 2.0 * self.spec.alpha * s * a.ln();
        }
        if self.spec.mu != 0.0 {
            v += self.spec.mu * a.powf(self.spec.p.unwrap_or(3.0) - 2.0) * s;
        }
        v
    }

    /// `G(s) = ∫_0^s g`.
    #[inline]
    pub fn primitive(&self, s: f64) -> f64 {
        if let Some(c) = &self.custom {
            return (c.primitive)(s);
        }
        let a = s.abs();
        if a < ZERO_CUTOFF {
            return 0.0;
        }
        let mut v = 0.0;
        if self.spec.alpha != 0.0 {
            let s2 = s * s;
            v += 0.5 * self.spec.alpha * s2 * (2.0 * a.ln() - 1.0);
        }
        if self.spec.mu != 0.0 {
            let p = self.spec.p.unwrap_or(3.0);
            v += self.spec.mu / p * a.powf(p);
        }
        v
    }

    /// `∫_0^t τ g(τ) dτ` for `t >= 0` (closed form, built-in family only).
    #[inline]
    fn moment(&self, t: f64) -> f64 {
        if t < ZERO_CUTOFF {
            return 0.0;
        }
        let mut v = 0.0;
        let t3 = t * t * t;
        if self.spec.alpha != 0.0 {
            v += self.spec.alpha * t3 * (2.0 * t.ln() / 3.0 - 2.0 / 9.0);
        }
        if self.spec.mu != 0.0 {
            let p = self.spec.p.unwrap_or(3.0);
            v += self.spec.mu * t.powf(p + 1.0) / (p + 1.0);
        }
        v
    }

    /// Pointwise split `(g₊(s), g₋(s))` with `g₊ = G₊'` and `g₋ = g₊ - g`.
    #[inline]
    pub fn split(&self, s: f64) -> (f64, f64) {
        let g = self.g(s);
        let gp = if s >= 0.0 { g.max(0.0) } else { g.min(0.0) };
        (gp, gp - g)
    }

    /// Pieces of constant sign of `g` between 0 and `|s|` on the side of `s`,
    /// as `(a, b, sign)` with `0 <= a < b <= |s|` measured in magnitude.
    fn pieces(&self, s: f64) -> Pieces<'_> {
        let odd = self.custom.is_none();
        let (roots, side) = if s >= 0.0 || odd { (&self.pos_roots[..], 1.0) } else { (&self.neg_roots[..], -1.0) };
        Pieces { nl: self, roots, side, mag: s.abs(), lo: 0.0, next: 0 }
    }

    fn custom_integral(&self, f: impl Fn(f64) -> f64, a: f64, b: f64) -> Result<f64> {
        integrate_adaptive(f, a, b, 1e-14, 1e-12)
    }

    /// `G₊(s)`, checked variant reporting quadrature failures (custom `g`).
    pub fn try_primitive_plus(&self, s: f64) -> Result<f64> {
        if !s.is_finite() {
            return Err(Error::NonFinite("s"));
        }
        if s.abs() < ZERO_CUTOFF {
            return Ok(0.0);
        }
        match &self.custom {
            None => {
                let mut v = 0.0;
                for (a, b, sign) in self.pieces(s) {
                    if sign > 0.0 {
                        v += self.primitive(b) - self.primitive(a);
                    }
                }
                Ok(v)
            }
            Some(_) => {
                let mut v = 0.0;
                if s > 0.0 {
                    for (a, b, sign) in self.pieces(s) {
                        if sign > 0.0 {
                            v += self.custom_integral(|t| self.g(t), a, b)?;
                        }
                    }
                } else {
                    // ∫_s^0 max(-g, 0) = Σ over pieces where g < 0 of -∫g.
                    for (a, b, sign) in self.pieces(s) {
                        // `sign` already reports sign(g) * side = -sign(g) on this side.
                        if sign > 0.0 {
                            v += self.custom_integral(|t| -self.g(-t), a, b)?;
                        }
                    }
                }
                Ok(v)
            }
        }
    }

    /// `G₊(s)`; panics only if quadrature fails for a custom `g` (use
    /// [`Nonlinearity::try_primitive_plus`] to handle that case).
    #[inline]
    pub fn primitive_plus(&self, s: f64) -> f64 {
        self.try_primitive_plus(s).expect("G+ quadrature")
    }

    /// `G₋(s) = G₊(s) - G(s) >= 0`.
    pub fn primitive_minus(&self, s: f64) -> f64 {
        if self.custom.is_none() {
            if s.abs() < ZERO_CUTOFF {
                return 0.0;
            }
            let mut v = 0.0;
            for (a, b, sign) in self.pieces(s) {
                if sign < 0.0 {
                    v -= self.primitive(b) - self.primitive(a);
                }
            }
            return v;
        }
        self.primitive_plus(s) - self.primitive(s)
    }

    /// `G₋^ε(s) = ∫_0^s φ_ε(t) g₋(t) dt`, checked variant.
    pub fn try_primitive_minus_eps(&self, eps: Eps, s: f64) -> Result<f64> {
        if !s.is_finite() {
            return Err(Error::NonFinite("s"));
        }
        if s.abs() < ZERO_CUTOFF {
            return Ok(0.0);
        }
        let e = eps.value();
        let mut v = 0.0;
        for (a, b, sign) in self.pieces(s) {
            if sign >= 0.0 {
                continue;
            }
            match &self.custom {
                None => {
                    // On this piece g <= 0 and g₋ = -g.
                    if a < e {
                        let top = b.min(e);
                        v -= (self.moment(top) - self.moment(a)) / e;
                    }
                    if b > e {
                        let bottom = a.max(e);
                        v -= self.primitive(b) - self.primitive(bottom);
                    }
                }
                Some(_) => {
                    let side = if s >= 0.0 { 1.0 } else { -1.0 };
                    // Magnitude-space integrand: φ_ε(t) · |g(side·t)|.
                    let f = |t: f64| eps.phi(t) * self.g(side * t).abs();
                    if a < e {
                        v += self.custom_integral(f, a, b.min(e))?;
                    }
                    if b > e {
                        v += self.custom_integral(f, a.max(e), b)?;
                    }
                }
            }
        }
        Ok(v)
    }

    #[inline]
    pub fn primitive_minus_eps(&self, eps: Eps, s: f64) -> f64 {
        self.try_primitive_minus_eps(eps, s).expect("G-eps quadrature")
    }

    /// `G^ε = G₊ - G₋^ε >= G`.
    #[inline]
    pub fn primitive_eps(&self, eps: Eps, s: f64) -> f64 {
        self.primitive_plus(s) - self.primitive_minus_eps(eps, s)
    }

    /// `g^ε(s) = g₊(s) - φ_ε(s) g₋(s)`, the derivative of `G^ε`.
    #[inline]
    pub fn g_eps(&self, eps: Eps, s: f64) -> f64 {
        let (gp, gm) = self.split(s);
        gp - eps.phi(s) * gm
    }

    /// `g(a + δ) - g(a)` for the built-in family, assuming `a` and `a + δ`
    /// share a sign.
    fn g_increment(&self, a: f64, delta: f64) -> f64 {
        let b = a + delta;
        let x = delta / a;
        let mut v = 0.0;
        if self.spec.alpha != 0.0 {
            v += self.spec.alpha * (2.0 * delta * b.abs().ln() + 2.0 * a * x.ln_1p());
        }
        if self.spec.mu != 0.0 {
            let p = self.spec.p.unwrap_or(3.0);
            v += self.spec.mu * a.abs().powf(p - 2.0) * a * ((p - 1.0) * x.ln_1p()).exp_m1();
        }
        v
    }

    /// `g^ε(a + δ) - g^ε(a)` without cancellation, or `None` when the two
    /// points are not on one smooth piece of `g^ε` (or `g` is custom).
    pub fn effective_g_increment(&self, eps: Option<Eps>, a: f64, delta: f64) -> Option<f64> {
        if self.custom.is_some() {
            return None;
        }
        let b = a + delta;
        if a == 0.0 || b == 0.0 || (a > 0.0) != (b > 0.0) {
            return None;
        }
        let (lo, hi) = (a.abs().min(b.abs()), a.abs().max(b.abs()));
        if self.pos_roots.iter().any(|&r| r > lo && r < hi) {
            return None;
        }
        let inc = self.g_increment(a, delta);
        let Some(e) = eps else { return Some(inc) };
        let ev = e.value();
        if lo < ev && hi > ev {
            return None;
        }
        let mid = 0.5 * (a + b);
        if hi <= ev && self.g(mid) * mid < 0.0 {
            // Ramp piece: g^ε(t) = |t| g(t) / ε.
            let sign = a.signum();
            return Some((b.abs() * inc + sign * delta * self.g(a)) / ev);
        }
        Some(inc)
    }

    /// Regularized or plain primitive: `G^ε` when `eps` is given, `G` otherwise.
    #[inline]
    pub fn effective_primitive(&self, eps: Option<Eps>, s: f64) -> f64 {
        match eps {
            Some(e) => self.primitive_eps(e, s),
            None => self.primitive(s),
        }
    }

    /// Regularized or plain derivative.
    #[inline]
    pub fn effective_g(&self, eps: Option<Eps>, s: f64) -> f64 {
        match eps {
            Some(e) => self.g_eps(e, s),
            None => self.g(s),
        }
    }

    /// Audit of the standing assumptions on `g` by sampling.
    pub fn check_assumptions(&self, sample_count: usize) -> AssumptionReport {
        AssumptionReport::evaluate(self, sample_count.max(8))
    }
}

struct Pieces<'a> {
    nl: &'a Nonlinearity,
    roots: &'a [f64],
    side: f64,
    mag: f64,
    lo: f64,
    next: usize,
}

impl Iterator for Pieces<'_> {
    type Item = (f64, f64, f64);

    fn next(&mut self) -> Option<Self::Item> {
        while self.lo < self.mag {
            let hi = match self.roots.get(self.next) {
                Some(&r) if r < self.mag => r,
                _ => self.mag,
            };
            self.next += 1;
            let a = self.lo;
            self.lo = hi;
            if hi > a {
                let mid = 0.5 * (a + hi);
                return Some((a, hi, self.nl.g(self.side * mid).signum() * self.side));
            }
        }
        None
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Pass,
    Fail,
    Indeterminate,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AssumptionCheck {
    pub name: String,
    pub verdict: Verdict,
    /// Sample at which the decisive value was observed (for `g4`: the witness `ξ₀`).
    pub witness_s: Option<f64>,
    pub estimate: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AssumptionReport {
    pub checks: Vec<AssumptionCheck>,
}

/// Absolute level below which an extrapolated limit counts as zero.
const LIMIT_ZERO_TOL: f64 = 1e-6;

/// Verdict for `lim f = 0` from four samples one decade apart.
fn limit_is_zero(f: [f64; 4]) -> (Verdict, f64) {
    if f.iter().any(|v| !v.is_finite()) {
        return (Verdict::Indeterminate, f64::NAN);
    }
    let l1 = aitken(f[0], f[1], f[2]);
    let l2 = aitken(f[1], f[2], f[3]);
    let scale = l1.abs().max(l2.abs());
    if scale <= LIMIT_ZERO_TOL {
        return (Verdict::Pass, l2);
    }
    if (l1 - l2).abs() > 0.1 * scale {
        return (Verdict::Indeterminate, l2);
    }
    (Verdict::Fail, l2)
}

impl AssumptionReport {
    fn evaluate(nl: &Nonlinearity, samples: usize) -> Self {
        let exps = *nl.exponents();
        let odd = nl.custom.is_none();
        let sides: &[f64] = if odd { &[1.0] } else { &[1.0, -1.0] };
        let mut checks = Vec::new();

        // g0: continuity at 0 and g(0) = 0.
        {
            let tiny = 1e-12;
            let worst = sides.iter().map(|sd| nl.g(sd * tiny).abs()).fold(0.0, f64::max);
            let ok = nl.g(0.0) == 0.0 && worst < LIMIT_ZERO_TOL;
            checks.push(AssumptionCheck {
                name: "g0".into(),
                verdict: if ok { Verdict::Pass } else { Verdict::Fail },
                witness_s: Some(tiny),
                estimate: Some(worst),
            });
        }

        // g1: G₊(s)/|s|² → 0 as s → 0.
        checks.push(Self::limit_check(nl, "g1", sides, [1e-4, 1e-5, 1e-6, 1e-7], |nl, s| {
            nl.try_primitive_plus(s).map(|v| v / (s * s)).unwrap_or(f64::NAN)
        }));

        // g2: growth bound at infinity.
        if exps.dim >= 3 {
            let qp = exps.q_prime;
            let mut verdict = Verdict::Pass;
            let mut est = 0.0;
            let mut witness = None;
            for &sd in sides {
                let f: Vec<f64> = [1e3, 1e4, 1e5, 1e6]
                    .iter()
                    .map(|&s| nl.g(sd * s).abs() / s.powf(qp - 1.0))
                    .collect();
                let growing = f[3] > 1.5 * f[2] && f[2] > 1.5 * f[1];
                let bounded = f[3] <= 1.1 * f[2].max(f[1]) || f[3] <= LIMIT_ZERO_TOL;
                let v = if !f.iter().all(|x| x.is_finite()) || growing {
                    Verdict::Fail
                } else if bounded {
                    Verdict::Pass
                } else {
                    Verdict::Indeterminate
                };
                if v != Verdict::Pass {
                    verdict = v;
                    witness = Some(sd * 1e6);
                }
                est = f64::max(est, f[3]);
            }
            checks.push(AssumptionCheck {
                name: "g2".into(),
                verdict,
                witness_s: witness.or(Some(1e6)),
                estimate: Some(est),
            });
        } else {
            // N = 2: only a polynomial growth exponent is checked.
            let mut verdict = Verdict::Pass;
            let mut est: f64 = 0.0;
            for &sd in sides {
                let beta: Vec<f64> = [1e2, 1e3, 1e4]
                    .iter()
                    .map(|&s| nl.g(sd * s).abs().max(1e-300).ln() / f64::ln(s))
                    .collect();
                if !beta.iter().all(|b| b.is_finite()) || beta[2] > beta[1] + 0.5 {
                    verdict = Verdict::Indeterminate;
                }
                est = est.max(beta[2]);
            }
            checks.push(AssumptionCheck { name: "g2".into(), verdict, witness_s: Some(1e4), estimate: Some(est) });
        }

        // g3: G₊(s)/|s|^q̄ → 0 as |s| → ∞.
        let qb = exps.q_bar;
        checks.push(Self::limit_check(nl, "g3", sides, [1e3, 1e4, 1e5, 1e6], move |nl, s| {
            nl.try_primitive_plus(s).map(|v| v / s.abs().powf(qb)).unwrap_or(f64::NAN)
        }));

        // g4: some ξ₀ with G(ξ₀) > 0; smallest magnitude found on a log scan.
        {
            let count = samples.max(200);
            let (lo, hi): (f64, f64) = (1e-6, 1e6);
            let mut witness = None;
            'scan: for i in 0..=count {
                let s = (lo.ln() + (hi.ln() - lo.ln()) * i as f64 / count as f64).exp();
                for &sd in sides {
                    if nl.primitive(sd * s) > 0.0 {
                        witness = Some(sd * s);
                        break 'scan;
                    }
                }
            }
            checks.push(AssumptionCheck {
                name: "g4".into(),
                verdict: if witness.is_some() { Verdict::Pass } else { Verdict::Fail },
                estimate: witness.map(|x| nl.primitive(x)),
                witness_s: witness,
            });
        }

        AssumptionReport { checks }
    }

    fn limit_check(
        nl: &Nonlinearity,
        name: &str,
        sides: &[f64],
        at: [f64; 4],
        f: impl Fn(&Nonlinearity, f64) -> f64,
    ) -> AssumptionCheck {
        let mut verdict = Verdict::Pass;
        let mut estimate = 0.0;
        let mut witness = at[3];
        for &sd in sides {
            let vals = at.map(|s| f(nl, sd * s));
            let (v, l) = limit_is_zero(vals);
            if v != Verdict::Pass && verdict == Verdict::Pass || v == Verdict::Fail {
                verdict = v;
                witness = sd * at[3];
            }
            if l.abs() > f64::abs(estimate) || l.is_nan() {
                estimate = l;
            }
        }
        AssumptionCheck { name: name.into(), verdict, witness_s: Some(witness), estimate: Some(estimate) }
    }

    pub fn get(&self, name: &str) -> Option<&AssumptionCheck> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn all_pass(&self) -> bool {
        self.checks.iter().all(|c| c.verdict == Verdict::Pass)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn log(alpha: f64, mu: f64, p: Option<f64>) -> Nonlinearity {
        Nonlinearity::new(NonlinearitySpec::log_power(alpha, mu, p, 3, 1.8)).unwrap()
    }

    #[test]
    fn g_examples() {
        let nl = log(1.0, 0.0, None);
        assert_eq!(nl.g(1.0), 0.0);
        assert_eq!(nl.g(0.0), 0.0);
        let nl = log(1.0, -0.2, Some(4.0));
        let s = 0.5f64.exp();
        let expected = s * (1.0 - 0.2 * std::f64::consts::E);
        assert!((nl.g(s) - expected).abs() < 1e-14);
        assert!((nl.g(s) - 0.752_37).abs() < 1e-4);
    }

    #[test]
    fn primitive_examples() {
        assert!((log(1.0, 0.0, None).primitive(1.0) + 0.5).abs() < 1e-15);
        let pp = Nonlinearity::new(NonlinearitySpec::pure_power(1.0, 4.0, 3, 1.8)).unwrap();
        assert!((pp.primitive(2.0) - 4.0).abs() < 1e-14);
    }

    #[test]
    fn split_examples() {
        let nl = log(1.0, 0.0, None);
        let (gp, gm) = nl.split(2.0);
        assert!((gp - 2.0 * 4f64.ln()).abs() < 1e-14 && gm == 0.0);
        let (gp, gm) = nl.split(0.5);
        assert_eq!(gp, 0.0);
        assert!((gm - 4f64.ln() / 2.0).abs() < 1e-14);
        assert!((gp - gm - nl.g(0.5)).abs() < 1e-15);
        assert_eq!(nl.split(0.0), (0.0, 0.0));
        // g₋(s)·s >= 0 on both sides
        for s in [-3.0, -0.7, -0.1, 0.1, 0.7, 3.0] {
            assert!(nl.split(s).1 * s >= 0.0);
        }
    }

    #[test]
    fn sign_split_primitives() {
        let pp = Nonlinearity::new(NonlinearitySpec::pure_power(1.0, 4.0, 3, 1.8)).unwrap();
        for s in [0.3, 1.0, 2.5] {
            assert!((pp.primitive_plus(s) - s.powi(4) / 4.0).abs() < 1e-14);
            assert_eq!(pp.primitive_minus(s), 0.0);
        }
        let nl = log(1.0, 0.0, None);
        assert_eq!(nl.primitive_plus(1.0), 0.0);
        assert!((nl.primitive_minus(1.0) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn split_identity_at_random_points() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for nl in [log(1.0, 0.0, None), log(1.0, -0.2, Some(4.0)), log(0.5, 0.3, Some(3.0))] {
            for _ in 0..100 {
                let s: f64 = rng.gen_range(-6.0..6.0);
                let d = nl.primitive_plus(s) - nl.primitive_minus(s) - nl.primitive(s);
                assert!(d.abs() < 1e-10, "{s}: {d}");
                assert!(nl.primitive_plus(s) >= 0.0 && nl.primitive_minus(s) >= 0.0);
                let (gp, gm) = nl.split(s);
                assert!((gp - gm - nl.g(s)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn log_power_roots_with_negative_mu() {
        // α = 1, μ = -0.2, p = 4: g(t)/t = ln t² - 0.2 t² has two positive roots.
        let nl = log(1.0, -0.2, Some(4.0));
        let roots = nl.positive_roots();
        assert_eq!(roots.len(), 2);
        for &r in roots {
            assert!(nl.g(r).abs() < 1e-12 * r.max(1.0));
        }
        // Below the threshold there are none.
        let nl = log(1.0, -0.5, Some(4.0));
        assert!(nl.positive_roots().is_empty());
    }

    #[test]
    fn accurate_increments_match_direct() {
        for nl in [log(1.0, 0.0, None), log(1.0, -0.2, Some(4.0)), log(0.5, 0.3, Some(3.0))] {
            for eps in [None, Some(Eps::new(0.1).unwrap())] {
                for &(a, d) in &[(0.5, 1e-3), (0.05, -1e-3), (-0.03, 2e-4), (2.0, 0.1), (-3.0, -0.2)] {
                    let direct = nl.effective_g(eps, a + d) - nl.effective_g(eps, a);
                    if let Some(inc) = nl.effective_g_increment(eps, a, d) {
                        assert!((inc - direct).abs() <= 1e-12 * (1.0 + direct.abs()), "{a} {d}: {inc} {direct}");
                    }
                }
            }
        }
        let nl = log(1.0, 0.0, None);
        assert!(nl.effective_g_increment(None, 0.9, 0.2).is_none());
        assert!(nl.effective_g_increment(Some(Eps::new(0.1).unwrap()), 0.09, 0.02).is_none());
    }

    #[test]
    fn phi_examples() {
        assert_eq!(phi_eps(0.5, 0.25).unwrap(), 0.5);
        assert_eq!(phi_eps(0.5, -2.0).unwrap(), 1.0);
        for e in [0.1, 0.5, 0.9] {
            assert_eq!(phi_eps(e, 0.0).unwrap(), 0.0);
        }
        assert!(phi_eps(1.0, 0.1).is_err());
        assert!(phi_eps(0.0, 0.1).is_err());
        assert!(phi_eps(0.5, f64::NAN).is_err());
    }

    #[test]
    fn g_eps_matches_g_outside_ramp() {
        let nl = log(1.0, -0.2, Some(4.0));
        let eps = Eps::new(0.1).unwrap();
        for s in [-3.0, -0.5, -0.1, 0.1, 0.4, 2.0] {
            assert_eq!(nl.g_eps(eps, s), nl.g(s));
        }
    }

    #[test]
    fn exponent_examples() {
        let e = critical_exponents(3, 1.8).unwrap();
        assert!((e.q_star - 4.5).abs() < 1e-12);
        assert_eq!(e.two_star, 6.0);
        assert_eq!(e.q_prime, 6.0);
        assert!((e.q_bar - 10.0 / 3.0).abs() < 1e-12);
        assert!((e.q_tilde - 3.0).abs() < 1e-12);
        let e = critical_exponents(3, 2.5).unwrap();
        assert!((e.q_star - 15.0).abs() < 1e-12);
        assert!((e.q_prime - 15.0).abs() < 1e-12);
        assert!((e.q_bar - 25.0 / 6.0).abs() < 1e-12);
        assert!((e.q_tilde - 10.0 / 3.0).abs() < 1e-12);
        let err = critical_exponents(3, 1.1).unwrap_err().to_string();
        assert!(err.contains("2N/(N+2)"), "{err}");
        assert!(critical_exponents(2, 2.5).is_err());
        assert!(critical_exponents(3, 3.0).is_err());
        assert!(critical_exponents(1, 1.5).is_err());
        assert!(critical_exponents(3, 2.0).is_err());
        assert!(critical_exponents(2, 1.5).unwrap().q_prime.is_infinite());
    }

    #[test]
    fn delta_and_nu() {
        let e = critical_exponents(3, 1.8).unwrap();
        assert!((e.delta(4.0) - 0.75).abs() < 1e-15);
        // ν = N q (p-2) / (p [N q - 2(N - q)]) = 3·1.8·2 / (4·(5.4 - 2.4)) = 0.9
        assert!((e.nu(4.0) - 0.9).abs() < 1e-14);
        // At q̄ with q < 2 the GN exponent makes q̄ δ_q̄ = 2.
        assert!((e.q_bar * e.delta(e.q_bar) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn spec_validation() {
        assert!(NonlinearitySpec::log_power(1.0, -0.2, None, 3, 1.8).validate().is_err());
        assert!(NonlinearitySpec::log_power(1.0, -0.2, Some(6.5), 3, 1.8).validate().is_err());
        assert!(NonlinearitySpec::log_power(1.0, -0.2, Some(1.5), 3, 1.8).validate().is_err());
        assert!(NonlinearitySpec::log_power(1.0, 0.0, None, 3, 1.8).validate().is_ok());
        assert!(NonlinearitySpec::log_power(f64::NAN, 0.0, None, 3, 1.8).validate().is_err());
    }

    #[test]
    fn assumptions_log() {
        let rep = log(1.0, 0.0, None).check_assumptions(400);
        assert!(rep.all_pass(), "{rep:?}");
        let g4 = rep.get("g4").unwrap();
        let xi = g4.witness_s.unwrap();
        let nl = log(1.0, 0.0, None);
        assert!(nl.primitive(xi) > 0.0);
        let e = std::f64::consts::E;
        assert!((nl.primitive(e) - 0.5 * e * e).abs() < 1e-12);
    }

    #[test]
    fn assumptions_pure_power() {
        for p in [2.2, 2.8, 3.2] {
            let nl = Nonlinearity::new(NonlinearitySpec::pure_power(1.0, p, 3, 1.8)).unwrap();
            let rep = nl.check_assumptions(200);
            assert!(rep.all_pass(), "p = {p}: {rep:?}");
        }
        let qbar = 10.0 / 3.0;
        let nl = Nonlinearity::new(NonlinearitySpec::pure_power(1.0, qbar, 3, 1.8)).unwrap();
        let rep = nl.check_assumptions(200);
        let g3 = rep.get("g3").unwrap();
        assert_eq!(g3.verdict, Verdict::Fail);
        assert!((g3.estimate.unwrap() - 1.0 / qbar).abs() < 1e-6);
    }

    #[test]
    fn assumptions_g4_fails_below_threshold() {
        let mu_star = -2.0 * (-2.0f64).exp();
        let rep = log(1.0, mu_star - 0.05, Some(4.0)).check_assumptions(400);
        assert_eq!(rep.get("g4").unwrap().verdict, Verdict::Fail);
        let rep = log(1.0, mu_star + 0.05, Some(4.0)).check_assumptions(400);
        assert_eq!(rep.get("g4").unwrap().verdict, Verdict::Pass);
    }

    #[test]
    fn assumption_report_json_shape() {
        let rep = log(1.0, 0.0, None).check_assumptions(100);
        let v: serde_json::Value = serde_json::to_value(&rep).unwrap();
        let arr = v.as_array().unwrap();
        assert_eq!(arr.len(), 5);
        for obj in arr {
            for k in ["name", "verdict", "witness_s", "estimate"] {
                assert!(obj.get(k).is_some());
            }
        }
    }

    #[test]
    fn tiny_arguments_stay_finite() {
        // s² underflows below ~1e-154; the log must not see it.
        let nl = Nonlinearity::new(NonlinearitySpec::log_power(1.0, 0.5, Some(3.0), 3, 1.8)).unwrap();
        let eps = Eps::new(0.5).unwrap();
        for s in [1e-160, -1e-163, 1e-200, 1e-299] {
            for v in [nl.g(s), nl.primitive(s), nl.primitive_minus_eps(eps, s), nl.primitive_eps(eps, s), nl.g_eps(eps, s)] {
                assert!(v.is_finite(), "s = {s:e}");
            }
            assert!(nl.primitive(s).abs() < 1e-300);
        }
    }
}
