//! Discrete energy `J_ε` on a radial grid, its exact gradient, and the
//! identity-based diagnostics used to certify converged solutions.
//!
//! Kinetic terms use one-sided differences `d_j = (u_{j+1} - u_j)/h` on each
//! cell weighted by the exact shell volume; the innermost cell is closed by
//! `u'(0) = 0`, so the origin value does not enter the energy. Potential terms
//! use the node weights of the grid.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::RadialField;
use crate::nonlinearity::{Eps, Nonlinearity};
use crate::numerics::gauss_legendre;

/// The four terms of `J_ε(u)` and their combination.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct EnergyBreakdown {
    /// `½‖∇u‖₂²`.
    pub kinetic2: f64,
    /// `(1/q)‖∇u‖_q^q` (smoothed), zero when the q-term is disabled.
    pub kineticq: f64,
    /// `∫G₋^ε(u)`, or `∫G₋(u)` when no ε is set.
    pub gminus_eps: f64,
    /// `∫G₊(u)`.
    pub gplus: f64,
    pub total: f64,
    pub eps: Option<f64>,
    /// Set when `∫G₋(u)` (no ε) is dominated by the outer shells of the
    /// grid, i.e. the truncated value is not trustworthy as `R → ∞`.
    pub gminus_divergent: bool,
}

impl EnergyBreakdown {
    pub fn zero(eps: Option<Eps>) -> Self {
        EnergyBreakdown {
            kinetic2: 0.0,
            kineticq: 0.0,
            gminus_eps: 0.0,
            gplus: 0.0,
            total: 0.0,
            eps: eps.map(Eps::value),
            gminus_divergent: false,
        }
    }
}

/// Share of `∫G₋` carried by `r > r_max/2` above which the divergence flag is raised.
const DIVERGENCE_SHARE: f64 = 1e-2;

/// `J_ε` (or `J`) for one nonlinearity with fixed discretization options.
#[derive(Clone, Debug)]
pub struct Functional {
    nl: Nonlinearity,
    eps: Option<Eps>,
    q_term: bool,
    delta: f64,
    /// Quadrature nodes on `[0, 1]` for exact-difference integrals of `g^ε`.
    gl: (Vec<f64>, Vec<f64>),
}

impl Functional {
    /// Energy with the q-term on and smoothing `δ = 1e-8`.
    pub fn new(nl: Nonlinearity, eps: Option<Eps>) -> Self {
        let (x, w) = gauss_legendre(10);
        let gl = (x.iter().map(|x| 0.5 * (x + 1.0)).collect(), w.iter().map(|w| 0.5 * w).collect());
        Functional { nl, eps, q_term: true, delta: 1e-8, gl }
    }

    pub fn with_q_term(mut self, on: bool) -> Self {
        self.q_term = on;
        self
    }

    /// Absolute smoothing scale in `(d² + δ²)^{q/2} - δ^q`.
    pub fn with_smoothing(mut self, delta: f64) -> Self {
        assert!(delta > 0.0 && delta.is_finite(), "smoothing must be positive");
        self.delta = delta;
        self
    }

    pub fn with_eps(mut self, eps: Option<Eps>) -> Self {
        self.eps = eps;
        self
    }

    pub fn nonlinearity(&self) -> &Nonlinearity {
        &self.nl
    }

    pub fn eps(&self) -> Option<Eps> {
        self.eps
    }

    pub fn q_term(&self) -> bool {
        self.q_term
    }

    pub fn smoothing(&self) -> f64 {
        self.delta
    }

    pub fn q(&self) -> f64 {
        self.nl.spec().q
    }

    fn check(&self, u: &RadialField) -> Result<()> {
        if u.grid().dim() != self.nl.dim() {
            return Err(Error::InvalidArgument(format!(
                "field lives in N = {} but the nonlinearity has N = {}",
                u.grid().dim(),
                self.nl.dim()
            )));
        }
        Ok(())
    }

    /// Smoothed `|d|^q`: `(d² + δ²)^{q/2} - δ^q`.
    #[inline]
    fn qpow(&self, d: f64) -> f64 {
        let q = self.q();
        let dd = self.delta * self.delta;
        if d * d < 1e-4 * dd {
            // (δ²(1+x))^{q/2} - δ^q with x small, kept accurate for tiny slopes.
            let x = d * d / dd;
            return self.delta.powf(q) * ((0.5 * q) * x.ln_1p()).exp_m1();
        }
        (d * d + dd).powf(0.5 * q) - self.delta.powf(q)
    }

    /// `d/dd` of the smoothed `|d|^q / q`.
    #[inline]
    fn qflux(&self, d: f64) -> f64 {
        (d * d + self.delta * self.delta).powf(0.5 * self.q() - 1.0) * d
    }

    /// Second derivative of the smoothed `|d|^q / q`.
    #[inline]
    pub(crate) fn qcurv(&self, d: f64) -> f64 {
        let q = self.q();
        let s = d * d + self.delta * self.delta;
        s.powf(0.5 * q - 2.0) * ((q - 1.0) * d * d + self.delta * self.delta)
    }

    pub fn energy(&self, u: &RadialField) -> Result<EnergyBreakdown> {
        self.check(u)?;
        let grid = u.grid();
        let v = u.values();
        let h = grid.spacing();
        let shells = grid.shells();
        let mut k2 = 0.0;
        let mut kq = 0.0;
        for j in 1..v.len() - 1 {
            let d = (v[j + 1] - v[j]) / h;
            k2 += shells[j] * d * d;
            if self.q_term {
                kq += shells[j] * self.qpow(d);
            }
        }
        let kinetic2 = 0.5 * k2;
        let kineticq = if self.q_term { kq / self.q() } else { 0.0 };
        let w = grid.weights();
        let mut gplus = 0.0;
        let mut gminus = 0.0;
        let mut gminus_outer = 0.0;
        let half = grid.r_max() / 2.0;
        for (i, (&s, &wi)) in v.iter().zip(w).enumerate() {
            if wi == 0.0 || s == 0.0 {
                continue;
            }
            gplus += wi * self.nl.try_primitive_plus(s)?;
            let gm = match self.eps {
                Some(e) => self.nl.try_primitive_minus_eps(e, s)?,
                None => self.nl.primitive_minus(s),
            };
            gminus += wi * gm;
            if grid.nodes()[i] > half {
                gminus_outer += wi * gm;
            }
        }
        for (term, val) in [("kinetic2", kinetic2), ("kineticq", kineticq), ("gminus_eps", gminus), ("gplus", gplus)] {
            if !val.is_finite() {
                return Err(Error::NumericFailure { term });
            }
        }
        let gminus_divergent = self.eps.is_none() && gminus > 0.0 && gminus_outer > DIVERGENCE_SHARE * gminus;
        Ok(EnergyBreakdown {
            kinetic2,
            kineticq,
            gminus_eps: gminus,
            gplus,
            total: kinetic2 + kineticq + gminus - gplus,
            eps: self.eps.map(Eps::value),
            gminus_divergent,
        })
    }

    /// `∂J/∂u_i`: derivative of the discrete energy with respect to node values.
    pub fn euclidean_gradient(&self, u: &RadialField) -> Result<Vec<f64>> {
        self.check(u)?;
        let grid = u.grid();
        let v = u.values();
        let n = v.len();
        let h = grid.spacing();
        let shells = grid.shells();
        let w = grid.weights();
        let mut e = vec![0.0; n];
        for j in 1..n - 1 {
            let d = (v[j + 1] - v[j]) / h;
            let mut flux = d;
            if self.q_term {
                flux += self.qflux(d);
            }
            let f = shells[j] * flux / h;
            e[j] -= f;
            e[j + 1] += f;
        }
        for i in 1..n {
            e[i] -= w[i] * self.nl.effective_g(self.eps, v[i]);
        }
        if e.iter().any(|x| !x.is_finite()) {
            return Err(Error::NumericFailure { term: "gradient" });
        }
        Ok(e)
    }

    /// Gradient represented in the grid `L²` inner product, so that
    /// `⟨gradient(u), v⟩ = d/dt J(u + t v)`. The origin carries no weight and
    /// does not enter the energy; its component is zero.
    pub fn gradient(&self, u: &RadialField) -> Result<RadialField> {
        let e = self.euclidean_gradient(u)?;
        let w = u.grid().weights();
        let g = e.iter().zip(w).map(|(e, w)| if *w > 0.0 { e / w } else { 0.0 }).collect();
        RadialField::new(u.grid().clone(), g)
    }

    /// `∫_a^b g^ε(t) dt`, integrated piecewise between the kinks of `g^ε`.
    fn primitive_increment(&self, a: f64, b: f64) -> f64 {
        if a == b {
            return 0.0;
        }
        let (lo, hi, sign) = if a < b { (a, b, 1.0) } else { (b, a, -1.0) };
        if hi - lo > 0.25 * lo.abs().max(hi.abs()) {
            // A relatively large move: subtracting primitives loses nothing,
            // while a fixed Gauss rule would struggle with the log singularity at 0.
            return self.nl.effective_primitive(self.eps, b) - self.nl.effective_primitive(self.eps, a);
        }
        let mut cuts = [0.0f64; 16];
        let mut k = 0;
        let push = |x: f64, cuts: &mut [f64; 16], k: &mut usize| {
            if x > lo && x < hi && *k < cuts.len() {
                cuts[*k] = x;
                *k += 1;
            }
        };
        push(0.0, &mut cuts, &mut k);
        if let Some(e) = self.eps {
            push(e.value(), &mut cuts, &mut k);
            push(-e.value(), &mut cuts, &mut k);
        }
        for &r in self.nl.positive_roots() {
            push(r, &mut cuts, &mut k);
            push(-r, &mut cuts, &mut k);
        }
        let cuts = &mut cuts[..k];
        cuts.sort_by(f64::total_cmp);
        let (x, w) = &self.gl;
        let mut total = 0.0;
        let mut left = lo;
        for &right in cuts.iter().chain(std::iter::once(&hi)) {
            let len = right - left;
            let mut s = 0.0;
            for (xi, wi) in x.iter().zip(w) {
                s += wi * self.nl.effective_g(self.eps, left + len * xi);
            }
            total += s * len;
            left = right;
        }
        sign * total
    }

    /// `J(u_new) - J(u)` from local differences, without the cancellation of
    /// subtracting two full energies.
    pub fn energy_difference(&self, u: &RadialField, u_new: &RadialField) -> Result<f64> {
        self.check(u)?;
        let grid = u.grid();
        let (a, b) = (u.values(), u_new.values());
        if a.len() != b.len() {
            return Err(Error::LengthMismatch { field: b.len(), grid: a.len() });
        }
        let h = grid.spacing();
        let shells = grid.shells();
        let w = grid.weights();
        let q = self.q();
        let dd = self.delta * self.delta;
        let mut k = 0.0;
        let mut kq = 0.0;
        for j in 1..a.len() - 1 {
            let d = (a[j + 1] - a[j]) / h;
            let dn = (b[j + 1] - b[j]) / h;
            let dd_change = ((b[j + 1] - a[j + 1]) - (b[j] - a[j])) / h;
            k += shells[j] * dd_change * (2.0 * d + dd_change);
            if self.q_term {
                let base = (d * d + dd).powf(0.5 * q);
                let rel = (dn - d) * (dn + d) / (d * d + dd);
                kq += shells[j] * base * (0.5 * q * rel.ln_1p()).exp_m1();
            }
        }
        let mut pot = 0.0;
        for i in 1..a.len() {
            if w[i] > 0.0 && a[i] != b[i] {
                pot += w[i] * self.primitive_increment(a[i], b[i]);
            }
        }
        let out = 0.5 * k + if self.q_term { kq / q } else { 0.0 } - pot;
        if !out.is_finite() {
            return Err(Error::NumericFailure { term: "energy difference" });
        }
        Ok(out)
    }

    /// `J(u_new) - J(u)` for two fields of equal mass, written as
    /// `Σ r_i Δ_i + (λ/2)‖Δ‖² + second-order remainders` with
    /// `r = e + λ w u` the tangential residual at `u`. Every piece is computed
    /// without cancellation, so changes far below `1e-16 |J|` stay resolvable.
    /// `e` is the Euclidean gradient at `u`.
    pub fn sphere_energy_change(&self, u: &RadialField, u_new: &RadialField, e: &[f64], lambda: f64) -> Result<f64> {
        let grid = u.grid();
        let (a, b) = (u.values(), u_new.values());
        let n = a.len();
        if b.len() != n || e.len() != n {
            return Err(Error::LengthMismatch { field: b.len(), grid: n });
        }
        let h = grid.spacing();
        let shells = grid.shells();
        let w = grid.weights();
        let q = self.q();
        let k = 0.5 * q;
        let dd = self.delta * self.delta;

        let mut first = 0.0;
        let mut mass_term = 0.0;
        for i in 1..n {
            let di = b[i] - a[i];
            first += (e[i] + lambda * w[i] * a[i]) * di;
            mass_term += w[i] * di * di;
        }
        let mut rem_k = 0.0;
        let mut rem_q = 0.0;
        for j in 1..n - 1 {
            let ddj = ((b[j + 1] - a[j + 1]) - (b[j] - a[j])) / h;
            rem_k += shells[j] * ddj * ddj;
            if self.q_term {
                let d = (a[j + 1] - a[j]) / h;
                let x = d * d + dd;
                let t = ddj * (2.0 * d + ddj) / x;
                rem_q += shells[j] * (x.powf(k) * binomial_remainder(k, t) + k * x.powf(k - 1.0) * ddj * ddj);
            }
        }
        let (gx, gw) = &self.gl;
        let mut rem_p = 0.0;
        for i in 1..n {
            let di = b[i] - a[i];
            if w[i] == 0.0 || di == 0.0 {
                continue;
            }
            let smooth = di.abs() <= 0.25 * a[i].abs().min(b[i].abs());
            let mut acc = None;
            if smooth {
                let mut s = 0.0;
                for (x, wt) in gx.iter().zip(gw) {
                    match self.nl.effective_g_increment(self.eps, a[i], x * di) {
                        Some(v) => s += wt * v,
                        None => {
                            s = f64::NAN;
                            break;
                        }
                    }
                }
                if s.is_finite() {
                    acc = Some(s * di);
                }
            }
            let r = match acc {
                Some(v) => v,
                None => self.primitive_increment(a[i], b[i]) - self.nl.effective_g(self.eps, a[i]) * di,
            };
            rem_p += w[i] * r;
        }
        let out = first + 0.5 * lambda * mass_term + 0.5 * rem_k + if self.q_term { rem_q / q } else { 0.0 } - rem_p;
        if !out.is_finite() {
            return Err(Error::NumericFailure { term: "energy difference" });
        }
        Ok(out)
    }

    /// Per-cell curvature `shell_j · (1 + (|d|^q/q)'') / h²` of the kinetic
    /// terms, used to build a tridiagonal preconditioner.
    pub fn kinetic_curvature(&self, u: &RadialField) -> Vec<f64> {
        let grid = u.grid();
        let v = u.values();
        let h = grid.spacing();
        let shells = grid.shells();
        let mut c = vec![0.0; v.len() - 1];
        for j in 1..v.len() - 1 {
            let d = (v[j + 1] - v[j]) / h;
            let mut k = 1.0;
            if self.q_term {
                k += self.qcurv(d);
            }
            c[j] = shells[j] * k / (h * h);
        }
        c
    }

    /// `d/ds g^ε(s)` by central differences (only used for preconditioning).
    pub fn g_slope(&self, s: f64) -> f64 {
        let h = 1e-6 * s.abs().max(1e-6);
        (self.nl.effective_g(self.eps, s + h) - self.nl.effective_g(self.eps, s - h)) / (2.0 * h)
    }
}

/// `(1 + t)^k - 1 - k t`, by series for small `|t|`.
fn binomial_remainder(k: f64, t: f64) -> f64 {
    if t.abs() < 1e-2 {
        let mut coef = k * (k - 1.0) / 2.0;
        let mut pow = t * t;
        let mut sum = 0.0;
        for m in 2..12 {
            sum += coef * pow;
            coef *= (k - m as f64) / (m as f64 + 1.0);
            pow *= t;
        }
        sum
    } else {
        (k * t.ln_1p()).exp_m1() - k * t
    }
}

/// `λ = -⟨grad, u⟩ / ‖u‖₂²`.
pub fn lagrange_multiplier(u: &RadialField, grad: &RadialField) -> Result<f64> {
    let m = u.mass();
    if !(m > 0.0) {
        return Err(Error::ZeroField);
    }
    Ok(-grad.dot(u) / m)
}

/// Node-based integrals entering the Nehari and Pohozaev identities.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct IdentityTerms {
    /// `‖∇u‖₂²`.
    pub grad2: f64,
    /// `‖∇u‖_q^q`, zero when the q-term is disabled.
    pub gradq: f64,
    /// `‖u‖₂²`.
    pub mass: f64,
    /// `∫ g^ε(u) u`.
    pub g_u: f64,
    /// `∫ G^ε(u)`.
    pub big_g: f64,
}

impl IdentityTerms {
    /// Quadrature with central-difference derivatives, independent of the
    /// staggered structure of the discrete energy.
    pub fn evaluate(u: &RadialField, f: &Functional) -> Result<Self> {
        f.check(u)?;
        let grid = u.grid();
        let w = grid.weights();
        let du = u.derivative_with(true);
        let q = f.q();
        let nl = f.nonlinearity();
        let eps = f.eps();
        let mut t = IdentityTerms { grad2: 0.0, gradq: 0.0, mass: 0.0, g_u: 0.0, big_g: 0.0 };
        for ((&s, &d), &wi) in u.values().iter().zip(du.values()).zip(w) {
            t.grad2 += wi * d * d;
            if f.q_term() {
                t.gradq += wi * d.abs().powf(q);
            }
            t.mass += wi * s * s;
            t.g_u += wi * nl.effective_g(eps, s) * s;
            t.big_g += wi * nl.effective_primitive(eps, s);
        }
        Ok(t)
    }
}

fn relative(lhs: f64, rhs: f64) -> f64 {
    (lhs - rhs).abs() / (lhs.abs() + rhs.abs() + 1.0)
}

/// `∫|∇u|² + |∇u|^q + λu² = ∫g^ε(u)u`, as `|LHS - RHS| / (|LHS| + |RHS| + 1)`.
pub fn nehari_residual(u: &RadialField, lambda: f64, f: &Functional) -> Result<f64> {
    let t = IdentityTerms::evaluate(u, f)?;
    Ok(relative(t.grad2 + t.gradq + lambda * t.mass, t.g_u))
}

/// `(N-2)/2 ‖∇u‖₂² + (N-q)/q ‖∇u‖_q^q + λN/2 ‖u‖₂² = N ∫G^ε(u)`, relative.
pub fn pohozaev_residual(u: &RadialField, lambda: f64, f: &Functional) -> Result<f64> {
    let t = IdentityTerms::evaluate(u, f)?;
    let n = u.grid().dim() as f64;
    let q = f.q();
    let lhs = 0.5 * (n - 2.0) * t.grad2 + (n - q) / q * t.gradq + 0.5 * lambda * n * t.mass;
    Ok(relative(lhs, n * t.big_g))
}

/// Pohozaev identity on the ball `r ≤ r_max` with `u(r_max) = 0`: the
/// whole-space form plus the wall flux `ω R^N (u'²/2 + (1 - 1/q)|u'|^q)`,
/// relative. Separates truncation of the domain from discretization error.
pub fn pohozaev_ball_residual(u: &RadialField, lambda: f64, f: &Functional) -> Result<f64> {
    let t = IdentityTerms::evaluate(u, f)?;
    let grid = u.grid();
    let n = grid.dim() as f64;
    let q = f.q();
    let v = u.values();
    let k = v.len();
    let d = (3.0 * v[k - 1] - 4.0 * v[k - 2] + v[k - 3]) / (2.0 * grid.spacing());
    let mut wall = 0.5 * d * d;
    if f.q_term() {
        wall += (1.0 - 1.0 / q) * d.abs().powf(q);
    }
    wall *= grid.omega() * grid.r_max().powf(n);
    let lhs = 0.5 * (n - 2.0) * t.grad2 + (n - q) / q * t.gradq + 0.5 * lambda * n * t.mass + wall;
    Ok(relative(lhs, n * t.big_g))
}

/// Which gradient norm the Gagliardo–Nirenberg ratio uses.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum GnVariant {
    /// `‖u‖_p ≤ C ‖∇u‖₂^{δ_p} ‖u‖₂^{1-δ_p}`.
    Gradient2,
    /// `‖u‖_p ≤ C ‖∇u‖_q^{ν_{p,q}} ‖u‖₂^{1-ν_{p,q}}` for the given `q`.
    GradientQ(f64),
}

impl GnVariant {
    /// `(θ, m)`: interpolation exponent and gradient-norm order.
    fn exponents(self, p: f64, dim: usize) -> Result<(f64, f64)> {
        let n = dim as f64;
        let two_star = if dim > 2 { 2.0 * n / (n - 2.0) } else { f64::INFINITY };
        let (theta, m, upper) = match self {
            GnVariant::Gradient2 => (n * (p - 2.0) / (2.0 * p), 2.0, two_star),
            GnVariant::GradientQ(q) => {
                let e = crate::nonlinearity::critical_exponents(dim, q)?;
                (e.nu(p), q, e.q_prime)
            }
        };
        if !(p > 2.0 && p < upper) {
            return Err(Error::InvalidArgument(format!("GN exponent p = {p} outside (2, {upper})")));
        }
        Ok((theta, m))
    }
}

/// `‖u‖_p / (C ‖∇u‖_m^θ ‖u‖₂^{1-θ})` for the chosen variant.
pub fn gn_ratio(u: &RadialField, p: f64, variant: GnVariant, constant: f64) -> Result<f64> {
    let (theta, m) = variant.exponents(p, u.grid().dim())?;
    let l2 = u.mass().sqrt();
    if !(l2 > 0.0) {
        return Err(Error::ZeroField);
    }
    let grad = u.derivative_with(true).lp_norm(m)?;
    let lp = u.lp_norm(p)?;
    Ok(lp / (constant * grad.powf(theta) * l2.powf(1.0 - theta)))
}

/// Ratio with the `‖∇u‖₂` variant (Lemma-style bound with constant `C`).
pub fn gn_check(u: &RadialField, p: f64, constant: f64) -> Result<f64> {
    gn_ratio(u, p, GnVariant::Gradient2, constant)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{gaussian_bump, make_grid};
    use crate::nonlinearity::NonlinearitySpec;

    fn log_nl() -> Nonlinearity {
        Nonlinearity::new(NonlinearitySpec::log_power(1.0, 0.0, None, 3, 1.8)).unwrap()
    }

    #[test]
    fn zero_field() {
        let g = make_grid(3, 8.0, 256).unwrap();
        let u = RadialField::zeros(g);
        let f = Functional::new(log_nl(), Some(Eps::new(0.1).unwrap()));
        let e = f.energy(&u).unwrap();
        assert_eq!(e.total, 0.0);
        assert_eq!((e.kinetic2, e.kineticq, e.gminus_eps, e.gplus), (0.0, 0.0, 0.0, 0.0));
        assert!(f.gradient(&u).unwrap().values().iter().all(|v| *v == 0.0));
        assert_eq!(nehari_residual(&u, 1.0, &f).unwrap(), 0.0);
        assert_eq!(pohozaev_residual(&u, 1.0, &f).unwrap(), 0.0);
    }

    #[test]
    fn multiplier_examples() {
        let g = make_grid(3, 8.0, 256).unwrap();
        let u = gaussian_bump(&g, 1.0, 1.0).unwrap();
        assert!((lagrange_multiplier(&u, &u.scaled(-1.0)).unwrap() - 1.0).abs() < 1e-14);
        // A field orthogonal to u in L²: subtract the projection.
        let v = RadialField::from_fn(g.clone(), |r| (-(r - 3.0) * (r - 3.0)).exp()).unwrap();
        let k = v.dot(&u) / u.mass();
        let perp = RadialField::new(g.clone(), v.values().iter().zip(u.values()).map(|(a, b)| a - k * b).collect())
            .unwrap();
        assert!(lagrange_multiplier(&u, &perp).unwrap().abs() < 1e-14);
        assert!(lagrange_multiplier(&RadialField::zeros(g.clone()), &perp).is_err());
    }

    #[test]
    fn decomposition_is_exact() {
        let g = make_grid(3, 8.0, 512).unwrap();
        let u = gaussian_bump(&g, 1.3, 2.0).unwrap();
        let f = Functional::new(log_nl(), Some(Eps::new(0.05).unwrap()));
        let e = f.energy(&u).unwrap();
        assert_eq!(e.total, e.kinetic2 + e.kineticq + e.gminus_eps - e.gplus);
        assert!(e.kinetic2 >= 0.0 && e.kineticq >= 0.0 && e.gminus_eps >= 0.0 && e.gplus >= 0.0);
    }

    #[test]
    fn binomial_remainder_branches_agree() {
        for k in [0.9, 1.0, 1.25] {
            for t in [-9.99e-3, 5e-3, 9.99e-3] {
                let series = binomial_remainder(k, t);
                let direct = (1.0 + t).powf(k) - 1.0 - k * t;
                assert!((series - direct).abs() < 1e-9 * t * t, "{k} {t}");
            }
        }
    }

    #[test]
    fn sphere_change_matches_energy_difference() {
        let g = make_grid(3, 8.0, 512).unwrap();
        let u = gaussian_bump(&g, 1.3, 2.0).unwrap();
        let w = gaussian_bump(&g, 1.25, 2.0).unwrap();
        for eps in [None, Some(Eps::new(0.05).unwrap())] {
            for q_on in [false, true] {
                let f = Functional::new(log_nl(), eps).with_q_term(q_on).with_smoothing(1e-8);
                let e = f.euclidean_gradient(&u).unwrap();
                let lam = -e.iter().zip(u.values()).map(|(a, b)| a * b).sum::<f64>() / u.mass();
                let a = f.energy_difference(&u, &w).unwrap();
                let b = f.sphere_energy_change(&u, &w, &e, lam).unwrap();
                assert!((a - b).abs() < 1e-11 * (1.0 + a.abs()), "{a} {b}");
            }
        }
    }

    #[test]
    fn energy_difference_matches_direct_subtraction() {
        let g = make_grid(3, 8.0, 512).unwrap();
        let u = gaussian_bump(&g, 1.3, 2.0).unwrap();
        let w = gaussian_bump(&g, 1.1, 2.0).unwrap();
        for eps in [None, Some(Eps::new(0.05).unwrap())] {
            let f = Functional::new(log_nl(), eps);
            let direct = f.energy(&w).unwrap().total - f.energy(&u).unwrap().total;
            let local = f.energy_difference(&u, &w).unwrap();
            assert!((direct - local).abs() < 1e-10 * (1.0 + direct.abs()), "{direct} {local}");
        }
    }
}
