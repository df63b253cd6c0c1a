//! Uniform radial grids on `[0, r_max]` and radial fields sampled on them.
//!
//! Integrals over `R^N` of a radial function reduce to
//! `ω_{N-1} ∫_0^∞ f(r) r^{N-1} dr`; the grid carries trapezoidal weights for
//! that measure together with the exact shell volumes between neighbouring
//! nodes, which the staggered kinetic terms of the functional use.

use std::sync::Arc;

use log::warn;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::numerics::unit_sphere_area;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RadialGrid {
    #[serde(rename = "N")]
    dim: usize,
    r_max: f64,
    h: f64,
    /// `ω_{N-1}`.
    omega: f64,
    #[serde(skip)]
    nodes: Vec<f64>,
    #[serde(skip)]
    weights: Vec<f64>,
    /// `ω ∫_{r_j}^{r_{j+1}} r^{N-1} dr`, one per cell.
    #[serde(skip)]
    shells: Vec<f64>,
}

/// Build a uniform grid with `n` nodes on `[0, r_max]`.
pub fn make_grid(dim: usize, r_max: f64, n: usize) -> Result<Arc<RadialGrid>> {
    RadialGrid::new(dim, r_max, n).map(Arc::new)
}

impl RadialGrid {
    pub fn new(dim: usize, r_max: f64, n: usize) -> Result<Self> {
        if dim < 2 {
            return Err(Error::InvalidArgument(format!("grid dimension N = {dim} must be >= 2")));
        }
        if !(r_max.is_finite() && r_max > 0.0) {
            return Err(Error::InvalidArgument(format!("r_max = {r_max} must be positive")));
        }
        if n < 16 {
            return Err(Error::InvalidArgument(format!("n = {n} nodes; at least 16 required")));
        }
        let h = r_max / (n - 1) as f64;
        let nodes: Vec<f64> = (0..n).map(|i| i as f64 * h).collect();
        let omega = unit_sphere_area(dim);
        let nm1 = (dim - 1) as i32;
        let weights = nodes
            .iter()
            .enumerate()
            .map(|(i, &r)| {
                let end = if i == 0 || i == n - 1 { 0.5 } else { 1.0 };
                end * h * omega * r.powi(nm1)
            })
            .collect();
        let shells = nodes
            .windows(2)
            .map(|w| omega * (w[1].powi(dim as i32) - w[0].powi(dim as i32)) / dim as f64)
            .collect();
        Ok(RadialGrid { dim, r_max, h, omega, nodes, weights, shells })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn r_max(&self) -> f64 {
        self.r_max
    }

    pub fn spacing(&self) -> f64 {
        self.h
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn omega(&self) -> f64 {
        self.omega
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn shells(&self) -> &[f64] {
        &self.shells
    }

    /// `∫ f dx` for samples `f` at the nodes.
    pub fn integrate_values(&self, f: &[f64]) -> f64 {
        debug_assert_eq!(f.len(), self.len());
        f.iter().zip(&self.weights).map(|(f, w)| f * w).sum()
    }

    /// Volume of the ball of radius `r`.
    pub fn ball_volume(&self, r: f64) -> f64 {
        self.omega * r.powi(self.dim as i32) / self.dim as f64
    }

    /// Linear interpolation at radius `r`, zero outside `[0, r_max]`.
    fn interpolate(&self, values: &[f64], r: f64) -> f64 {
        if !(0.0..=self.r_max).contains(&r) {
            return 0.0;
        }
        let x = r / self.h;
        let i = (x.floor() as usize).min(self.len() - 2);
        let t = x - i as f64;
        values[i] * (1.0 - t) + values[i + 1] * t
    }
}

/// Samples of a radial function on a grid.
#[derive(Clone, Debug, PartialEq)]
pub struct RadialField {
    grid: Arc<RadialGrid>,
    values: Vec<f64>,
}

impl RadialField {
    pub fn new(grid: Arc<RadialGrid>, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::LengthMismatch { field: values.len(), grid: grid.len() });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("field values"));
        }
        Ok(RadialField { grid, values })
    }

    pub fn zeros(grid: Arc<RadialGrid>) -> Self {
        let n = grid.len();
        RadialField { grid, values: vec![0.0; n] }
    }

    pub fn from_fn(grid: Arc<RadialGrid>, f: impl Fn(f64) -> f64) -> Result<Self> {
        let values = grid.nodes().iter().map(|&r| f(r)).collect();
        RadialField::new(grid, values)
    }

    pub fn grid(&self) -> &Arc<RadialGrid> {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> RadialField {
        RadialField { grid: self.grid.clone(), values: self.values.iter().map(|&v| f(v)).collect() }
    }

    pub fn scaled(&self, a: f64) -> RadialField {
        self.map(|v| a * v)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// `∫_{R^N} f dx`.
    pub fn integrate(&self) -> f64 {
        self.grid.integrate_values(&self.values)
    }

    /// `(∫ |u|^m)^{1/m}`, `m >= 1`.
    pub fn lp_norm(&self, m: f64) -> Result<f64> {
        if !(m >= 1.0) {
            return Err(Error::InvalidArgument(format!("L^m norm needs m >= 1 (got {m})")));
        }
        let s: f64 = self.values.iter().zip(self.grid.weights()).map(|(u, w)| w * u.abs().powf(m)).sum();
        Ok(s.powf(1.0 / m))
    }

    /// `‖u‖₂²`.
    pub fn mass(&self) -> f64 {
        self.values.iter().zip(self.grid.weights()).map(|(u, w)| w * u * u).sum()
    }

    /// `⟨u, v⟩_{L²}`.
    pub fn dot(&self, other: &RadialField) -> f64 {
        self.values.iter().zip(&other.values).zip(self.grid.weights()).map(|((a, b), w)| w * a * b).sum()
    }

    /// Rescale onto the sphere `‖u‖₂ = c`.
    pub fn project_mass(&self, c: f64) -> Result<RadialField> {
        let m = self.mass();
        if !(m > 0.0) {
            return Err(Error::ZeroField);
        }
        if !(c > 0.0 && c.is_finite()) {
            return Err(Error::InvalidArgument(format!("target mass c = {c} must be positive")));
        }
        let m_target = c * c;
        if m == m_target {
            return Ok(self.clone());
        }
        let mut out = self.scaled(c / m.sqrt());
        // One correction step absorbs the rounding of the square root, which
        // makes a second projection a no-op in practice.
        let m2 = out.mass();
        if m2 != m_target {
            let k = (m_target / m2).sqrt();
            out.values.iter_mut().for_each(|v| *v *= k);
        }
        Ok(out)
    }

    /// `u'(r)`: second-order central differences inside, second-order one-sided
    /// at both ends. With `even` the derivative at the origin is set to zero.
    pub fn derivative_with(&self, even: bool) -> RadialField {
        let u = &self.values;
        let n = u.len();
        let h = self.grid.spacing();
        let mut d = vec![0.0; n];
        for i in 1..n - 1 {
            d[i] = (u[i + 1] - u[i - 1]) / (2.0 * h);
        }
        // Written as differences so that constants differentiate to exactly zero.
        d[0] = if even { 0.0 } else { (4.0 * (u[1] - u[0]) - (u[2] - u[0])) / (2.0 * h) };
        d[n - 1] = (4.0 * (u[n - 1] - u[n - 2]) - (u[n - 1] - u[n - 3])) / (2.0 * h);
        RadialField { grid: self.grid.clone(), values: d }
    }

    pub fn derivative(&self) -> RadialField {
        self.derivative_with(false)
    }

    /// Linear-interpolated resampling `r ↦ a·u(k r)`.
    fn resample(&self, amp: f64, k: f64) -> RadialField {
        let values = self.grid.nodes().iter().map(|&r| amp * self.grid.interpolate(&self.values, k * r)).collect();
        RadialField { grid: self.grid.clone(), values }
    }

    /// `u_t(x) = t^{N/2} u(t x)` together with the relative mass defect
    /// `|mass(u_t) - mass(u)| / mass(u)` introduced by resampling/truncation.
    pub fn dilate(&self, t: f64) -> Result<Resampled> {
        if !(t > 0.0 && t.is_finite()) {
            return Err(Error::InvalidArgument(format!("dilation t = {t} must be positive")));
        }
        let n = self.grid.dim() as f64;
        let field = self.resample(t.powf(n / 2.0), t);
        Ok(Resampled::new(self, field, 1.0))
    }

    /// `x ↦ u(s^{-1/N} x)`; multiplies the mass by `s`.
    pub fn mass_scale(&self, s: f64) -> Result<Resampled> {
        if !(s > 0.0 && s.is_finite()) {
            return Err(Error::InvalidArgument(format!("mass factor s = {s} must be positive")));
        }
        let k = s.powf(-1.0 / self.grid.dim() as f64);
        let field = self.resample(1.0, k);
        Ok(Resampled::new(self, field, s))
    }

    /// Overwrite the origin value with the second-order even-extension closure
    /// `u_0 = (4 u_1 - u_2)/3`.
    pub fn close_origin(&mut self) {
        self.values[0] = (4.0 * self.values[1] - self.values[2]) / 3.0;
    }
}

/// Output of a resampling operation with its mass bookkeeping.
#[derive(Clone, Debug)]
pub struct Resampled {
    pub field: RadialField,
    /// `|mass(out) - factor·mass(in)| / (factor·mass(in))`.
    pub mass_defect: f64,
}

impl Resampled {
    fn new(input: &RadialField, field: RadialField, factor: f64) -> Self {
        let m_in = factor * input.mass();
        let mass_defect = if m_in > 0.0 { (field.mass() - m_in).abs() / m_in } else { 0.0 };
        // Fewer than a handful of nodes under the bulk of the profile means
        // the support has escaped the grid resolution.
        let support = field.values.iter().filter(|v| v.abs() > 1e-3 * field.max_abs()).count();
        if m_in > 0.0 && (support < 8 || mass_defect > 1e-2) {
            warn!("resampled field poorly resolved: {support} active nodes, mass defect {mass_defect:.3e}");
        }
        Resampled { field, mass_defect }
    }
}

/// `ξ₀` on `r <= R`, linear down to zero at `R + 1`, zero beyond.
pub fn plateau_function(xi0: f64, radius: f64, grid: &Arc<RadialGrid>) -> Result<RadialField> {
    if !(radius >= 0.0 && radius + 1.0 < grid.r_max()) {
        return Err(Error::InvalidArgument(format!(
            "plateau radius R = {radius} needs 0 <= R and R + 1 < r_max = {}",
            grid.r_max()
        )));
    }
    RadialField::from_fn(grid.clone(), |r| {
        if r <= radius {
            xi0
        } else if r < radius + 1.0 {
            xi0 * (radius + 1.0 - r)
        } else {
            0.0
        }
    })
}

/// `(r^{N/2} ln r)^{-1}` for `r >= 3`, zero for `r <= 2`, joined on `(2, 3)` by
/// a cubic with zero end slopes.
pub fn appendix_profile(dim: usize, r: f64) -> f64 {
    let n = dim as f64;
    let outer = |r: f64| 1.0 / (r.powf(n / 2.0) * r.ln());
    if r <= 2.0 {
        0.0
    } else if r >= 3.0 {
        outer(r)
    } else {
        let t = r - 2.0;
        outer(3.0) * t * t * (3.0 - 2.0 * t)
    }
}

/// Derivative of [`appendix_profile`].
pub fn appendix_profile_derivative(dim: usize, r: f64) -> f64 {
    let n = dim as f64;
    if r <= 2.0 {
        0.0
    } else if r >= 3.0 {
        let l = r.ln();
        -(n / 2.0 * l + 1.0) / (r.powf(n / 2.0 + 1.0) * l * l)
    } else {
        let t = r - 2.0;
        let u3 = 1.0 / (3f64.powf(n / 2.0) * 3f64.ln());
        u3 * 6.0 * t * (1.0 - t)
    }
}

pub fn appendix_function(grid: &Arc<RadialGrid>) -> Result<RadialField> {
    if grid.r_max() <= 3.0 {
        return Err(Error::InvalidArgument("appendix function needs r_max > 3".into()));
    }
    let dim = grid.dim();
    RadialField::from_fn(grid.clone(), |r| appendix_profile(dim, r))
}

/// Radial Gaussian `e^{-r²/(2σ²)}` projected to mass `c²`, zero at `r_max`.
pub fn gaussian_bump(grid: &Arc<RadialGrid>, sigma: f64, c: f64) -> Result<RadialField> {
    if !(sigma > 0.0) {
        return Err(Error::InvalidArgument(format!("width {sigma} must be positive")));
    }
    let mut f = RadialField::from_fn(grid.clone(), |r| (-r * r / (2.0 * sigma * sigma)).exp())?;
    let n = f.len();
    f.values[n - 1] = 0.0;
    f.project_mass(c)
}
