//! Minimization of the discrete energy on the mass sphere `‖u‖₂ = c`, and
//! warm-started continuation along a decreasing ε schedule.
//!
//! Each step moves along a tangent direction computed in a tridiagonal
//! metric (kinetic curvature plus a mass shift), then rescales back onto the
//! sphere. Steps are accepted by an Armijo test on the exact local energy
//! difference, so the recorded trace is nonincreasing by construction.

use std::sync::Arc;

use log::{debug, info};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::functional::{
    lagrange_multiplier, nehari_residual, pohozaev_ball_residual, pohozaev_residual, EnergyBreakdown, Functional,
};
use crate::grid::{gaussian_bump, plateau_function, RadialField, RadialGrid};
use crate::nonlinearity::{Eps, Nonlinearity};
use crate::numerics::solve_tridiagonal;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitKind {
    GaussianBump,
    Plateau,
    Provided,
}

impl std::str::FromStr for InitKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gaussian_bump" => Ok(InitKind::GaussianBump),
            "plateau" => Ok(InitKind::Plateau),
            "provided" => Ok(InitKind::Provided),
            other => Err(Error::InvalidArgument(format!(
                "unknown init `{other}` (expected gaussian_bump, plateau or provided)"
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub step0: f64,
    pub armijo_c: f64,
    pub backtrack: f64,
    /// Stopping level for `‖grad + λu‖₂`; `None` means `1e-8 (1 + |J|)`.
    pub tol_pgrad: Option<f64>,
    pub max_iter: usize,
    pub eps_schedule: Vec<f64>,
    /// Relative smoothing of the q-term; the absolute scale is this times `max|u_init|`.
    pub delta_s: f64,
    pub init: InitKind,
    /// Recorded with every run; randomized callers derive their streams from it.
    pub seed: u64,
    pub q_term: bool,
    /// Smallest step tried before a line search is declared stalled.
    pub min_step: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            step0: 1.0,
            armijo_c: 1e-4,
            backtrack: 0.5,
            tol_pgrad: None,
            max_iter: 20_000,
            eps_schedule: default_eps_schedule(),
            delta_s: 1e-8,
            init: InitKind::GaussianBump,
            seed: 0,
            q_term: true,
            min_step: 1e-14,
        }
    }
}

/// `{2^-1, 2^-2, …, 2^-12}`.
pub fn default_eps_schedule() -> Vec<f64> {
    (1..=12).map(|k| 0.5f64.powi(k)).collect()
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if !(self.step0 > 0.0 && self.step0.is_finite()) {
            return bad(format!("step0 = {} must be positive", self.step0));
        }
        if !(self.armijo_c > 0.0 && self.armijo_c < 1.0) {
            return bad(format!("armijo_c = {} must lie in (0, 1)", self.armijo_c));
        }
        if !(self.backtrack > 0.0 && self.backtrack < 1.0) {
            return bad(format!("backtrack = {} must lie in (0, 1)", self.backtrack));
        }
        if let Some(t) = self.tol_pgrad {
            if !(t > 0.0) {
                return bad(format!("tol_pgrad = {t} must be positive"));
            }
        }
        if self.max_iter == 0 {
            return bad("max_iter must be positive".into());
        }
        if self.eps_schedule.is_empty() {
            return bad("eps_schedule must not be empty".into());
        }
        for w in self.eps_schedule.windows(2) {
            if w[1] >= w[0] {
                return bad("eps_schedule must be strictly decreasing".into());
            }
        }
        for &e in &self.eps_schedule {
            Eps::new(e)?;
        }
        if !(self.delta_s > 0.0) {
            return bad(format!("delta_s = {} must be positive", self.delta_s));
        }
        if !(self.min_step > 0.0) {
            return bad("min_step must be positive".into());
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Converged,
    MaxIter,
    Stalled,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct TraceEntry {
    pub energy: f64,
    pub pgrad_norm: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct SolveReport {
    #[serde(skip)]
    pub field: RadialField,
    pub lambda: f64,
    pub energy: EnergyBreakdown,
    pub pgrad_norm: f64,
    /// Whole-space Pohozaev residual.
    pub pohozaev: f64,
    /// Pohozaev residual including the flux through `r = r_max`.
    pub pohozaev_ball: f64,
    pub nehari: f64,
    /// `|‖u‖₂² - c²| / c²`.
    pub mass_defect: f64,
    pub iterations: usize,
    pub eps: Option<f64>,
    pub status: SolveStatus,
    /// Freshly evaluated final energy minus the accumulated trace value.
    pub trace_drift: f64,
    /// Absolute q-term smoothing used.
    pub delta: f64,
    #[serde(skip)]
    pub trace: Vec<TraceEntry>,
    /// Why the line search gave up, when it did.
    pub note: Option<String>,
}

impl SolveReport {
    pub fn converged(&self) -> bool {
        self.status == SolveStatus::Converged
    }

    /// True when every recorded energy is no larger than its predecessor.
    pub fn trace_nonincreasing(&self) -> bool {
        self.trace.windows(2).all(|w| w[1].energy <= w[0].energy)
    }
}

/// Initial field of mass `c²` on `grid`.
pub fn initial_field(grid: &Arc<RadialGrid>, c: f64, init: &InitKind, provided: Option<&RadialField>) -> Result<RadialField> {
    let mut f = match init {
        InitKind::GaussianBump => gaussian_bump(grid, grid.r_max() / 8.0, c)?,
        InitKind::Plateau => plateau_function(1.0, grid.r_max() / 4.0, grid)?.project_mass(c)?,
        InitKind::Provided => {
            let p = provided.ok_or_else(|| Error::InvalidArgument("init = provided needs a field".into()))?;
            if !Arc::ptr_eq(p.grid(), grid) && **p.grid() != **grid {
                return Err(Error::InvalidArgument("provided field lives on a different grid".into()));
            }
            p.project_mass(c)?
        }
    };
    let n = f.len();
    f.values_mut()[n - 1] = 0.0;
    f.project_mass(c)
}

/// Lower bound of the potential shift in the metric, relative to `1 + |λ|`.
const METRIC_FLOOR: f64 = 1e-2;

/// Minimize `J_ε` over `‖u‖₂ = c` starting from `init`.
///
/// Steps along the metric-preconditioned tangent direction, projects back to
/// mass `c²` and accepts by Armijo backtracking on the energy.
pub fn minimize_fixed_eps(init: &RadialField, c: f64, functional: &Functional, cfg: &SolverConfig) -> Result<SolveReport> {
    cfg.validate()?;
    if !(c > 0.0 && c.is_finite()) {
        return Err(Error::InvalidArgument(format!("mass parameter c = {c} must be positive")));
    }
    let grid = init.grid().clone();
    let n = grid.len();
    let w = grid.weights().to_vec();
    let mut u = init.clone();
    u.values_mut()[n - 1] = 0.0;
    u = u.project_mass(c)?;
    u.close_origin();

    let e0 = functional.energy(&u)?;
    let mut energy = e0.total;
    let mut trace = Vec::new();
    let mut tau = cfg.step0;
    let mut status = SolveStatus::MaxIter;
    let mut note = None;
    let mut iterations = 0;
    let mut last: (f64, f64);

    let nfree = n - 2;
    let mut diag = vec![0.0; nfree];
    let mut off = vec![0.0; nfree - 1];
    loop {
        let mut e = functional.euclidean_gradient(&u)?;
        e[0] = 0.0;
        e[n - 1] = 0.0;
        let uv = u.values();
        let eu: f64 = e.iter().zip(uv).map(|(a, b)| a * b).sum();
        let lambda = -eu / u.mass();
        let pgrad = (1..n - 1)
            .map(|i| {
                let r = e[i] / w[i] + lambda * uv[i];
                w[i] * r * r
            })
            .sum::<f64>()
            .sqrt();
        last = (lambda, pgrad);
        trace.push(TraceEntry { energy, pgrad_norm: pgrad });
        let tol = cfg.tol_pgrad.unwrap_or(1e-8 * (1.0 + energy.abs()));
        if pgrad <= tol {
            status = SolveStatus::Converged;
            break;
        }
        if iterations >= cfg.max_iter {
            break;
        }

        // Tridiagonal metric on the free nodes 1..n-2: kinetic curvature plus
        // the potential Hessian λ - g', floored to keep it positive definite.
        let curv = functional.kinetic_curvature(&u);
        let floor = METRIC_FLOOR * (1.0 + lambda.abs());
        for k in 0..nfree {
            let i = k + 1;
            let shift = (lambda - functional.g_slope(uv[i])).max(floor);
            diag[k] = curv[i - 1] + curv[i] + w[i] * shift;
            if k + 1 < nfree {
                off[k] = -curv[i];
            }
        }
        // Residual form avoids cancelling the large λ w u part of e.
        let r: Vec<f64> = (0..n).map(|i| if i == 0 || i == n - 1 { 0.0 } else { e[i] + lambda * w[i] * uv[i] }).collect();
        let mut y: Vec<f64> = r[1..n - 1].to_vec();
        let mut z: Vec<f64> = (1..n - 1).map(|i| w[i] * uv[i]).collect();
        let mu_vec = z.clone();
        solve_tridiagonal(&mut diag.clone(), &off, &mut y);
        solve_tridiagonal(&mut diag, &off, &mut z);
        let theta = dot(&mu_vec, &y) / dot(&mu_vec, &z);
        let mut d = vec![0.0; n];
        for k in 0..nfree {
            d[k + 1] = -(y[k] - theta * z[k]);
        }
        let slope = dot(&r, &d);
        if !(slope < 0.0) {
            status = SolveStatus::Stalled;
            note = Some(format!("no descent direction (slope {slope:.3e})"));
            break;
        }

        let mut accepted = false;
        tau = (2.0 * tau).min(1e3 * cfg.step0);
        while tau >= cfg.min_step {
            let mut trial = u.clone();
            for (t, di) in trial.values_mut().iter_mut().zip(&d) {
                *t += tau * di;
            }
            // A trial that cannot be evaluated (overflow far out along `d`)
            // counts as a rejected step.
            let change = trial.project_mass(c).and_then(|mut t| {
                t.close_origin();
                let de = functional.sphere_energy_change(&u, &t, &e, lambda)?;
                Ok((t, de))
            });
            let Ok((trial, de)) = change.map_err(|err| debug!("trial step {tau:.3e} rejected: {err}")) else {
                tau *= cfg.backtrack;
                continue;
            };
            if de <= cfg.armijo_c * tau * slope {
                u = trial;
                energy += de;
                accepted = true;
                break;
            }
            tau *= cfg.backtrack;
        }
        iterations += 1;
        if !accepted {
            status = SolveStatus::Stalled;
            note = Some(format!("line search below min_step at projected gradient {pgrad:.3e}"));
            break;
        }
        if iterations % 500 == 0 {
            debug!("iter {iterations}: J = {energy:.12e}, |pgrad| = {pgrad:.3e}, tau = {tau:.3e}");
        }
    }

    let fresh = functional.energy(&u)?;
    let (lambda, pgrad_norm) = last;
    let grad = functional.gradient(&u)?;
    let lambda_check = lagrange_multiplier(&u, &grad)?;
    debug_assert!((lambda - lambda_check).abs() <= 1e-8 * (1.0 + lambda.abs()));
    let mass_defect = (u.mass() - c * c).abs() / (c * c);
    Ok(SolveReport {
        pohozaev: pohozaev_residual(&u, lambda, functional)?,
        pohozaev_ball: pohozaev_ball_residual(&u, lambda, functional)?,
        nehari: nehari_residual(&u, lambda, functional)?,
        field: u,
        lambda,
        trace_drift: fresh.total - energy,
        energy: fresh,
        pgrad_norm,
        mass_defect,
        iterations,
        eps: functional.eps().map(Eps::value),
        status,
        delta: functional.smoothing(),
        trace,
        note,
    })
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Solve along `cfg.eps_schedule`, warm-starting each stage from the last.
/// A stalled stage is an error naming the stage.
pub fn continuation_solve(
    grid: &Arc<RadialGrid>,
    c: f64,
    nl: &Nonlinearity,
    cfg: &SolverConfig,
    provided: Option<&RadialField>,
) -> Result<Vec<SolveReport>> {
    let (reports, stall) = continuation_stages(grid, c, nl, cfg, provided)?;
    match stall {
        Some(e) => Err(e),
        None => Ok(reports),
    }
}

/// Like [`continuation_solve`], but a stall ends the run with the reports
/// gathered so far, the stalled stage included, next to the error.
pub fn continuation_stages(
    grid: &Arc<RadialGrid>,
    c: f64,
    nl: &Nonlinearity,
    cfg: &SolverConfig,
    provided: Option<&RadialField>,
) -> Result<(Vec<SolveReport>, Option<Error>)> {
    cfg.validate()?;
    let init = initial_field(grid, c, &cfg.init, provided)?;
    let delta = cfg.delta_s * init.max_abs();
    let base = Functional::new(nl.clone(), None).with_q_term(cfg.q_term).with_smoothing(delta);
    let mut reports: Vec<SolveReport> = Vec::with_capacity(cfg.eps_schedule.len());
    let mut current = init;
    for (stage, &e) in cfg.eps_schedule.iter().enumerate() {
        let eps = Eps::new(e)?;
        let f = base.clone().with_eps(Some(eps));
        let rep = minimize_fixed_eps(&current, c, &f, cfg)?;
        info!(
            "stage {stage} eps = {e:.3e}: J = {:.10e}, lambda = {:.6e}, iters = {}, status = {:?}",
            rep.energy.total, rep.lambda, rep.iterations, rep.status
        );
        if rep.status == SolveStatus::Stalled {
            let err = Error::StageStalled {
                stage,
                eps: e,
                reason: rep.note.clone().unwrap_or_else(|| "stalled".into()),
            };
            reports.push(rep);
            return Ok((reports, Some(err)));
        }
        current = rep.field.clone();
        reports.push(rep);
    }
    Ok((reports, None))
}

/// `‖u_{ε_{k+1}} - u_{ε_k}‖₂` along a continuation run.
pub fn stage_increments(reports: &[SolveReport]) -> Vec<f64> {
    reports
        .windows(2)
        .map(|w| {
            let a = w[0].field.values();
            let b = w[1].field.values();
            let wts = w[0].field.grid().weights();
            a.iter().zip(b).zip(wts).map(|((x, y), w)| w * (x - y) * (x - y)).sum::<f64>().sqrt()
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundaryVerdict {
    /// Mass constraint active with `λ > 0`.
    Attained,
    /// `λ` not positive: a minimizer inside the mass ball is suspected.
    InteriorSuspected,
    /// Mass constraint not met to `1e-10`.
    MassDefect,
}

/// Classify how a report sits with respect to the mass sphere.
pub fn boundary_attainment(report: &SolveReport, lambda_tol: f64) -> BoundaryVerdict {
    if !(report.mass_defect <= 1e-10) {
        BoundaryVerdict::MassDefect
    } else if report.lambda <= lambda_tol {
        BoundaryVerdict::InteriorSuspected
    } else {
        BoundaryVerdict::Attained
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct QualitativeReport {
    pub sign_constant: bool,
    pub radially_monotone: bool,
    /// Nodes where a sign flip or an increase of `|u|` was observed.
    pub defect_nodes: Vec<usize>,
}

/// Sign constancy and radial monotonicity of `|u|`, up to `1e-8 max|u|`.
pub fn qualitative_check(field: &RadialField) -> QualitativeReport {
    let v = field.values();
    let tol = 1e-8 * field.max_abs();
    let positive = v.iter().map(|x| x.max(0.0)).fold(0.0, f64::max) >= v.iter().map(|x| (-x).max(0.0)).fold(0.0, f64::max);
    let mut defects = Vec::new();
    let mut sign_constant = true;
    for (i, &x) in v.iter().enumerate() {
        if (positive && x < -tol) || (!positive && x > tol) {
            sign_constant = false;
            defects.push(i);
        }
    }
    let mut radially_monotone = true;
    for i in 1..v.len() {
        if v[i].abs() > v[i - 1].abs() + tol {
            radially_monotone = false;
            defects.push(i);
        }
    }
    defects.sort_unstable();
    defects.dedup();
    QualitativeReport { sign_constant, radially_monotone, defect_nodes: defects }
}

/// Radially decreasing rearrangement with respect to the grid measure.
///
/// Values are sorted in decreasing order and laid out by cumulative measure;
/// each node receives the root-mean-square of the sorted profile over its own
/// measure cell, which keeps `∫u²` exactly.
pub fn rearrange_decreasing(field: &RadialField) -> Result<RadialField> {
    let v = field.values();
    if v.iter().any(|x| *x < 0.0) {
        return Err(Error::InvalidArgument("rearrangement needs a nonnegative field (take |u| first)".into()));
    }
    let w = field.grid().weights();
    if is_decreasing(v, w) {
        return Ok(field.clone());
    }
    let n = v.len();
    let mut order: Vec<usize> = (0..n).filter(|&i| w[i] > 0.0).collect();
    order.sort_by(|&a, &b| v[b].total_cmp(&v[a]));
    // Sorted profile as a step function of measure.
    let mut out = vec![0.0; n];
    let mut k = 0;
    let mut used = 0.0; // measure of order[k] already handed out
    for i in (0..n).filter(|&i| w[i] > 0.0) {
        let mut need = w[i];
        let mut acc = 0.0;
        while need > 0.0 && k < order.len() {
            let j = order[k];
            let avail = w[j] - used;
            let take = avail.min(need);
            acc += take * v[j] * v[j];
            need -= take;
            if take >= avail {
                k += 1;
                used = 0.0;
            } else {
                used += take;
            }
        }
        out[i] = (acc / w[i]).sqrt();
    }
    // Unweighted nodes copy their neighbour so the profile stays monotone.
    for i in 0..n {
        if w[i] == 0.0 {
            out[i] = if i + 1 < n { out[i + 1] } else { out[i - 1] };
        }
    }
    RadialField::new(field.grid().clone(), out)
}

fn is_decreasing(v: &[f64], w: &[f64]) -> bool {
    let idx: Vec<usize> = (0..v.len()).filter(|&i| w[i] > 0.0).collect();
    idx.windows(2).all(|p| v[p[1]] <= v[p[0]])
}
