//! Subcommand execution. Every command resolves and validates its inputs
//! first, then computes inside a run directory named after its hash.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::Serialize;
use serde_json::Value;

use qnorm_core::analysis::{
    find_cbar, max_gtilde, threshold_flip, CbarOptions, CbarReport, FlipReport, SweepOptions,
};
use qnorm_core::functional::GnVariant;
use qnorm_core::grid::{make_grid, RadialField, RadialGrid};
use qnorm_core::nonlinearity::{Exponents, Nonlinearity, NonlinearitySpec, Verdict};
use qnorm_core::solver::{
    boundary_attainment, qualitative_check, stage_increments, BoundaryVerdict, InitKind, QualitativeReport,
    SolveReport, SolverConfig,
};
use qnorm_core::{
    appendix_divergence, continuation_stages, estimate_gn_constant, existence_threshold, sweep_mass,
};

use crate::config::{CommandKind, RawConfig};
use crate::output::{fmt_num, identity_hash, Cell, Run, FAILED, MANIFEST};
use crate::Failure;

/// Environment variable naming the default output root.
pub const OUTPUT_ENV: &str = "QNORM_OUTPUT_DIR";
const DEFAULT_OUTPUT: &str = "qnorm-output";

/// λ at or below this counts as non-positive in the boundary verdict.
const LAMBDA_TOL: f64 = 1e-8;

pub fn run(raw: RawConfig) -> Result<(), Failure> {
    let root = output_root(&raw);
    match raw.command {
        CommandKind::Solve => {
            let plan = SolvePlan::parse(&raw)?;
            execute(&raw, &root, |r| solve(r, &plan))
        }
        CommandKind::Sweep => {
            let plan = SweepPlan::parse(&raw)?;
            execute(&raw, &root, |r| sweep(r, &plan))
        }
        CommandKind::Threshold => {
            let plan = ThresholdPlan::parse(&raw)?;
            execute(&raw, &root, |r| threshold(r, &plan))
        }
        CommandKind::CheckAssumptions => {
            let spec = raw.nonlinearity()?;
            let samples: usize = raw.require("samples", "a positive integer")?;
            positive_count("samples", samples)?;
            let nl = Nonlinearity::new(spec.clone())?;
            execute(&raw, &root, |r| check_assumptions(r, &spec, &nl, samples))
        }
        CommandKind::AppendixDemo => {
            let dim: usize = raw.require("N", "an integer dimension")?;
            let q: f64 = raw.require("q", "a real exponent")?;
            let list = raw.get_list("rmax_list")?.unwrap_or_default();
            let h: f64 = raw.require("spacing", "a positive real")?;
            if !(h > 0.0 && h.is_finite()) {
                return Err(Failure::config(format!("spacing = {h} must be positive"), "pass e.g. --spacing 0.03125"));
            }
            execute(&raw, &root, |r| appendix(r, dim, q, &list, h))
        }
        CommandKind::GnEstimate => {
            let plan = GnPlan::parse(&raw)?;
            execute(&raw, &root, |r| gn(r, &plan))
        }
        CommandKind::Report => execute(&raw, &root, |r| report(r, &root)),
    }
}

fn output_root(raw: &RawConfig) -> PathBuf {
    raw.values
        .get("output_dir")
        .cloned()
        .or_else(|| std::env::var(OUTPUT_ENV).ok().filter(|s| !s.is_empty()))
        .unwrap_or_else(|| DEFAULT_OUTPUT.to_string())
        .into()
}

/// Directory of one run under `root`.
pub fn run_dir(root: &Path, raw: &RawConfig) -> PathBuf {
    let name = raw.command.name();
    let hash = identity_hash(name, &raw.values);
    root.join(format!("{name}-{}", &hash[..12]))
}

/// Run `body` in a fresh run directory. The body returns the summary text;
/// on failure everything written so far is kept and the marker is added.
fn execute(
    raw: &RawConfig,
    root: &Path,
    body: impl FnOnce(&mut Run) -> Result<String, Failure>,
) -> Result<(), Failure> {
    let dir = run_dir(root, raw);
    let mut run = Run::create(&dir, raw.command.name(), &raw.values)?;
    match body(&mut run) {
        Ok(summary) => {
            run.write_text("summary.txt", &summary)?;
            run.finish(Ok(()))?;
            print!("{summary}");
            println!("output: {}", dir.display());
            Ok(())
        }
        Err(f) => {
            run.finish(Err(&f))?;
            eprintln!("partial output: {}", dir.display());
            Err(f)
        }
    }
}

fn positive_count(key: &str, v: usize) -> Result<(), Failure> {
    if v == 0 {
        return Err(Failure::config(format!("{key} must be positive"), format!("pass --{} 1 or more", key.replace('_', "-"))));
    }
    Ok(())
}

fn positive_mass(key: &str, c: f64) -> Result<(), Failure> {
    if !(c > 0.0 && c.is_finite()) {
        return Err(Failure::config(format!("{key} = {c} must be positive"), format!("pass a positive --{}", key.replace('_', "-"))));
    }
    Ok(())
}

fn build_grid(dim: usize, raw: &RawConfig) -> Result<Arc<RadialGrid>, Failure> {
    let (r_max, n) = raw.grid()?;
    make_grid(dim, r_max, n).map_err(|e| Failure::config(e.to_string(), "choose r_max > 0 and n_nodes >= 16"))
}

fn verdict_name(v: Verdict) -> &'static str {
    match v {
        Verdict::Pass => "pass",
        Verdict::Fail => "fail",
        Verdict::Indeterminate => "indeterminate",
    }
}

fn opt_num(x: Option<f64>) -> Cell {
    match x {
        Some(v) => Cell::Num(v),
        None => Cell::Text(String::new()),
    }
}

/// Read a `(r, u)` CSV written on the same grid, e.g. a previous `field.csv`.
fn read_field(path: &Path, grid: &Arc<RadialGrid>) -> Result<RadialField, Failure> {
    let text = fs::read_to_string(path).map_err(|e| {
        Failure::config(format!("cannot read init_field {}: {e}", path.display()), "point --init-field at an (r, u) CSV")
    })?;
    let mut rs = Vec::new();
    let mut us = Vec::new();
    for line in text.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#')) {
        let cols: Vec<&str> = line.split(',').map(str::trim).collect();
        let parsed = (cols.len() >= 2).then(|| (cols[0].parse::<f64>(), cols[1].parse::<f64>()));
        match parsed {
            Some((Ok(r), Ok(u))) => {
                rs.push(r);
                us.push(u);
            }
            _ if rs.is_empty() => continue,
            _ => {
                return Err(Failure::config(
                    format!("init_field {}: bad row `{line}`", path.display()),
                    "rows must be `r,u` numbers",
                ))
            }
        }
    }
    let nodes = grid.nodes();
    let tol = 1e-9 * grid.r_max();
    if rs.len() != nodes.len() || rs.iter().zip(nodes).any(|(a, b)| (a - b).abs() > tol) {
        return Err(Failure::config(
            format!("init_field {} does not sit on the run grid ({} rows, {} nodes)", path.display(), rs.len(), nodes.len()),
            "use the same r_max and n_nodes as the run that wrote the field",
        ));
    }
    Ok(RadialField::new(grid.clone(), us)?)
}

struct SolvePlan {
    c: f64,
    spec: NonlinearitySpec,
    exponents: Exponents,
    nl: Nonlinearity,
    grid: Arc<RadialGrid>,
    cfg: SolverConfig,
    provided: Option<RadialField>,
}

impl SolvePlan {
    fn parse(raw: &RawConfig) -> Result<Self, Failure> {
        let spec = raw.nonlinearity()?;
        let exponents = spec.validate()?;
        let c: f64 = raw.require("c", "a positive mass")?;
        positive_mass("c", c)?;
        let grid = build_grid(spec.dim, raw)?;
        let cfg = raw.solver()?;
        let provided = match (&cfg.init, raw.values.get("init_field")) {
            (InitKind::Provided, Some(p)) => Some(read_field(Path::new(p), &grid)?),
            (InitKind::Provided, None) => {
                return Err(Failure::config("init = provided needs init_field", "pass --init-field <csv>"))
            }
            (_, Some(_)) => {
                return Err(Failure::config("init_field is only read with init = provided", "add --init provided"))
            }
            (_, None) => None,
        };
        let nl = Nonlinearity::new(spec.clone())?;
        Ok(SolvePlan { c, spec, exponents, nl, grid, cfg, provided })
    }
}

#[derive(Serialize)]
struct SolveJson<'a> {
    c: f64,
    nonlinearity: &'a NonlinearitySpec,
    exponents: &'a Exponents,
    stages: &'a [SolveReport],
    stage_increments: Vec<f64>,
    trace_nonincreasing: bool,
    boundary: BoundaryVerdict,
    qualitative: QualitativeReport,
    stalled: Option<String>,
}

fn solve(run: &mut Run, plan: &SolvePlan) -> Result<String, Failure> {
    let (reports, stall) = continuation_stages(&plan.grid, plan.c, &plan.nl, &plan.cfg, plan.provided.as_ref())?;
    let meta = vec![("c", fmt_num(plan.c)), ("nonlinearity", plan.spec.kind.to_string())];

    let rows = reports
        .iter()
        .enumerate()
        .map(|(k, r)| {
            vec![
                Cell::from(k),
                opt_num(r.eps),
                r.energy.total.into(),
                r.energy.kinetic2.into(),
                r.energy.kineticq.into(),
                r.energy.gminus_eps.into(),
                r.energy.gplus.into(),
                r.lambda.into(),
                r.pgrad_norm.into(),
                r.pohozaev.into(),
                r.pohozaev_ball.into(),
                r.nehari.into(),
                r.mass_defect.into(),
                r.iterations.into(),
                format!("{:?}", r.status).to_lowercase().into(),
            ]
        })
        .collect();
    run.write_csv(
        "stages.csv",
        &meta,
        &[
            "stage",
            "eps",
            "energy",
            "kinetic2",
            "kineticq",
            "gminus_eps",
            "gplus",
            "lambda",
            "pgrad_norm",
            "pohozaev",
            "pohozaev_ball",
            "nehari",
            "mass_defect",
            "iterations",
            "status",
        ],
        rows,
    )?;

    let mut trace = Vec::new();
    for (k, r) in reports.iter().enumerate() {
        for (i, t) in r.trace.iter().enumerate() {
            trace.push(vec![Cell::from(k), i.into(), t.energy.into(), t.pgrad_norm.into()]);
        }
    }
    run.write_csv("trace.csv", &meta, &["stage", "iter", "energy", "pgrad_norm"], trace)?;

    let last = reports.last().ok_or_else(|| Failure::numeric("no stage was run"))?;
    let field = &last.field;
    let rows = field.grid().nodes().iter().zip(field.values()).map(|(&r, &u)| vec![r.into(), u.into()]).collect();
    run.write_csv("field.csv", &meta, &["r", "u"], rows)?;

    let boundary = boundary_attainment(last, LAMBDA_TOL);
    let qualitative = qualitative_check(field);
    let doc = SolveJson {
        c: plan.c,
        nonlinearity: &plan.spec,
        exponents: &plan.exponents,
        stages: &reports,
        stage_increments: stage_increments(&reports),
        trace_nonincreasing: reports.iter().all(|r| r.trace_nonincreasing()),
        boundary,
        qualitative: qualitative.clone(),
        stalled: stall.as_ref().map(|e| e.to_string()),
    };
    run.write_json("solve.json", &doc)?;

    if let Some(e) = stall {
        return Err(e.into());
    }
    let unconverged: Vec<usize> = reports.iter().enumerate().filter(|(_, r)| !r.converged()).map(|(k, _)| k).collect();
    if !unconverged.is_empty() {
        return Err(Failure::stalled(format!("stages {unconverged:?} reached max_iter before tol_pgrad")));
    }
    let mut s = String::new();
    let _ = writeln!(s, "solve c = {} ({} stages)", plan.c, reports.len());
    let _ = writeln!(s, "energy      {:.12e}", last.energy.total);
    let _ = writeln!(s, "lambda      {:.12e}", last.lambda);
    let _ = writeln!(s, "pgrad_norm  {:.3e}", last.pgrad_norm);
    let _ = writeln!(s, "pohozaev    {:.3e} (ball {:.3e})", last.pohozaev, last.pohozaev_ball);
    let _ = writeln!(s, "nehari      {:.3e}", last.nehari);
    let _ = writeln!(s, "mass_defect {:.3e}", last.mass_defect);
    let _ = writeln!(s, "boundary    {boundary:?}");
    let _ = writeln!(
        s,
        "qualitative sign_constant = {}, radially_monotone = {}",
        qualitative.sign_constant, qualitative.radially_monotone
    );
    Ok(s)
}

struct SweepPlan {
    nl: Nonlinearity,
    grid: Arc<RadialGrid>,
    cfg: SolverConfig,
    c_list: Option<Vec<f64>>,
    cbar: Option<(f64, f64, CbarOptions)>,
    opts: SweepOptions,
}

impl SweepPlan {
    fn parse(raw: &RawConfig) -> Result<Self, Failure> {
        let spec = raw.nonlinearity()?;
        let grid = build_grid(spec.dim, raw)?;
        let cfg = raw.solver()?;
        let workers: usize = raw.require("workers", "a positive integer")?;
        positive_count("workers", workers)?;
        let c_list = raw.get_list("c_list")?;
        if let Some(list) = &c_list {
            if list.is_empty() || list.iter().any(|c| !(*c > 0.0 && c.is_finite())) || list.windows(2).any(|w| w[1] <= w[0]) {
                return Err(Failure::config(
                    format!("c_list {list:?} must be positive and strictly increasing"),
                    "pass e.g. --c-list 0.5,1,2",
                ));
            }
        }
        let c_lo: Option<f64> = raw.get("c_lo", "a positive mass")?;
        let c_hi: Option<f64> = raw.get("c_hi", "a positive mass")?;
        let cbar = match (c_lo, c_hi) {
            (Some(lo), Some(hi)) => {
                positive_mass("c_lo", lo)?;
                positive_mass("c_hi", hi)?;
                if hi <= lo {
                    return Err(Failure::config(format!("c_hi = {hi} must exceed c_lo = {lo}"), "swap or widen the bracket"));
                }
                let opts = CbarOptions {
                    tol: raw.require("cbar_tol", "a positive real")?,
                    energy_tol: raw.require("energy_tol", "a nonnegative real")?,
                    scan_points: raw.require("scan_points", "an integer >= 2")?,
                    workers,
                };
                if !(opts.tol > 0.0) || !(opts.energy_tol >= 0.0) || opts.scan_points < 2 {
                    return Err(Failure::config(
                        "cbar_tol must be positive, energy_tol nonnegative and scan_points at least 2",
                        "fix cbar_tol, energy_tol or scan_points",
                    ));
                }
                Some((lo, hi, opts))
            }
            (None, None) => None,
            _ => return Err(Failure::config("c_lo and c_hi go together", "pass both --c-lo and --c-hi")),
        };
        if c_list.is_none() && cbar.is_none() {
            return Err(Failure::config(
                "missing required key `c_list` for sweep",
                "pass --c-list <masses>, or --c-lo and --c-hi for the threshold-mass search",
            ));
        }
        let opts = SweepOptions {
            workers,
            subadditivity_pairs: raw.require("pairs", "a nonnegative integer")?,
            seed: cfg.seed,
            ..SweepOptions::default()
        };
        let nl = Nonlinearity::new(spec)?;
        Ok(SweepPlan { nl, grid, cfg, c_list, cbar, opts })
    }
}

fn sweep(run: &mut Run, plan: &SweepPlan) -> Result<String, Failure> {
    let mut s = String::new();
    if let Some(list) = &plan.c_list {
        let curve = sweep_mass(list, &plan.nl, &plan.grid, &plan.cfg, &plan.opts)?;
        let rows = curve
            .points
            .iter()
            .map(|p| {
                vec![
                    Cell::from(p.c),
                    p.m.into(),
                    p.energy.into(),
                    p.lambda.into(),
                    p.pgrad_norm.into(),
                    p.plateau_bound.into(),
                    p.status.to_string().into(),
                ]
            })
            .collect();
        run.write_csv(
            "curve.csv",
            &[],
            &["c", "m", "energy", "lambda", "pgrad_norm", "plateau_bound", "status"],
            rows,
        )?;
        let mut doc = serde_json::to_value(&curve).map_err(|e| Failure::numeric(e.to_string()))?;
        if let Value::Object(map) = &mut doc {
            map.insert("all_negative".into(), curve.all_negative().into());
            map.insert("monotone".into(), curve.is_monotone().into());
            map.insert("subadditive".into(), curve.subadditive().into());
        }
        run.write_json("sweep.json", &doc)?;
        let _ = writeln!(s, "sweep over {} masses", curve.points.len());
        for p in &curve.points {
            let _ = writeln!(s, "  c = {:<8} m = {:+.10e}  lambda = {:+.6e}  {}", p.c, p.m, p.lambda, p.status);
        }
        let _ = writeln!(
            s,
            "monotone = {}, subadditive = {}, all_negative = {}",
            curve.is_monotone(),
            curve.subadditive(),
            curve.all_negative()
        );
    }
    if let Some((lo, hi, opts)) = &plan.cbar {
        let rep: CbarReport = find_cbar(&plan.nl, &plan.grid, &plan.cfg, *lo, *hi, opts)?;
        let rows = rep
            .samples
            .iter()
            .map(|x| vec![Cell::from(x.c), x.energy.into(), x.negative.to_string().into()])
            .collect();
        run.write_csv("cbar.csv", &[("outcome", rep.outcome.to_string())], &["c", "energy", "negative"], rows)?;
        run.write_json("cbar.json", &rep)?;
        let _ = writeln!(s, "threshold mass: {} (monotone scan = {})", rep.outcome, rep.monotone);
    }
    Ok(s)
}

struct ThresholdPlan {
    alpha: f64,
    p: f64,
    flip: Option<(f64, f64, usize, f64, Arc<RadialGrid>, SolverConfig)>,
}

impl ThresholdPlan {
    fn parse(raw: &RawConfig) -> Result<Self, Failure> {
        let alpha: f64 = raw.require("alpha", "a positive real")?;
        let p: f64 = raw.require("p", "a real exponent > 2")?;
        if !(alpha > 0.0 && alpha.is_finite() && p > 2.0 && p.is_finite()) {
            return Err(Failure::config(
                format!("threshold needs alpha > 0 and p > 2, got alpha = {alpha}, p = {p}"),
                "pass e.g. --alpha 1 --p 4",
            ));
        }
        let flip = match raw.get::<f64>("c", "a positive mass")? {
            None => None,
            Some(c) => {
                positive_mass("c", c)?;
                let offset: f64 = raw.require("offset", "a positive real")?;
                if !(offset > 0.0) {
                    return Err(Failure::config(format!("offset = {offset} must be positive"), "pass e.g. --offset 0.05"));
                }
                let dim: usize = raw.require("N", "an integer dimension")?;
                let q: f64 = raw.require("q", "a real exponent")?;
                qnorm_core::nonlinearity::critical_exponents(dim, q).map_err(|e| {
                    Failure::config(e.to_string(), "choose 2N/(N+2) < q < 2, or 2 < q < N when N >= 3")
                })?;
                NonlinearitySpec::log_power(alpha, -offset, Some(p), dim, q)
                    .validate()
                    .map_err(|e| Failure::config(e.to_string(), "choose p inside the admissible range for N and q"))?;
                let grid = build_grid(dim, raw)?;
                Some((c, offset, dim, q, grid, raw.solver()?))
            }
        };
        Ok(ThresholdPlan { alpha, p, flip })
    }
}

#[derive(Serialize)]
struct ThresholdJson {
    alpha: f64,
    p: f64,
    mu_star: f64,
    mu_star_closed: f64,
    mu_star_bisect: f64,
    gtilde_max_at_mu_star: f64,
    flip: Option<FlipReport>,
}

fn threshold(run: &mut Run, plan: &ThresholdPlan) -> Result<String, Failure> {
    let t = existence_threshold(plan.alpha, plan.p)?;
    let at_star = max_gtilde(plan.alpha, t.mu_star_closed, plan.p)?;
    let flip = match &plan.flip {
        None => None,
        Some((c, offset, dim, q, grid, cfg)) => {
            Some(threshold_flip(plan.alpha, plan.p, *offset, *c, *dim, *q, grid, cfg)?)
        }
    };
    let mut s = String::new();
    let _ = writeln!(s, "alpha = {}, p = {}", plan.alpha, plan.p);
    let _ = writeln!(s, "mu_star = {:.15e} (bisection {:.15e})", t.mu_star_closed, t.mu_star_bisect);
    let _ = writeln!(s, "max gtilde at mu_star = {:.3e}", at_star.closed);
    if let Some(f) = &flip {
        let _ = writeln!(s, "below: mu = {:.6} g4 = {}", f.below.mu, verdict_name(f.below.g4));
        match (&f.above, &f.above_error) {
            (Some(a), _) => {
                let _ = writeln!(s, "above: mu = {:.6} c = {} energy = {:.6e} ({})", a.mu, a.c, a.energy, a.status);
            }
            (None, Some(e)) => {
                let _ = writeln!(s, "above: solve failed: {e}");
            }
            (None, None) => {}
        }
        let _ = writeln!(s, "flip observed = {}", f.observed);
    }
    let doc = ThresholdJson {
        alpha: plan.alpha,
        p: plan.p,
        mu_star: t.mu_star_closed,
        mu_star_closed: t.mu_star_closed,
        mu_star_bisect: t.mu_star_bisect,
        gtilde_max_at_mu_star: at_star.closed,
        flip,
    };
    run.write_json("threshold.json", &doc)?;
    Ok(s)
}

fn check_assumptions(run: &mut Run, spec: &NonlinearitySpec, nl: &Nonlinearity, samples: usize) -> Result<String, Failure> {
    let rep = nl.check_assumptions(samples);
    let rows = rep
        .checks
        .iter()
        .map(|c| vec![Cell::from(c.name.as_str()), verdict_name(c.verdict).into(), opt_num(c.witness_s), opt_num(c.estimate)])
        .collect();
    run.write_csv(
        "assumptions.csv",
        &[("nonlinearity", spec.kind.to_string())],
        &["check", "verdict", "witness", "estimate"],
        rows,
    )?;
    let doc = serde_json::json!({
        "nonlinearity": spec,
        "exponents": spec.validate()?,
        "checks": rep,
        "all_pass": rep.all_pass(),
    });
    run.write_json("assumptions.json", &doc)?;
    let mut s = String::new();
    for c in &rep.checks {
        let _ = writeln!(s, "{:<6} {}", c.name, verdict_name(c.verdict));
    }
    let _ = writeln!(s, "all pass = {}", rep.all_pass());
    Ok(s)
}

fn appendix(run: &mut Run, dim: usize, q: f64, list: &[f64], h: f64) -> Result<String, Failure> {
    let table = appendix_divergence(dim, q, list, h)?;
    let rows = table.rows.iter().map(|r| vec![Cell::from(r.r_max), r.i.into(), r.k2.into(), r.kq.into()]).collect();
    run.write_csv(
        "appendix.csv",
        &[("N", dim.to_string()), ("q", fmt_num(q)), ("spacing", fmt_num(h))],
        &["r_max", "I", "K2", "Kq"],
        rows,
    )?;
    let mut doc = serde_json::to_value(&table).map_err(|e| Failure::numeric(e.to_string()))?;
    if let Value::Object(map) = &mut doc {
        map.insert("i_strictly_decreasing".into(), table.i_strictly_decreasing().into());
        map.insert("k2_differences".into(), serde_json::json!(table.k2_differences()));
        map.insert("kq_differences".into(), serde_json::json!(table.kq_differences()));
    }
    run.write_json("appendix.json", &doc)?;
    let mut s = String::new();
    for r in &table.rows {
        let _ = writeln!(s, "R = {:<6} I = {:+.10e}  K2 = {:.10e}  Kq = {:.10e}", r.r_max, r.i, r.k2, r.kq);
    }
    let _ = writeln!(s, "I strictly decreasing = {}", table.i_strictly_decreasing());
    Ok(s)
}

struct GnPlan {
    grid: Arc<RadialGrid>,
    p: f64,
    variant: GnVariant,
    trials: usize,
    seed: u64,
}

impl GnPlan {
    fn parse(raw: &RawConfig) -> Result<Self, Failure> {
        let dim: usize = raw.require("N", "an integer dimension")?;
        let p: f64 = raw.require("p", "a real exponent")?;
        let variant = match raw.values.get("variant").map(String::as_str) {
            Some("gradient2") | None => GnVariant::Gradient2,
            Some("gradient_q") => {
                let q: f64 = raw.require("q", "a real exponent")?;
                qnorm_core::nonlinearity::critical_exponents(dim, q).map_err(|e| {
                    Failure::config(e.to_string(), "choose 2N/(N+2) < q < 2, or 2 < q < N when N >= 3")
                })?;
                GnVariant::GradientQ(q)
            }
            Some(v) => {
                return Err(Failure::config(format!("unknown variant `{v}`"), "use variant = gradient2 or gradient_q"))
            }
        };
        let trials: usize = raw.require("trials", "a positive integer")?;
        positive_count("trials", trials)?;
        let seed: u64 = raw.require("seed", "a nonnegative integer")?;
        let grid = build_grid(dim, raw)?;
        Ok(GnPlan { grid, p, variant, trials, seed })
    }
}

fn gn(run: &mut Run, plan: &GnPlan) -> Result<String, Failure> {
    let est = estimate_gn_constant(&plan.grid, plan.p, plan.variant, plan.trials, plan.seed).map_err(|e| match e {
        qnorm_core::Error::InvalidArgument(m) => Failure::config(m, "choose p inside the Sobolev range"),
        other => other.into(),
    })?;
    run.write_json("gn.json", &est)?;
    let f = &est.field;
    let rows = f.grid().nodes().iter().zip(f.values()).map(|(&r, &u)| vec![r.into(), u.into()]).collect();
    run.write_csv("gn_field.csv", &[("constant", fmt_num(est.constant))], &["r", "u"], rows)?;
    let mut s = String::new();
    let _ = writeln!(s, "GN lower bound ({:?}, N = {}, p = {}): {:.12e}", est.variant, est.dim, est.p, est.constant);
    let _ = writeln!(s, "trials = {}, seed = {}, components = {}", est.trials, est.seed, est.bumps.len());
    Ok(s)
}

fn report(run: &mut Run, root: &Path) -> Result<String, Failure> {
    let mut dirs: Vec<PathBuf> = match fs::read_dir(root) {
        Ok(rd) => rd.filter_map(|e| e.ok().map(|e| e.path())).filter(|p| p.join(MANIFEST).is_file()).collect(),
        Err(_) => Vec::new(),
    };
    dirs.sort();
    let mut rows = Vec::new();
    let mut s = String::new();
    for d in dirs {
        let Ok(text) = fs::read_to_string(d.join(MANIFEST)) else { continue };
        let Ok(m) = serde_json::from_str::<Value>(&text) else { continue };
        let command = m["command"].as_str().unwrap_or("?").to_string();
        if command == "report" {
            continue;
        }
        let ok = m["status"]["ok"].as_bool().unwrap_or(false) && !d.join(FAILED).exists();
        let status = if ok { "ok".to_string() } else { m["status"]["category"].as_str().unwrap_or("failed").to_string() };
        let name = d.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
        let _ = writeln!(s, "== {name} [{status}]");
        if let Ok(summary) = fs::read_to_string(d.join("summary.txt")) {
            for line in summary.lines().filter(|l| !l.starts_with("# manifest")) {
                let _ = writeln!(s, "   {line}");
            }
        } else if let Some(msg) = m["status"]["message"].as_str() {
            let _ = writeln!(s, "   {msg}");
        }
        rows.push(vec![
            Cell::from(name),
            command.into(),
            status.into(),
            m["hash"].as_str().unwrap_or("").into(),
        ]);
    }
    if rows.is_empty() {
        let _ = writeln!(s, "no runs under {}", root.display());
    }
    run.write_csv("report.csv", &[], &["run", "command", "status", "hash"], rows)?;
    run.write_text("report.txt", &s)?;
    Ok(s)
}
