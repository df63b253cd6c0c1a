//! `qnorm`: command-line front end for the normalized-solution solver.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod config;
mod output;

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::{CommandKind, RawConfig};

/// Failure category with its exit code.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FailureKind {
    Config,
    Numeric,
    Stalled,
}

#[derive(Debug)]
pub struct Failure {
    kind: FailureKind,
    message: String,
    remedy: Option<String>,
}

impl Failure {
    pub fn config(message: impl Into<String>, remedy: impl Into<String>) -> Self {
        Failure { kind: FailureKind::Config, message: message.into(), remedy: Some(remedy.into()) }
    }

    pub fn numeric(message: impl Into<String>) -> Self {
        Failure { kind: FailureKind::Numeric, message: message.into(), remedy: None }
    }

    pub fn stalled(message: impl Into<String>) -> Self {
        Failure {
            kind: FailureKind::Stalled,
            message: message.into(),
            remedy: Some("raise max_iter, refine the grid or change init".into()),
        }
    }

    pub fn exit_code(&self) -> u8 {
        match self.kind {
            FailureKind::Config => 2,
            FailureKind::Numeric => 3,
            FailureKind::Stalled => 4,
        }
    }

    pub fn category(&self) -> &'static str {
        match self.kind {
            FailureKind::Config => "config",
            FailureKind::Numeric => "numeric",
            FailureKind::Stalled => "stalled",
        }
    }

    pub fn message(&self) -> &str {
        &self.message
    }
}

impl From<qnorm_core::Error> for Failure {
    fn from(e: qnorm_core::Error) -> Self {
        use qnorm_core::Error as E;
        match e {
            E::StageStalled { .. } => Failure::stalled(e.to_string()),
            E::Inadmissible(_) | E::InvalidNonlinearity(_) | E::InvalidArgument(_) | E::LengthMismatch { .. } => {
                Failure::config(e.to_string(), "check the configuration values")
            }
            _ => Failure::numeric(e.to_string()),
        }
    }
}

#[derive(Parser, Debug)]
#[command(name = "qnorm", version, about = "Normalized solutions of -Δu - Δ_q u + λu = g(u) on radial grids")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// ε-continuation solve at one mass.
    Solve(Keys),
    /// Ground-energy map over a list of masses; optional threshold-mass search.
    Sweep(Keys),
    /// Existence threshold μ* of the log-plus-power family, optional two-sided runs.
    Threshold(Keys),
    /// Audit the structural assumptions of a nonlinearity.
    CheckAssumptions(Keys),
    /// Truncated integrals of the slowly decaying profile.
    AppendixDemo(Keys),
    /// Lower bound on a Gagliardo–Nirenberg constant.
    GnEstimate(Keys),
    /// Summarize the runs found under the output directory.
    Report(Keys),
}

/// Keys mirror the config file; flags override file values.
#[derive(Args, Debug, Default)]
struct Keys {
    /// Config file with one `key = value` per line, `#` comments.
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Nonlinearity family: log_power (default when --alpha is given) or pure_power.
    #[arg(long)]
    kind: Option<String>,
    /// Space dimension N.
    #[arg(long = "N", value_name = "N")]
    dim: Option<String>,
    /// Exponent of the q-Laplacian.
    #[arg(long)]
    q: Option<String>,
    /// Coefficient of s ln s².
    #[arg(long, allow_hyphen_values = true)]
    alpha: Option<String>,
    /// Coefficient of the power term.
    #[arg(long, allow_hyphen_values = true)]
    mu: Option<String>,
    /// Power exponent.
    #[arg(long)]
    p: Option<String>,
    /// Mass parameter, ‖u‖₂ = c.
    #[arg(long)]
    c: Option<String>,
    /// Increasing comma-separated masses.
    #[arg(long)]
    c_list: Option<String>,
    /// Outer radius of the grid [default: 16].
    #[arg(long)]
    r_max: Option<String>,
    /// Grid nodes [default: 2048].
    #[arg(long)]
    n_nodes: Option<String>,
    /// Initial trial step [default: 1].
    #[arg(long)]
    step0: Option<String>,
    /// Armijo constant [default: 1e-4].
    #[arg(long)]
    armijo_c: Option<String>,
    /// Backtracking factor [default: 0.5].
    #[arg(long)]
    backtrack: Option<String>,
    /// Projected-gradient stopping level, or auto for 1e-8 (1 + |J|) [default: auto].
    #[arg(long)]
    tol_pgrad: Option<String>,
    /// Iteration cap per stage [default: 20000].
    #[arg(long)]
    max_iter: Option<String>,
    /// Strictly decreasing comma-separated ε values [default: 2^-1, ..., 2^-12].
    #[arg(long)]
    eps_schedule: Option<String>,
    /// Relative smoothing of the q-term [default: 1e-8].
    #[arg(long)]
    delta_s: Option<String>,
    /// gaussian_bump, plateau or provided [default: gaussian_bump].
    #[arg(long)]
    init: Option<String>,
    /// CSV (r, u) on the run grid, for init = provided.
    #[arg(long)]
    init_field: Option<String>,
    /// Seed of every randomized step [default: 0].
    #[arg(long)]
    seed: Option<String>,
    /// on/off: include the q-Laplacian term [default: on].
    #[arg(long)]
    q_term: Option<String>,
    /// Output directory [default: $QNORM_OUTPUT_DIR, else qnorm-output].
    #[arg(long)]
    output_dir: Option<String>,
    /// Worker threads for independent solves [default: 4].
    #[arg(long)]
    workers: Option<String>,
    /// Sampled subadditivity pairs [default: 10].
    #[arg(long)]
    pairs: Option<String>,
    /// Lower end of the threshold-mass search.
    #[arg(long)]
    c_lo: Option<String>,
    /// Upper end of the threshold-mass search.
    #[arg(long)]
    c_hi: Option<String>,
    /// Bracket width of the threshold-mass search [default: 0.05].
    #[arg(long)]
    cbar_tol: Option<String>,
    /// Negativity level m(c) < -energy_tol [default: 1e-6].
    #[arg(long)]
    energy_tol: Option<String>,
    /// Masses scanned before bisection [default: 6].
    #[arg(long)]
    scan_points: Option<String>,
    /// Offset of the two-sided runs around μ* [default: 0.05].
    #[arg(long)]
    offset: Option<String>,
    /// Samples per assumption check [default: 256].
    #[arg(long)]
    samples: Option<String>,
    /// Increasing comma-separated outer radii [default: 50,100,200,400].
    #[arg(long = "rmax-list")]
    rmax_list: Option<String>,
    /// Grid spacing of the appendix demo [default: 0.03125].
    #[arg(long)]
    spacing: Option<String>,
    /// gradient2 or gradient_q [default: gradient2].
    #[arg(long)]
    variant: Option<String>,
    /// Random profiles before ascent [default: 200].
    #[arg(long)]
    trials: Option<String>,
}

impl Keys {
    fn flags(&self) -> BTreeMap<String, String> {
        let pairs: [(&str, &Option<String>); 35] = [
            ("kind", &self.kind),
            ("N", &self.dim),
            ("q", &self.q),
            ("alpha", &self.alpha),
            ("mu", &self.mu),
            ("p", &self.p),
            ("c", &self.c),
            ("c_list", &self.c_list),
            ("r_max", &self.r_max),
            ("n_nodes", &self.n_nodes),
            ("step0", &self.step0),
            ("armijo_c", &self.armijo_c),
            ("backtrack", &self.backtrack),
            ("tol_pgrad", &self.tol_pgrad),
            ("max_iter", &self.max_iter),
            ("eps_schedule", &self.eps_schedule),
            ("delta_s", &self.delta_s),
            ("init", &self.init),
            ("init_field", &self.init_field),
            ("seed", &self.seed),
            ("q_term", &self.q_term),
            ("output_dir", &self.output_dir),
            ("workers", &self.workers),
            ("pairs", &self.pairs),
            ("c_lo", &self.c_lo),
            ("c_hi", &self.c_hi),
            ("cbar_tol", &self.cbar_tol),
            ("energy_tol", &self.energy_tol),
            ("scan_points", &self.scan_points),
            ("offset", &self.offset),
            ("samples", &self.samples),
            ("rmax_list", &self.rmax_list),
            ("spacing", &self.spacing),
            ("variant", &self.variant),
            ("trials", &self.trials),
        ];
        pairs
            .into_iter()
            .filter_map(|(k, v)| v.as_ref().map(|v| (k.to_string(), v.clone())))
            .collect()
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let (kind, keys) = match &cli.command {
        Command::Solve(k) => (CommandKind::Solve, k),
        Command::Sweep(k) => (CommandKind::Sweep, k),
        Command::Threshold(k) => (CommandKind::Threshold, k),
        Command::CheckAssumptions(k) => (CommandKind::CheckAssumptions, k),
        Command::AppendixDemo(k) => (CommandKind::AppendixDemo, k),
        Command::GnEstimate(k) => (CommandKind::GnEstimate, k),
        Command::Report(k) => (CommandKind::Report, k),
    };
    let result = RawConfig::build(kind, keys.config.as_deref(), &keys.flags()).and_then(commands::run);
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error ({}): {}", f.category(), f.message);
            if let Some(r) = &f.remedy {
                eprintln!("hint: {r}");
            }
            ExitCode::from(f.exit_code())
        }
    }
}
