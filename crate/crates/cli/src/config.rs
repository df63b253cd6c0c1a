//! `key=value` configuration: file parsing, flag precedence, strict key
//! checking and typed access.

use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use qnorm_core::nonlinearity::{critical_exponents, NonlinearityKind, NonlinearitySpec};
use qnorm_core::solver::{InitKind, SolverConfig};

use crate::Failure;

/// The subcommands.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CommandKind {
    Solve,
    Sweep,
    Threshold,
    CheckAssumptions,
    AppendixDemo,
    GnEstimate,
    Report,
}

impl CommandKind {
    pub fn name(self) -> &'static str {
        match self {
            CommandKind::Solve => "solve",
            CommandKind::Sweep => "sweep",
            CommandKind::Threshold => "threshold",
            CommandKind::CheckAssumptions => "check-assumptions",
            CommandKind::AppendixDemo => "appendix-demo",
            CommandKind::GnEstimate => "gn-estimate",
            CommandKind::Report => "report",
        }
    }

    /// Keys the command accepts.
    pub fn keys(self) -> Vec<&'static str> {
        const COMMON: &[&str] = &["output_dir", "seed"];
        const NL: &[&str] = &["kind", "N", "q", "alpha", "mu", "p"];
        const GRID: &[&str] = &["r_max", "n_nodes"];
        const SOLVER: &[&str] =
            &["step0", "armijo_c", "backtrack", "tol_pgrad", "max_iter", "eps_schedule", "delta_s", "init", "q_term"];
        let own: &[&[&str]] = match self {
            CommandKind::Solve => &[NL, GRID, SOLVER, &["c", "init_field"]],
            CommandKind::Sweep => &[
                NL,
                GRID,
                SOLVER,
                &["c_list", "workers", "pairs", "c_lo", "c_hi", "cbar_tol", "energy_tol", "scan_points"],
            ],
            CommandKind::Threshold => &[GRID, SOLVER, &["alpha", "p", "offset", "c", "N", "q"]],
            CommandKind::CheckAssumptions => &[NL, &["samples"]],
            CommandKind::AppendixDemo => &[&["N", "q", "rmax_list", "spacing"]],
            CommandKind::GnEstimate => &[GRID, &["N", "p", "q", "variant", "trials"]],
            CommandKind::Report => &[],
        };
        COMMON.iter().chain(own.iter().flat_map(|k| k.iter())).copied().collect()
    }
}

/// Every key any command knows.
pub const ALL_KEYS: &[&str] = &[
    "kind",
    "N",
    "q",
    "alpha",
    "mu",
    "p",
    "c",
    "c_list",
    "r_max",
    "n_nodes",
    "step0",
    "armijo_c",
    "backtrack",
    "tol_pgrad",
    "max_iter",
    "eps_schedule",
    "delta_s",
    "init",
    "init_field",
    "seed",
    "q_term",
    "output_dir",
    "workers",
    "pairs",
    "c_lo",
    "c_hi",
    "cbar_tol",
    "energy_tol",
    "scan_points",
    "offset",
    "samples",
    "rmax_list",
    "spacing",
    "variant",
    "trials",
];

/// Documented defaults of non-physics keys. Physics-bearing keys (`N`, `q`,
/// the nonlinearity parameters, `c`, `c_list`) have none.
pub fn default_value(key: &str) -> Option<String> {
    let v = match key {
        "r_max" => "16",
        "n_nodes" => "2048",
        "step0" => "1",
        "armijo_c" => "1e-4",
        "backtrack" => "0.5",
        "tol_pgrad" => "auto",
        "max_iter" => "20000",
        "delta_s" => "1e-8",
        "init" => "gaussian_bump",
        "seed" => "0",
        "q_term" => "on",
        "workers" => "4",
        "pairs" => "10",
        "cbar_tol" => "0.05",
        "energy_tol" => "1e-6",
        "scan_points" => "6",
        "offset" => "0.05",
        "samples" => "256",
        "rmax_list" => "50,100,200,400",
        "spacing" => "0.03125",
        "variant" => "gradient2",
        "trials" => "200",
        "eps_schedule" => {
            return Some(
                SolverConfig::default().eps_schedule.iter().map(|e| e.to_string()).collect::<Vec<_>>().join(","),
            )
        }
        _ => return None,
    };
    Some(v.to_string())
}

/// Flag spelling of a key.
pub fn flag_name(key: &str) -> String {
    key.replace('_', "-")
}

/// Parse `key = value` lines; `#` starts a comment.
pub fn parse_file(path: &Path) -> Result<Vec<(String, String, usize)>, Failure> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Failure::config(format!("cannot read config {}: {e}", path.display()), "check the --config path"))?;
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            return Err(Failure::config(
                format!("{}:{}: expected `key = value`, got `{line}`", path.display(), i + 1),
                "write one key=value pair per line",
            ));
        };
        out.push((k.trim().to_string(), v.trim().to_string(), i + 1));
    }
    Ok(out)
}

/// Resolved key/value pairs for one command, file values overridden by flags.
#[derive(Clone, Debug)]
pub struct RawConfig {
    pub command: CommandKind,
    pub values: BTreeMap<String, String>,
}

impl RawConfig {
    pub fn build(
        command: CommandKind,
        file: Option<&Path>,
        flags: &BTreeMap<String, String>,
    ) -> Result<Self, Failure> {
        let allowed = command.keys();
        let mut values = BTreeMap::new();
        if let Some(path) = file {
            for (k, v, line) in parse_file(path)? {
                if !ALL_KEYS.contains(&k.as_str()) {
                    return Err(Failure::config(
                        format!("unknown key `{k}` at {}:{line}", path.display()),
                        format!("remove it; valid keys for {} are: {}", command.name(), allowed.join(", ")),
                    ));
                }
                if !allowed.contains(&k.as_str()) {
                    return Err(Failure::config(
                        format!("key `{k}` at {}:{line} is not used by {}", path.display(), command.name()),
                        format!("remove it; valid keys for {} are: {}", command.name(), allowed.join(", ")),
                    ));
                }
                values.insert(k, v);
            }
        }
        for (k, v) in flags {
            if !allowed.contains(&k.as_str()) {
                return Err(Failure::config(
                    format!("flag --{} is not used by {}", flag_name(k), command.name()),
                    format!("drop it; valid keys for {} are: {}", command.name(), allowed.join(", ")),
                ));
            }
            values.insert(k.clone(), v.clone());
        }
        for k in &allowed {
            if !values.contains_key(*k) {
                if let Some(v) = default_value(k) {
                    values.insert(k.to_string(), v);
                }
            }
        }
        Ok(RawConfig { command, values })
    }

    pub fn has(&self, key: &str) -> bool {
        self.values.contains_key(key)
    }

    pub fn get<T: FromStr>(&self, key: &str, what: &str) -> Result<Option<T>, Failure> {
        match self.values.get(key) {
            None => Ok(None),
            Some(v) => v.parse::<T>().map(Some).map_err(|_| {
                Failure::config(
                    format!("key `{key}` expects {what}, got `{v}`"),
                    format!("set {key} (flag --{}) to {what}", flag_name(key)),
                )
            }),
        }
    }

    pub fn require<T: FromStr>(&self, key: &str, what: &str) -> Result<T, Failure> {
        self.get(key, what)?.ok_or_else(|| {
            Failure::config(
                format!("missing required key `{key}` for {}", self.command.name()),
                format!("pass --{} <{what}> or add `{key} = ...` to the config file", flag_name(key)),
            )
        })
    }

    pub fn get_or<T: FromStr>(&self, key: &str, what: &str, default: T) -> Result<T, Failure> {
        Ok(self.get(key, what)?.unwrap_or(default))
    }

    pub fn get_list(&self, key: &str) -> Result<Option<Vec<f64>>, Failure> {
        let Some(v) = self.values.get(key) else { return Ok(None) };
        v.split(',')
            .map(|s| s.trim().parse::<f64>())
            .collect::<Result<Vec<_>, _>>()
            .map(Some)
            .map_err(|_| {
                Failure::config(
                    format!("key `{key}` expects a comma-separated list of numbers, got `{v}`"),
                    format!("write e.g. --{} 1,2,3", flag_name(key)),
                )
            })
    }

    pub fn get_bool(&self, key: &str, default: bool) -> Result<bool, Failure> {
        match self.values.get(key).map(|s| s.to_ascii_lowercase()) {
            None => Ok(default),
            Some(v) => match v.as_str() {
                "on" | "true" | "1" | "yes" => Ok(true),
                "off" | "false" | "0" | "no" => Ok(false),
                _ => Err(Failure::config(
                    format!("key `{key}` expects on/off, got `{v}`"),
                    format!("set --{} on or --{} off", flag_name(key), flag_name(key)),
                )),
            },
        }
    }

    /// The nonlinearity from `kind`, `alpha`, `mu`, `p`, `N`, `q`, validated.
    /// `kind` defaults to `log_power` only when `alpha` is given.
    pub fn nonlinearity(&self) -> Result<NonlinearitySpec, Failure> {
        let dim: usize = self.require("N", "an integer dimension")?;
        let q: f64 = self.require("q", "a real exponent")?;
        critical_exponents(dim, q).map_err(|e| {
            Failure::config(e.to_string(), "choose 2N/(N+2) < q < 2, or 2 < q < N when N >= 3")
        })?;
        let kind = match self.values.get("kind") {
            Some(k) => NonlinearityKind::from_str(k).map_err(|_| {
                Failure::config(format!("unknown nonlinearity kind `{k}`"), "use kind = log_power or kind = pure_power")
            })?,
            None if self.has("alpha") => NonlinearityKind::LogPower,
            None => {
                return Err(Failure::config(
                    format!("no nonlinearity given for {}", self.command.name()),
                    "pass --alpha and --mu (log_power) or --kind pure_power with --mu and --p",
                ))
            }
        };
        let p: Option<f64> = self.get("p", "a real exponent")?;
        let spec = match kind {
            NonlinearityKind::LogPower => {
                let alpha = self.require("alpha", "a real coefficient")?;
                let mu = self.require("mu", "a real coefficient")?;
                NonlinearitySpec::log_power(alpha, mu, p, dim, q)
            }
            NonlinearityKind::PurePower => {
                if self.has("alpha") {
                    return Err(Failure::config(
                        "alpha is not a parameter of pure_power",
                        "drop --alpha or use kind = log_power",
                    ));
                }
                let mu = self.require("mu", "a real coefficient")?;
                let p = self.require("p", "a real exponent")?;
                NonlinearitySpec::pure_power(mu, p, dim, q)
            }
            NonlinearityKind::Custom => {
                return Err(Failure::config(
                    "custom nonlinearities are only available through the library",
                    "use kind = log_power or kind = pure_power",
                ))
            }
        };
        spec.validate().map_err(|e| Failure::config(e.to_string(), "adjust p, mu or alpha to an admissible value"))?;
        Ok(spec)
    }

    pub fn grid(&self) -> Result<(f64, usize), Failure> {
        let r_max = self.get_or("r_max", "a positive real", 16.0)?;
        let n = self.get_or("n_nodes", "an integer >= 16", 2048usize)?;
        Ok((r_max, n))
    }

    pub fn solver(&self) -> Result<SolverConfig, Failure> {
        let d = SolverConfig::default();
        let init = match self.values.get("init") {
            None => d.init.clone(),
            Some(v) => InitKind::from_str(&v.replace('-', "_")).map_err(|e| {
                Failure::config(e.to_string(), "use init = gaussian_bump, plateau or provided")
            })?,
        };
        let cfg = SolverConfig {
            step0: self.get_or("step0", "a positive real", d.step0)?,
            armijo_c: self.get_or("armijo_c", "a real in (0,1)", d.armijo_c)?,
            backtrack: self.get_or("backtrack", "a real in (0,1)", d.backtrack)?,
            tol_pgrad: match self.values.get("tol_pgrad").map(String::as_str) {
                None | Some("auto") => None,
                Some(_) => self.get("tol_pgrad", "a positive real or auto")?,
            },
            max_iter: self.get_or("max_iter", "a positive integer", d.max_iter)?,
            eps_schedule: self.get_list("eps_schedule")?.unwrap_or(d.eps_schedule),
            delta_s: self.get_or("delta_s", "a positive real", d.delta_s)?,
            init,
            seed: self.get_or("seed", "a nonnegative integer", d.seed)?,
            q_term: self.get_bool("q_term", d.q_term)?,
            min_step: d.min_step,
        };
        cfg.validate().map_err(|e| Failure::config(e.to_string(), "fix the solver keys listed in --help"))?;
        Ok(cfg)
    }
}
