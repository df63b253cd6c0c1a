//! Artifact writing: manifest, hashed CSV/JSON/text files and the failure
//! marker.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::Failure;

pub const MANIFEST: &str = "manifest.json";
pub const FAILED: &str = "FAILED";

/// One CSV cell.
pub enum Cell {
    Num(f64),
    Int(i64),
    Text(String),
}

impl From<f64> for Cell {
    fn from(x: f64) -> Self {
        Cell::Num(x)
    }
}

impl From<usize> for Cell {
    fn from(x: usize) -> Self {
        Cell::Int(x as i64)
    }
}

impl From<String> for Cell {
    fn from(x: String) -> Self {
        Cell::Text(x)
    }
}

impl From<&str> for Cell {
    fn from(x: &str) -> Self {
        Cell::Text(x.to_string())
    }
}

/// 17 significant digits, enough to round-trip every `f64`.
pub fn fmt_num(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else {
        format!("{x}")
    }
}

fn now() -> f64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs_f64()).unwrap_or(0.0)
}

fn io_failure(path: &Path, e: std::io::Error) -> Failure {
    Failure::config(format!("cannot write {}: {e}", path.display()), "check that the output directory is writable")
}

/// SHA-256 of the command, its resolved configuration and the version. The
/// output location is not part of a run's identity.
pub fn identity_hash(command: &str, config: &BTreeMap<String, String>) -> String {
    let mut keyed = config.clone();
    keyed.remove("output_dir");
    let identity = json!({ "command": command, "config": keyed, "version": env!("CARGO_PKG_VERSION") });
    hex::encode(Sha256::digest(identity.to_string().as_bytes()))
}

/// Output directory of one run.
pub struct Run {
    dir: PathBuf,
    command: String,
    config: BTreeMap<String, String>,
    hash: String,
    started: f64,
    artifacts: Vec<String>,
}

impl Run {
    pub fn create(dir: &Path, command: &str, config: &BTreeMap<String, String>) -> Result<Self, Failure> {
        fs::create_dir_all(dir).map_err(|e| io_failure(dir, e))?;
        // Artifacts of an earlier run in the same directory must not survive
        // next to the new ones.
        let previous = dir.join(MANIFEST);
        if let Ok(text) = fs::read_to_string(&previous) {
            if let Ok(Value::Object(m)) = serde_json::from_str::<Value>(&text) {
                let names = m.get("artifacts").and_then(Value::as_array).cloned().unwrap_or_default();
                for name in names.iter().filter_map(Value::as_str).filter(|n| !n.contains(['/', '\\'])) {
                    let _ = fs::remove_file(dir.join(name));
                }
            }
        }
        for stale in [previous, dir.join(FAILED)] {
            if stale.exists() {
                fs::remove_file(&stale).map_err(|e| io_failure(&stale, e))?;
            }
        }
        let hash = identity_hash(command, config);
        Ok(Run {
            dir: dir.to_path_buf(),
            command: command.to_string(),
            config: config.clone(),
            hash,
            started: now(),
            artifacts: Vec::new(),
        })
    }

    fn put(&mut self, name: &str, body: String) -> Result<(), Failure> {
        let path = self.dir.join(name);
        fs::write(&path, body).map_err(|e| io_failure(&path, e))?;
        self.artifacts.push(name.to_string());
        Ok(())
    }

    /// CSV with `#` metadata lines (the manifest hash first) and a header row.
    pub fn write_csv(
        &mut self,
        name: &str,
        meta: &[(&str, String)],
        header: &[&str],
        rows: Vec<Vec<Cell>>,
    ) -> Result<(), Failure> {
        let mut out = format!("# manifest: {}\n# command: {}\n", self.hash, self.command);
        for (k, v) in meta {
            out.push_str(&format!("# {k}: {v}\n"));
        }
        out.push_str(&header.join(","));
        out.push('\n');
        for row in rows {
            let cells: Vec<String> = row
                .into_iter()
                .map(|c| match c {
                    Cell::Num(x) => fmt_num(x),
                    Cell::Int(i) => i.to_string(),
                    Cell::Text(t) => t,
                })
                .collect();
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        self.put(name, out)
    }

    /// JSON object carrying a top-level `manifest` field.
    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), Failure> {
        let v = serde_json::to_value(value)
            .map_err(|e| Failure::numeric(format!("cannot serialize {name}: {e}")))?;
        let wrapped = match v {
            Value::Object(mut map) => {
                map.insert("manifest".into(), Value::String(self.hash.clone()));
                Value::Object(map)
            }
            other => json!({ "manifest": self.hash, "data": other }),
        };
        let text = serde_json::to_string_pretty(&wrapped).expect("valid JSON value");
        self.put(name, text + "\n")
    }

    /// Plain text whose first line names the manifest hash.
    pub fn write_text(&mut self, name: &str, body: &str) -> Result<(), Failure> {
        let text = format!("# manifest: {}\n{body}", self.hash);
        self.put(name, text)
    }

    /// Write the manifest and, on failure, the marker file.
    pub fn finish(self, outcome: Result<(), &Failure>) -> Result<(), Failure> {
        let status = match outcome {
            Ok(()) => json!({ "ok": true }),
            Err(f) => json!({ "ok": false, "category": f.category(), "message": f.message() }),
        };
        let seed = self.config.get("seed").cloned().unwrap_or_else(|| "0".into());
        let manifest = json!({
            "hash": self.hash,
            "command": self.command,
            "config": self.config,
            "seed": seed,
            "versions": {
                "qnorm": env!("CARGO_PKG_VERSION"),
                "qnorm_core": qnorm_core::VERSION,
            },
            "started_unix": self.started,
            "finished_unix": now(),
            "status": status,
            "artifacts": self.artifacts,
        });
        let path = self.dir.join(MANIFEST);
        fs::write(&path, serde_json::to_string_pretty(&manifest).expect("valid JSON") + "\n")
            .map_err(|e| io_failure(&path, e))?;
        if let Err(f) = outcome {
            let marker = self.dir.join(FAILED);
            fs::write(&marker, format!("{}: {}\n", f.category(), f.message())).map_err(|e| io_failure(&marker, e))?;
        }
        Ok(())
    }
}
