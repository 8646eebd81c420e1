//! Manifests and file emission.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;
use serde_json::{json, Value};
use znl_core::config::Config;
use znl_core::ZnlError;

#[derive(Debug)]
pub enum Failure {
    /// Exit code 2.
    Validation(String),
    /// Exit code 3.
    Runtime(String),
}

impl Failure {
    pub fn code(&self) -> u8 {
        match self {
            Failure::Validation(_) => 2,
            Failure::Runtime(_) => 3,
        }
    }

    pub fn invalid(e: impl std::fmt::Display) -> Self {
        Failure::Validation(e.to_string())
    }

    pub fn runtime(e: impl std::fmt::Display) -> Self {
        Failure::Runtime(e.to_string())
    }
}

impl From<ZnlError> for Failure {
    fn from(e: ZnlError) -> Self {
        Failure::Runtime(e.to_string())
    }
}

pub type CliResult<T> = std::result::Result<T, Failure>;

fn unix_now() -> f64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs_f64()).unwrap_or(0.0)
}

/// Collects everything that ends up in a run manifest. Wall-clock times live
/// only here, never in data files.
pub struct Run {
    pub command: &'static str,
    pub seed: u64,
    pub config: Option<Config>,
    /// Path of the primary output; the manifest sits next to it.
    pub primary: PathBuf,
    pub outputs: Vec<String>,
    started: f64,
}

impl Run {
    pub fn new(command: &'static str, out_dir: &Path, seed: u64, config: Option<Config>, primary: &Path) -> CliResult<Self> {
        fs::create_dir_all(out_dir).map_err(|e| Failure::runtime(format!("cannot create {}: {e}", out_dir.display())))?;
        let primary = out_dir.join(primary);
        if let Some(parent) = primary.parent() {
            fs::create_dir_all(parent).map_err(Failure::runtime)?;
        }
        Ok(Self { command, seed, config, primary, outputs: vec![], started: unix_now() })
    }

    /// `<primary stem>_manifest.json`.
    pub fn manifest_path(&self) -> PathBuf {
        let stem = self.primary.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        self.primary.with_file_name(format!("{stem}_manifest.json"))
    }

    pub fn manifest_name(&self) -> String {
        self.manifest_path().file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
    }

    /// Path next to the primary output.
    pub fn sibling(&self, name: &str) -> PathBuf {
        self.primary.with_file_name(name)
    }

    fn record(&mut self, path: &Path) {
        self.outputs.push(path.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default());
    }

    /// Writes a CSV whose first line is `# manifest=<file>`.
    pub fn write_csv<R: Serialize>(&mut self, path: &Path, rows: &[R]) -> CliResult<()> {
        let mut buf = format!("# manifest={}\n", self.manifest_name()).into_bytes();
        {
            let mut w = csv::Writer::from_writer(&mut buf);
            for r in rows {
                w.serialize(r).map_err(Failure::runtime)?;
            }
            w.flush().map_err(Failure::runtime)?;
        }
        fs::write(path, buf).map_err(|e| Failure::runtime(format!("cannot write {}: {e}", path.display())))?;
        self.record(path);
        Ok(())
    }

    /// Writes pretty JSON with a top-level `manifest` reference.
    pub fn write_json(&mut self, path: &Path, body: Value) -> CliResult<()> {
        let mut obj = json!({ "manifest": self.manifest_name() });
        if let (Some(o), Value::Object(b)) = (obj.as_object_mut(), body) {
            o.extend(b);
        }
        let text = serde_json::to_string_pretty(&obj).map_err(Failure::runtime)? + "\n";
        fs::write(path, text).map_err(|e| Failure::runtime(format!("cannot write {}: {e}", path.display())))?;
        self.record(path);
        Ok(())
    }

    pub fn write_bytes(&mut self, path: &Path, bytes: &[u8]) -> CliResult<()> {
        fs::write(path, bytes).map_err(|e| Failure::runtime(format!("cannot write {}: {e}", path.display())))?;
        self.record(path);
        Ok(())
    }

    /// Writes the manifest. `outcome` carries the run summary or the error.
    pub fn finish(&self, outcome: Value) -> CliResult<()> {
        let m = json!({
            "tool": "znl",
            "version": env!("CARGO_PKG_VERSION"),
            "revision": option_env!("ZNL_REVISION").unwrap_or("unknown"),
            "command": self.command,
            "seed": self.seed,
            "config_hash": self.config.as_ref().map(Config::hash),
            "config": self.config.as_ref().map(|c| serde_json::from_str::<Value>(&c.canonical_json()).unwrap_or(Value::Null)),
            "started_unix": self.started,
            "finished_unix": unix_now(),
            "outputs": self.outputs,
            "outcome": outcome,
        });
        let text = serde_json::to_string_pretty(&m).map_err(Failure::runtime)? + "\n";
        let path = self.manifest_path();
        fs::write(&path, text).map_err(|e| Failure::runtime(format!("cannot write {}: {e}", path.display())))
    }

    /// Finishes with either the summary of `res` or its error, then returns
    /// `res` unchanged.
    pub fn conclude<T>(&self, res: CliResult<T>, summary: impl FnOnce(&T) -> Value) -> CliResult<T> {
        let outcome = match &res {
            Ok(v) => {
                let mut s = summary(v);
                if s.get("status").is_none() {
                    if let Some(o) = s.as_object_mut() {
                        o.insert("status".into(), "ok".into());
                    }
                }
                s
            }
            Err(e) => json!({ "status": "error", "message": e.to_string() }),
        };
        self.finish(outcome)?;
        res
    }
}
