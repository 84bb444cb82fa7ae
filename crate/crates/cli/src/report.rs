//! Report plumbing: units, exit-code errors and JSON/CSV writers.

use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use clap::ValueEnum;
use serde_json::{json, Value};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Units {
    Mm,
    M,
}

impl Units {
    /// Multiplier from metres to this unit.
    pub fn scale(self) -> f64 {
        match self {
            Units::Mm => 1e3,
            Units::M => 1.0,
        }
    }

    pub fn suffix(self) -> &'static str {
        match self {
            Units::Mm => "mm",
            Units::M => "m",
        }
    }

    /// `base_mm` or `base_m`.
    pub fn key(self, base: &str) -> String {
        format!("{base}_{}", self.suffix())
    }

    /// `base_mm2` or `base_m2`.
    pub fn var_key(self, base: &str) -> String {
        format!("{base}_{}2", self.suffix())
    }
}

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Lib(semshape::Error),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Lib(e) if e.is_numerical() => 4,
            CliError::Lib(_) => 3,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Lib(e) if e.is_numerical() => write!(f, "numerical error: {e}"),
            CliError::Lib(e) => write!(f, "data error: {e}"),
        }
    }
}

impl From<semshape::Error> for CliError {
    fn from(e: semshape::Error) -> Self {
        CliError::Lib(e)
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

pub fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

/// Wall-clock bookkeeping; the only non-deterministic part of any report.
pub struct Timer {
    started: SystemTime,
    clock: Instant,
}

impl Timer {
    pub fn start() -> Self {
        Self {
            started: SystemTime::now(),
            clock: Instant::now(),
        }
    }

    pub fn to_json(&self) -> Value {
        let unix = self
            .started
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        json!({
            "started_unix_s": unix,
            "wall_time_s": self.clock.elapsed().as_secs_f64(),
        })
    }
}

/// Key holding the timestamp and wall time in every JSON report.
pub const TIMING_KEY: &str = "timing";

pub fn ensure_dir(dir: &Path) -> CliResult<()> {
    std::fs::create_dir_all(dir).map_err(|e| semshape::Error::io(dir, e).into())
}

pub fn write_text(path: &Path, text: &str) -> CliResult<()> {
    std::fs::write(path, text).map_err(|e| semshape::Error::io(path, e).into())
}

/// Writes `report` with the timing block attached under [`TIMING_KEY`].
pub fn write_report(path: &Path, mut report: Value, timer: &Timer) -> CliResult<()> {
    if let Value::Object(map) = &mut report {
        map.insert(TIMING_KEY.to_string(), timer.to_json());
    }
    let text = serde_json::to_string_pretty(&report).expect("JSON values always serialise");
    write_text(path, &(text + "\n"))
}

pub fn out_path(dir: &Path, name: &str) -> PathBuf {
    dir.join(name)
}
