use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;
use serde_json::Value;

use crate::CliError;

pub const VERSION: &str = concat!("v", env!("CARGO_PKG_VERSION"));

/// Every report is wrapped with the provenance of the run.
#[derive(Serialize)]
pub struct Envelope<'a, T: Serialize> {
    pub subcommand: &'a str,
    pub version: &'a str,
    pub config_sha256: &'a str,
    pub seed: Option<u64>,
    pub overrides: &'a Value,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub timestamp: Option<u64>,
    pub result: T,
}

pub struct Writer {
    pub dir: PathBuf,
    pub reproducible: bool,
}

impl Writer {
    pub fn new(dir: PathBuf, reproducible: bool) -> Result<Self, CliError> {
        fs::create_dir_all(&dir).map_err(|e| io_err(&dir, e))?;
        Ok(Writer { dir, reproducible })
    }

    pub fn timestamp(&self) -> Option<u64> {
        if self.reproducible {
            None
        } else {
            SystemTime::now().duration_since(UNIX_EPOCH).ok().map(|d| d.as_secs())
        }
    }

    /// Temp file in the target directory, then rename.
    pub fn write_atomic(&self, name: &str, bytes: &[u8]) -> Result<PathBuf, CliError> {
        let target = self.dir.join(name);
        let tmp = self.dir.join(format!(".{name}.{}.tmp", std::process::id()));
        let mut f = fs::File::create(&tmp).map_err(|e| io_err(&tmp, e))?;
        f.write_all(bytes).map_err(|e| io_err(&tmp, e))?;
        f.sync_all().map_err(|e| io_err(&tmp, e))?;
        drop(f);
        fs::rename(&tmp, &target).map_err(|e| io_err(&target, e))?;
        Ok(target)
    }

    pub fn json<T: Serialize>(&self, name: &str, value: &T) -> Result<PathBuf, CliError> {
        let mut s = serde_json::to_string_pretty(value).map_err(|e| CliError::Io(e.to_string()))?;
        s.push('\n');
        self.write_atomic(name, s.as_bytes())
    }

    /// One JSON array per particle.
    pub fn jsonl(&self, name: &str, rows: &[Vec<f64>]) -> Result<PathBuf, CliError> {
        let mut out = String::new();
        for r in rows {
            out.push_str(&serde_json::to_string(r).map_err(|e| CliError::Io(e.to_string()))?);
            out.push('\n');
        }
        self.write_atomic(name, out.as_bytes())
    }
}

fn io_err(path: &Path, e: std::io::Error) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}

/// Reads a JSONL particle file.
pub fn read_cloud(path: &Path) -> Result<Vec<Vec<f64>>, CliError> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| CliError::ConfigInvalid {
                path: format!("{}:{}", path.display(), i + 1),
                message: e.to_string(),
            })
        })
        .collect()
}
