//! File emission. Reports are pretty-printed JSON with a trailing newline; no
//! file contains a wall-clock time or the worker count, so equal inputs give
//! byte-identical outputs.

use std::path::{Path, PathBuf};

use serde::Serialize;
use zfepr::spectrum::Spectrum;

use crate::error::{CliError, CliResult};

pub fn ensure_dir(dir: &Path) -> CliResult<()> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(zfepr::Error::from)?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| CliError::io(path, e))
}

pub fn write_bytes(path: &Path, bytes: &[u8]) -> CliResult<()> {
    std::fs::write(path, bytes).map_err(|e| CliError::io(path, e))
}

/// Writes `<stem>.csv` and its `<stem>.json` sidecar; returns the CSV path.
pub fn save_spectrum(spec: &Spectrum, out: &Path, stem: &str) -> CliResult<PathBuf> {
    let csv = out.join(format!("{stem}.csv"));
    let json = out.join(format!("{stem}.json"));
    spec.save(&csv, Some(&json)).map_err(|e| CliError::from_core_at(&csv, e))?;
    Ok(csv)
}

pub fn load_spectrum(path: &Path) -> CliResult<Spectrum> {
    Spectrum::load(path).map_err(|e| CliError::from_core_at(path, e))
}

/// `value ± err` with a precision that suits the uncertainty.
pub fn pm(value: f64, err: f64) -> String {
    if !(err.is_finite() && err > 0.0) {
        return format!("{value:.6}");
    }
    let digits = (1 - err.log10().floor() as i32).clamp(0, 12) as usize;
    format!("{value:.digits$} ± {err:.digits$}")
}
