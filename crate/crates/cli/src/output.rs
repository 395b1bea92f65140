use std::path::Path;

use anyhow::{Context, Result};
use dynsparse::data::fmt_f64;
use serde::Serialize;

use crate::config::RunConfig;

/// `t` column (or the date column when the data has one) followed by one column per series.
pub fn write_paths(path: &Path, index: &[String], names: &[String], cols: &[Vec<f64>]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))?;
    let mut header = vec!["t".to_string()];
    header.extend(names.iter().cloned());
    w.write_record(&header)?;
    for (i, label) in index.iter().enumerate() {
        let mut row = vec![label.clone()];
        row.extend(cols.iter().map(|c| fmt_f64(c[i])));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn git_hash() -> Option<String> {
    let out = std::process::Command::new("git").args(["rev-parse", "HEAD"]).output().ok()?;
    out.status
        .success()
        .then(|| String::from_utf8_lossy(&out.stdout).trim().to_string())
        .filter(|s| !s.is_empty())
}

#[derive(Serialize)]
struct Manifest<'a> {
    command: &'a str,
    version: &'static str,
    git_hash: Option<String>,
    seed: u64,
    config: &'a RunConfig,
}

/// Writes `manifest.json` and a re-runnable `run.toml`.
pub fn write_manifest(dir: &Path, command: &str, cfg: &RunConfig) -> Result<()> {
    let m = Manifest {
        command,
        version: env!("CARGO_PKG_VERSION"),
        git_hash: git_hash(),
        seed: cfg.seed,
        config: cfg,
    };
    write_json(&dir.join("manifest.json"), &m)?;
    std::fs::write(dir.join("run.toml"), cfg.to_toml()?)?;
    Ok(())
}

/// Min, quartiles and max by linear interpolation.
pub fn five_numbers(values: &[f64]) -> [f64; 5] {
    let mut v: Vec<f64> = values.iter().copied().filter(|x| x.is_finite()).collect();
    if v.is_empty() {
        return [f64::NAN; 5];
    }
    v.sort_by(|a, b| a.total_cmp(b));
    let q = |p: f64| {
        let pos = p * (v.len() - 1) as f64;
        let lo = pos.floor() as usize;
        let hi = pos.ceil() as usize;
        v[lo] + (v[hi] - v[lo]) * (pos - lo as f64)
    };
    [v[0], q(0.25), q(0.5), q(0.75), v[v.len() - 1]]
}
