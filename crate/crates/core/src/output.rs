//! CSV and summary writers shared by the experiment drivers.
//!
//! Every CSV starts with `#`-prefixed header lines: crate version and seed first, then the
//! optimizer defaults and the resolved configuration. The column-name row and the data rows
//! follow. Reals are written with 17 significant digits.

use std::fs;
use std::path::Path;

use crate::config::ExperimentConfig;
use crate::error::Result;
use crate::optim::{AdamConfig, LbfgsConfig};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub fn fmt_real(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn header(cfg: &ExperimentConfig) -> String {
    let adam = AdamConfig::default();
    let lb = LbfgsConfig::default();
    let mut out = format!("# pinn-ntk version={VERSION}\n# seed={}\n", cfg.seed);
    out.push_str(&format!(
        "# adam_defaults=beta1:{:?},beta2:{:?},eps:{:e}\n",
        adam.beta1, adam.beta2, adam.eps
    ));
    out.push_str(&format!(
        "# lbfgs_defaults=history:{},c1:{:e},c2:{:?},max_line_search:{},grad_tol:{:e},rel_decrease_tol:{:e}\n",
        lb.history, lb.c1, lb.c2, lb.max_line_search, lb.grad_tol, lb.rel_decrease_tol
    ));
    for line in cfg.to_text().lines() {
        out.push_str("# ");
        out.push_str(line);
        out.push('\n');
    }
    out
}

/// Writes `header`, the column names and `rows` to `path`.
pub fn write_csv(
    path: &Path,
    cfg: &ExperimentConfig,
    columns: &[&str],
    rows: &[Vec<String>],
) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(columns)?;
    for r in rows {
        w.write_record(r)?;
    }
    let body = w
        .into_inner()
        .map_err(|e| std::io::Error::other(e.to_string()))?;
    let mut bytes = header(cfg).into_bytes();
    bytes.extend_from_slice(&body);
    fs::write(path, bytes)?;
    Ok(())
}

/// Data rows of a CSV written by [`write_csv`]: every line after the header block and the
/// column-name row.
pub fn data_rows(text: &str) -> Vec<&str> {
    text.lines()
        .filter(|l| !l.starts_with('#'))
        .skip(1)
        .collect()
}

pub fn write_status(dir: &Path, status: &str) -> Result<()> {
    fs::write(dir.join("status.txt"), format!("{status}\n"))?;
    Ok(())
}

pub fn write_summary(dir: &Path, value: &serde_json::Value) -> Result<()> {
    let text =
        serde_json::to_string_pretty(value).map_err(|e| std::io::Error::other(e.to_string()))?;
    fs::write(dir.join("summary.json"), text + "\n")?;
    Ok(())
}
