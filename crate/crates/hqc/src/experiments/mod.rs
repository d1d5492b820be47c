//! Experiment drivers, configuration, and CSV reporting.
//!
//! Each driver sets up a reference material and load, solves the full
//! lattice problem once, and sweeps a list of macroscopic meshes, recording
//! the errors of the homogenized solution `u^H`, the reconstructed solution
//! `u^{H,c}`, and (for the 1D chains) the naive quasicontinuum solution.
//! Results come back as [`Table`]s; [`fit_slope`] extracts log-log
//! convergence rates with the small-`H` plateau excluded.
//!
//! Configurations are plain serde structs with defaults matching the
//! reference studies; they can be loaded from TOML and are written back to
//! the output directory next to the CSV files so a run is reproducible.

pub mod oned;
pub mod twod;

use std::fmt;
use std::path::Path;

use serde::{de::DeserializeOwned, Deserialize, Serialize};

use crate::error::{HqcError, Result};

pub use oned::{
    lj_chain, p_study_spread, quadratic_chain_1d, run_linear_1d, run_nonlinear_1d, run_p_study,
    Chain1dConfig, PStudyConfig,
};
pub use twod::{case_bonds, load_2d, run_2d, TwoDConfig};

/// A rectangular table of named `f64` columns, the common result format of
/// all experiment drivers.
#[derive(Debug, Clone)]
pub struct Table {
    headers: Vec<String>,
    rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn new(headers: &[&str]) -> Self {
        Self { headers: headers.iter().map(|s| s.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<f64>) {
        assert_eq!(row.len(), self.headers.len(), "row width mismatch");
        self.rows.push(row);
    }

    pub fn headers(&self) -> &[String] {
        &self.headers
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    pub fn column(&self, name: &str) -> Result<Vec<f64>> {
        let idx = self
            .headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| HqcError::Config(format!("no column named {name:?}")))?;
        Ok(self.rows.iter().map(|r| r[idx]).collect())
    }

    /// Log-log convergence rate of `column` against the `h` column, plateau
    /// excluded; see [`fit_slope`].
    pub fn slope(&self, column: &str) -> Result<f64> {
        let h = self.column("h")?;
        let e = self.column(column)?;
        fit_slope(&h, &e)
            .ok_or_else(|| HqcError::Config(format!("not enough points to fit {column:?}")))
    }

    /// Write as CSV: header row, comma separator, `.` decimal point, LF
    /// line endings.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_path(path)
            .map_err(csv_err)?;
        w.write_record(&self.headers).map_err(csv_err)?;
        for row in &self.rows {
            w.write_record(row.iter().map(|v| format!("{v:.16e}"))).map_err(csv_err)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let mut r = csv::ReaderBuilder::new()
            .has_headers(true)
            .from_path(path)
            .map_err(csv_err)?;
        let headers = r.headers().map_err(csv_err)?.iter().map(str::to_string).collect();
        let mut rows = Vec::new();
        for record in r.records() {
            let record = record.map_err(csv_err)?;
            let row: std::result::Result<Vec<f64>, _> =
                record.iter().map(str::parse::<f64>).collect();
            rows.push(row.map_err(|e| HqcError::Config(format!("bad CSV number: {e}")))?);
        }
        Ok(Self { headers, rows })
    }
}

impl fmt::Display for Table {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{}", self.headers.join(","))?;
        for row in &self.rows {
            let cells: Vec<String> = row.iter().map(|v| format!("{v:.6e}")).collect();
            writeln!(f, "{}", cells.join(","))?;
        }
        Ok(())
    }
}

fn csv_err(e: csv::Error) -> HqcError {
    HqcError::Config(format!("CSV error: {e}"))
}

/// Least-squares slope of `log err` against `log h` over the asymptotic
/// range of the sweep. Both ends of a convergence table can be polluted: the
/// coarsest meshes are pre-asymptotic and the finest hit the `O(eps)`
/// plateau. The asymptotic range is identified as the longest contiguous
/// window whose per-step rates agree to within 0.3 (ties broken by smaller
/// in-window rate spread, then by the coarser start). Expects `h` in
/// decreasing order; returns `None` with fewer than two usable points.
pub fn fit_slope(h: &[f64], err: &[f64]) -> Option<f64> {
    assert_eq!(h.len(), err.len());
    let n = h.len();
    if n < 2 || err.iter().any(|&e| !(e > 0.0)) {
        return None;
    }
    let steps: Vec<f64> = (0..n - 1)
        .map(|i| (err[i] / err[i + 1]).ln() / (h[i] / h[i + 1]).ln())
        .collect();
    if n == 2 {
        return Some(steps[0]);
    }
    // (length, -spread, -start) lexicographic best among windows of >= 2
    // steps with spread <= 0.3; if none qualifies, the min-spread window.
    let spread_of = |a: usize, b: usize| -> f64 {
        let w = &steps[a..b];
        let lo = w.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        hi - lo
    };
    let mut best: Option<(usize, usize, f64)> = None;
    for a in 0..steps.len() - 1 {
        for b in a + 2..=steps.len() {
            let spread = spread_of(a, b);
            let better = match best {
                None => true,
                Some((ba, bb, bs)) => {
                    let (cand_ok, best_ok) = (spread <= 0.3, bs <= 0.3);
                    match (cand_ok, best_ok) {
                        (true, false) => true,
                        (false, true) => false,
                        // Both consistent: longest wins, then tightest.
                        (true, true) => {
                            (b - a, -spread, -(a as f64)) > (bb - ba, -bs, -(ba as f64))
                        }
                        // Neither consistent: tightest wins.
                        (false, false) => spread < bs,
                    }
                }
            };
            if better {
                best = Some((a, b, spread));
            }
        }
    }
    let (a, b, _) = best?;
    let xs: Vec<f64> = h[a..=b].iter().map(|v| v.ln()).collect();
    let ys: Vec<f64> = err[a..=b].iter().map(|v| v.ln()).collect();
    let m = xs.len() as f64;
    let xm = xs.iter().sum::<f64>() / m;
    let ym = ys.iter().sum::<f64>() / m;
    let sxx: f64 = xs.iter().map(|x| (x - xm) * (x - xm)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - xm) * (y - ym)).sum();
    Some(sxy / sxx)
}

/// Smallest value of a column: the plateau level of a saturating error.
pub fn plateau_level(err: &[f64]) -> f64 {
    err.iter().copied().fold(f64::INFINITY, f64::min)
}

/// Load a TOML configuration file.
pub fn load_config<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path)?;
    toml::from_str(&text).map_err(|e| HqcError::Config(format!("{}: {e}", path.display())))
}

/// Write the resolved configuration next to the experiment output.
pub fn write_config<T: Serialize>(cfg: &T, path: &Path) -> Result<()> {
    let text =
        toml::to_string_pretty(cfg).map_err(|e| HqcError::Config(format!("TOML error: {e}")))?;
    std::fs::write(path, text)?;
    Ok(())
}

/// Default macroscopic mesh sweep: `H = 2^-1, ..., 2^-7`.
pub(crate) fn default_mesh() -> Vec<usize> {
    (1..=7).map(|j| 1usize << j).collect()
}

/// One named run directory: writes `config.toml` and the result CSVs.
pub fn write_run<T: Serialize>(out: &Path, cfg: &T, tables: &[(&str, &Table)]) -> Result<()> {
    std::fs::create_dir_all(out)?;
    write_config(cfg, &out.join("config.toml"))?;
    for (name, table) in tables {
        table.write_csv(&out.join(format!("{name}.csv")))?;
    }
    Ok(())
}

/// Which of the two 1D reference chains an experiment uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WhichChain {
    Linear,
    Nonlinear,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fit_slope_recovers_exact_power_law() {
        let h: Vec<f64> = (1..=6).map(|j| 2f64.powi(-j)).collect();
        let e: Vec<f64> = h.iter().map(|&x| 3.0 * x * x).collect();
        let s = fit_slope(&h, &e).unwrap();
        assert!((s - 2.0).abs() < 1e-12, "{s}");
    }

    #[test]
    fn fit_slope_ignores_plateau() {
        let h = [0.5, 0.25, 0.125, 0.0625, 0.03125];
        let e = [4e-2, 1e-2, 2.5e-3, 2.4e-3, 2.45e-3];
        let s = fit_slope(&h, &e).unwrap();
        assert!((s - 2.0).abs() < 1e-12, "{s}");
    }

    #[test]
    fn table_roundtrip_through_csv() {
        let dir = std::env::temp_dir().join("hqc-table-test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("t.csv");
        let mut t = Table::new(&["h", "err"]);
        t.push(vec![0.5, 0.125]);
        t.push(vec![0.25, 0.03125]);
        t.write_csv(&path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("h,err\n"));
        assert!(!text.contains('\r'));
        let back = Table::read_csv(&path).unwrap();
        assert_eq!(back.headers(), t.headers());
        assert_eq!(back.column("err").unwrap(), vec![0.125, 0.03125]);
    }
}
