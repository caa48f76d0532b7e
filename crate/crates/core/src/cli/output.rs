//! CSV tables and the JSON run report.
//!
//! Numbers are written with Rust's shortest round-trip formatting, so equal
//! inputs give byte-identical files.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use super::CliError;
use crate::accuracy::Residual;
use crate::schemes::{Moments, StudyRow, Trajectory};

/// Summary written next to the CSV outputs of every command.
#[derive(Clone, Debug, Default, Serialize)]
pub struct RunReport {
    pub command: String,
    pub seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub model: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub order: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub calculus: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub horizon: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub paths: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub c: Option<f64>,
    /// Selected truncation numbers.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub qset: Option<serde_json::Value>,
    /// Achieved mean-square residuals of the selected truncations.
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub residuals: Vec<Residual>,
    pub wall_time_s: f64,
    pub diverged: usize,
    pub outputs: Vec<PathBuf>,
    /// Command-specific results.
    #[serde(skip_serializing_if = "serde_json::Value::is_null")]
    pub details: serde_json::Value,
}

pub(crate) fn write_file(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

pub(crate) fn ensure_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))
}

/// `t,x1,..,xn` for one path.
pub fn trajectory_csv(traj: &Trajectory) -> String {
    let n = traj.states.first().map_or(0, Vec::len);
    let mut s = String::from("t");
    for k in 1..=n {
        let _ = write!(s, ",x{k}");
    }
    s.push('\n');
    for (t, x) in traj.times.iter().zip(&traj.states) {
        let _ = write!(s, "{t}");
        for v in x {
            let _ = write!(s, ",{v}");
        }
        s.push('\n');
    }
    s
}

/// `t,mean_1,var_1,..` with component names `{prefix}1..`.
pub fn moments_csv(m: &Moments, prefix: &str) -> String {
    let n = m.mean.first().map_or(0, Vec::len);
    let mut s = String::from("t");
    for k in 1..=n {
        let _ = write!(s, ",mean_{prefix}{k},var_{prefix}{k}");
    }
    s.push('\n');
    for (p, t) in m.times.iter().enumerate() {
        let _ = write!(s, "{t}");
        for k in 0..n {
            let _ = write!(s, ",{},{}", m.mean[p][k], m.var[p][k]);
        }
        s.push('\n');
    }
    s
}

pub fn study_csv(rows: &[StudyRow]) -> String {
    let mut s = String::from("order,calculus,dt,mean_error,std_error,diverged\n");
    for r in rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{}",
            r.order, r.calculus, r.delta, r.mean_error, r.std_error, r.diverged
        );
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_headers_and_rows() {
        let traj = Trajectory {
            times: vec![0.0, 0.5],
            states: vec![vec![1.0, 2.0], vec![1.5, -0.25]],
        };
        assert_eq!(trajectory_csv(&traj), "t,x1,x2\n0,1,2\n0.5,1.5,-0.25\n");
        let m = Moments {
            times: vec![0.0],
            mean: vec![vec![1.0]],
            var: vec![vec![0.1]],
            count: 3,
        };
        assert_eq!(moments_csv(&m, "y"), "t,mean_y1,var_y1\n0,1,0.1\n");
    }
}
