//! JSON model files.
//!
//! ```json
//! {"kind": "nonlinear", "n": 1, "m": 1,
//!  "drift": ["1.5*x1"], "diffusion": [["0.8*x1"]], "x0": [1.0]}
//!
//! {"kind": "linear", "n": 2, "m": 1, "k": 1,
//!  "A": [[0, 1], [-0.3, -0.1]], "B": [[0], [1]], "F": [[0], [5]],
//!  "H": [[1, 0]], "u": ["sin(t)"], "x0": [7, -0.25]}
//! ```
//!
//! `H` is optional and may also be written as a single row.

use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::CliError;
use crate::linear::LinearModel;
use crate::operators::SdeModel;

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ModelFile {
    Nonlinear(NonlinearFile),
    Linear(LinearFile),
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NonlinearFile {
    pub n: usize,
    pub m: usize,
    pub drift: Vec<String>,
    pub diffusion: Vec<Vec<String>>,
    pub x0: Vec<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Rows {
    Matrix(Vec<Vec<f64>>),
    Row(Vec<f64>),
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinearFile {
    pub n: usize,
    pub m: usize,
    pub k: usize,
    #[serde(rename = "A")]
    pub a: Vec<Vec<f64>>,
    #[serde(rename = "B")]
    pub b: Vec<Vec<f64>>,
    #[serde(rename = "F")]
    pub f: Vec<Vec<f64>>,
    #[serde(rename = "H", default, skip_serializing_if = "Option::is_none")]
    pub h: Option<Rows>,
    pub u: Vec<String>,
    pub x0: Vec<f64>,
}

fn matrix(name: &str, rows: &[Vec<f64>], nrows: usize, ncols: usize) -> Result<DMatrix<f64>, CliError> {
    if rows.len() != nrows || rows.iter().any(|r| r.len() != ncols) {
        return Err(CliError::Usage(format!(
            "{name} must be a {nrows}×{ncols} matrix"
        )));
    }
    Ok(DMatrix::from_fn(nrows, ncols, |i, j| rows[i][j]))
}

impl ModelFile {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
    }

    pub fn kind(&self) -> &'static str {
        match self {
            ModelFile::Nonlinear(_) => "nonlinear",
            ModelFile::Linear(_) => "linear",
        }
    }
}

impl NonlinearFile {
    pub fn build(&self) -> Result<SdeModel, CliError> {
        if self.drift.len() != self.n {
            return Err(CliError::Usage(format!("drift must have n = {} entries", self.n)));
        }
        if self.diffusion.len() != self.n || self.diffusion.iter().any(|r| r.len() != self.m) {
            return Err(CliError::Usage(format!(
                "diffusion must be an {}×{} matrix",
                self.n, self.m
            )));
        }
        let drift: Vec<&str> = self.drift.iter().map(String::as_str).collect();
        let diffusion: Vec<Vec<&str>> = self
            .diffusion
            .iter()
            .map(|r| r.iter().map(String::as_str).collect())
            .collect();
        SdeModel::parse(&drift, &diffusion, self.x0.clone())
            .map_err(|e| CliError::Usage(e.to_string()))
    }
}

impl LinearFile {
    pub fn build(&self) -> Result<LinearModel, CliError> {
        let (n, m, k) = (self.n, self.m, self.k);
        let a = matrix("A", &self.a, n, n)?;
        let b = matrix("B", &self.b, n, k)?;
        let f = matrix("F", &self.f, n, m)?;
        let h = match &self.h {
            None => None,
            Some(Rows::Row(r)) => Some(matrix("H", std::slice::from_ref(r), 1, n)?),
            Some(Rows::Matrix(rows)) => Some(matrix("H", rows, rows.len(), n)?),
        };
        let u: Vec<&str> = self.u.iter().map(String::as_str).collect();
        LinearModel::new(a, b, f, h, &u, self.x0.clone()).map_err(|e| CliError::Usage(e.to_string()))
    }
}
