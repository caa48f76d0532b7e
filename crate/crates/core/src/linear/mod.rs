//! Linear stationary systems `dx = (Ax + Bu(t))dt + F dw`, `y = Hx`,
//! simulated exactly in distribution on a uniform grid.
//!
//! With `u` held constant on each step, one step is
//! `x' = e^{AΔ}x + A⁻¹(e^{AΔ} − I)Bu(pΔ) + M·ξ`, where `ξ` is a standard normal
//! vector and `MMᵀ = D(Δ)` is the covariance of the stochastic convolution
//! over one step. `M` comes from the eigendecomposition of `D(Δ)`.

mod matrix;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::expr::{compile_many, parse, Expr, ExprError, Program, SymbolTable};
use crate::integrals::PathRng;
use crate::schemes::{steps_for, Accumulator, Moments, SchemeError, Trajectory, CHUNK};

pub use matrix::{
    covariance_df, covariance_residual, input_matrix, input_series, mat_exp, noise_factor, norm1,
    symmetric_eigen,
};

#[derive(Debug, Error)]
pub enum LinearError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("matrix exponential overflowed")]
    Overflow,
    #[error("covariance is not symmetric (largest defect {0:e})")]
    Asymmetric(f64),
    #[error("covariance has a negative eigenvalue {0:e}")]
    Indefinite(f64),
    #[error("input expression: {0}")]
    Input(#[from] ExprError),
    #[error("input became non-finite at t = {0}")]
    NonFiniteInput(f64),
    #[error(transparent)]
    Config(#[from] SchemeError),
}

/// Symbols available to input formulas: only `t`.
pub fn input_symbols() -> SymbolTable {
    SymbolTable::new(0)
}

#[derive(Clone, Debug)]
pub struct LinearModel {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub f: DMatrix<f64>,
    /// Output rows; `None` when the model has no output.
    pub h: Option<DMatrix<f64>>,
    /// One formula in `t` per input component.
    pub u: Vec<Expr>,
    pub x0: Vec<f64>,
}

impl LinearModel {
    /// Builds a model, parsing the input formulas over `t`.
    pub fn new(
        a: DMatrix<f64>,
        b: DMatrix<f64>,
        f: DMatrix<f64>,
        h: Option<DMatrix<f64>>,
        u: &[&str],
        x0: Vec<f64>,
    ) -> Result<Self, LinearError> {
        let symbols = input_symbols();
        let u = u
            .iter()
            .map(|s| parse(s, &symbols))
            .collect::<Result<Vec<_>, _>>()?;
        let model = Self { a, b, f, h, u, x0 };
        model.validate()?;
        Ok(model)
    }

    pub fn n(&self) -> usize {
        self.a.nrows()
    }

    pub fn m(&self) -> usize {
        self.f.ncols()
    }

    pub fn k(&self) -> usize {
        self.b.ncols()
    }

    pub fn validate(&self) -> Result<(), LinearError> {
        let n = self.a.nrows();
        let bad = |what: &str| Err(LinearError::Dimension(what.to_string()));
        if n == 0 || self.a.ncols() != n {
            return bad("A must be a nonempty square matrix");
        }
        if self.b.nrows() != n {
            return bad("B must have n rows");
        }
        if self.f.nrows() != n {
            return bad("F must have n rows");
        }
        if self.u.len() != self.b.ncols() {
            return bad("u must have one formula per column of B");
        }
        if self.x0.len() != n {
            return bad("x0 must have n entries");
        }
        if let Some(h) = &self.h {
            if h.ncols() != n {
                return bad("H must have n columns");
            }
        }
        let all = self
            .a
            .iter()
            .chain(self.b.iter())
            .chain(self.f.iter())
            .chain(self.h.iter().flat_map(|h| h.iter()))
            .chain(self.x0.iter());
        if all.clone().any(|v| !v.is_finite()) {
            return bad("matrix entries must be finite");
        }
        Ok(())
    }

    fn input_program(&self) -> Result<Program, LinearError> {
        Ok(compile_many(&self.u, &input_symbols().order())?)
    }
}

/// Everything a step needs, computed once per `Δ`.
#[derive(Clone, Debug)]
pub struct LinearPrecomp {
    pub delta: f64,
    /// `e^{AΔ}`.
    pub phi: DMatrix<f64>,
    /// `A⁻¹(e^{AΔ} − I)B`.
    pub gamma: DMatrix<f64>,
    /// One-step noise covariance `D(Δ)`.
    pub df: DMatrix<f64>,
    /// `M` with `MMᵀ = D(Δ)`.
    pub factor: DMatrix<f64>,
}

impl LinearPrecomp {
    pub fn new(model: &LinearModel, delta: f64) -> Result<Self, LinearError> {
        model.validate()?;
        if !(delta.is_finite() && delta > 0.0) {
            return Err(SchemeError::Config(format!("need Δ > 0, got {delta}")).into());
        }
        let df = covariance_df(&model.a, &model.f, delta)?;
        Ok(Self {
            delta,
            phi: mat_exp(&model.a, delta)?,
            gamma: input_matrix(&model.a, &model.b, delta)?,
            factor: noise_factor(&df)?,
            df,
        })
    }

    /// Largest entry of `MMᵀ − D`.
    pub fn factor_defect(&self) -> f64 {
        (&self.factor * self.factor.transpose() - &self.df).amax()
    }

    /// `out = Φx + Γu + Mξ` on plain slices.
    pub fn step_into(&self, x: &[f64], u: &[f64], normals: &[f64], out: &mut [f64]) {
        out.fill(0.0);
        for (j, &xj) in x.iter().enumerate() {
            for (o, p) in out.iter_mut().zip(self.phi.column(j).iter()) {
                *o += p * xj;
            }
        }
        for (j, &uj) in u.iter().enumerate() {
            if uj != 0.0 {
                for (o, g) in out.iter_mut().zip(self.gamma.column(j).iter()) {
                    *o += g * uj;
                }
            }
        }
        for (j, &z) in normals.iter().enumerate() {
            for (o, s) in out.iter_mut().zip(self.factor.column(j).iter()) {
                *o += s * z;
            }
        }
    }
}

/// One exact step `x' = Φx + Γu + Mξ`.
pub fn step_linear(
    pre: &LinearPrecomp,
    x: &DVector<f64>,
    u: &DVector<f64>,
    normals: &DVector<f64>,
) -> DVector<f64> {
    let mut out = DVector::zeros(x.len());
    pre.step_into(x.as_slice(), u.as_slice(), normals.as_slice(), out.as_mut_slice());
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct LinearConfig {
    pub delta: f64,
    pub horizon: f64,
    pub paths: usize,
    pub seed: u64,
}

#[derive(Clone, Debug, Serialize)]
pub struct LinearRun {
    /// Moments of the state components.
    pub state: Moments,
    /// Moments of the output `y = Hx`, when the model has an output.
    pub output: Option<Moments>,
    /// Largest entry of `MMᵀ − D(Δ)`.
    pub factor_defect: f64,
    /// Defect of `D(Δ)` in its differential equation, relative to `‖FFᵀ‖`.
    pub covariance_residual: f64,
    #[serde(skip)]
    pub trajectories: Option<Vec<Trajectory>>,
}

/// Input values `u(pΔ)` for every step start.
fn input_table(model: &LinearModel, delta: f64, steps: usize) -> Result<Vec<f64>, LinearError> {
    let k = model.k();
    let program = model.input_program()?;
    let mut scratch = Vec::new();
    let mut table = vec![0.0; steps * k];
    for p in 0..steps {
        let t = p as f64 * delta;
        program.eval_into(&[t], &mut scratch, &mut table[p * k..(p + 1) * k]);
        if table[p * k..(p + 1) * k].iter().any(|v| !v.is_finite()) {
            return Err(LinearError::NonFiniteInput(t));
        }
    }
    Ok(table)
}

/// Simulates `config.paths` independent paths with per-path streams and
/// reduces per-time moments of the state and the output.
pub fn simulate_linear(
    model: &LinearModel,
    config: &LinearConfig,
    keep_trajectories: bool,
) -> Result<LinearRun, LinearError> {
    let steps = steps_for(config.horizon, config.delta)?;
    let pre = LinearPrecomp::new(model, config.delta)?;
    let inputs = input_table(model, config.delta, steps)?;
    let (n, k) = (model.n(), model.k());
    let r = model.h.as_ref().map_or(0, |h| h.nrows());
    let times: Vec<f64> = (0..=steps).map(|p| p as f64 * config.delta).collect();
    let chunks: Vec<usize> = (0..config.paths.div_ceil(CHUNK)).collect();
    let results: Vec<(Accumulator, Accumulator, Vec<Trajectory>)> = chunks
        .par_iter()
        .map(|&c| {
            let mut state_acc = Accumulator::new((steps + 1) * n);
            let mut out_acc = Accumulator::new((steps + 1) * r);
            let mut kept = Vec::new();
            let mut states = vec![0.0; (steps + 1) * n];
            let mut outputs = vec![0.0; (steps + 1) * r];
            let mut normals = vec![0.0; n];
            for path in c * CHUNK..((c + 1) * CHUNK).min(config.paths) {
                let mut rng = PathRng::for_path(config.seed, path as u64);
                states[..n].copy_from_slice(&model.x0);
                for p in 0..steps {
                    rng.fill_normals(&mut normals);
                    let (done, rest) = states.split_at_mut((p + 1) * n);
                    pre.step_into(
                        &done[p * n..],
                        &inputs[p * k..(p + 1) * k],
                        &normals,
                        &mut rest[..n],
                    );
                }
                state_acc.push(&states);
                if let Some(h) = &model.h {
                    for (x, y) in states.chunks(n).zip(outputs.chunks_mut(r)) {
                        for (i, yi) in y.iter_mut().enumerate() {
                            *yi = h.row(i).iter().zip(x).map(|(a, b)| a * b).sum();
                        }
                    }
                    out_acc.push(&outputs);
                }
                if keep_trajectories {
                    kept.push(Trajectory {
                        times: times.clone(),
                        states: states.chunks(n).map(<[f64]>::to_vec).collect(),
                    });
                }
            }
            (state_acc, out_acc, kept)
        })
        .collect();
    let mut state = Accumulator::new((steps + 1) * n);
    let mut output = Accumulator::new((steps + 1) * r);
    let mut trajectories = Vec::new();
    for (s, o, t) in results {
        state.merge(&s);
        output.merge(&o);
        trajectories.extend(t);
    }
    Ok(LinearRun {
        state: state.moments(times.clone(), n),
        output: model.h.as_ref().map(|_| output.moments(times, r)),
        factor_defect: pre.factor_defect(),
        covariance_residual: covariance_residual(&model.a, &model.f, config.delta, &pre.df)?,
        trajectories: keep_trajectories.then_some(trajectories),
    })
}
