use rayon::prelude::*;
use serde::Serialize;

use crate::accuracy::{select_q, QSet};
use crate::coeffs::CoeffStore;
use crate::integrals::PathRng;
use crate::operators::SdeModel;

use super::{SchemeConfig, SchemeError, Stepper, Trajectory};

/// Paths per reduction chunk. Fixed so that results do not depend on the
/// number of worker threads.
pub(crate) const CHUNK: usize = 32;

/// A scheme ready to run many paths of one configuration.
#[derive(Clone, Debug)]
pub struct Simulator {
    pub config: SchemeConfig,
    stepper: Stepper,
    x0: Vec<f64>,
    steps: usize,
}

/// Per-time sample moments of an ensemble.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Moments {
    pub times: Vec<f64>,
    /// `mean[p][k]`: component `k` at time `p`.
    pub mean: Vec<Vec<f64>>,
    /// Unbiased sample variance, same layout.
    pub var: Vec<Vec<f64>>,
    /// Paths that contributed.
    pub count: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DivergedPath {
    pub path: usize,
    pub step: usize,
    pub t: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct Ensemble {
    pub moments: Moments,
    pub diverged: Vec<DivergedPath>,
    pub qset: QSet,
    #[serde(skip)]
    pub trajectories: Option<Vec<Trajectory>>,
}

/// Running count, mean and squared deviations per time and component.
#[derive(Clone, Debug)]
pub(crate) struct Accumulator {
    count: usize,
    mean: Vec<f64>,
    m2: Vec<f64>,
}

impl Accumulator {
    pub(crate) fn new(len: usize) -> Self {
        Self {
            count: 0,
            mean: vec![0.0; len],
            m2: vec![0.0; len],
        }
    }

    pub(crate) fn push(&mut self, x: &[f64]) {
        self.count += 1;
        let c = self.count as f64;
        for ((m, s), &v) in self.mean.iter_mut().zip(&mut self.m2).zip(x) {
            let d = v - *m;
            *m += d / c;
            *s += d * (v - *m);
        }
    }

    pub(crate) fn merge(&mut self, other: &Accumulator) {
        if other.count == 0 {
            return;
        }
        if self.count == 0 {
            *self = other.clone();
            return;
        }
        let (na, nb) = (self.count as f64, other.count as f64);
        let n = na + nb;
        for i in 0..self.mean.len() {
            let d = other.mean[i] - self.mean[i];
            self.mean[i] += d * nb / n;
            self.m2[i] += other.m2[i] + d * d * na * nb / n;
        }
        self.count += other.count;
    }

    /// Moments of a buffer laid out as `times.len()` rows of `width`.
    pub(crate) fn moments(&self, times: Vec<f64>, width: usize) -> Moments {
        let denom = self.count.saturating_sub(1).max(1) as f64;
        Moments {
            times,
            mean: self.mean.chunks(width).map(<[f64]>::to_vec).collect(),
            var: self
                .m2
                .chunks(width)
                .map(|c| c.iter().map(|s| s / denom).collect())
                .collect(),
            count: self.count,
        }
    }
}

impl Simulator {
    /// Selects truncations and compiles the scheme once for the whole run.
    pub fn new(
        model: &SdeModel,
        config: SchemeConfig,
        store: &CoeffStore,
    ) -> Result<Self, SchemeError> {
        let steps = config.validate()?;
        let qset = select_q(config.order, config.calculus, config.delta, config.c, store)?;
        let stepper = Stepper::new(
            model,
            config.order,
            config.calculus,
            config.delta,
            qset,
            store,
        )?;
        Ok(Self {
            config,
            stepper,
            x0: model.x0.clone(),
            steps,
        })
    }

    pub fn from_stepper(
        stepper: Stepper,
        x0: Vec<f64>,
        config: SchemeConfig,
    ) -> Result<Self, SchemeError> {
        let steps = config.validate()?;
        Ok(Self {
            config,
            stepper,
            x0,
            steps,
        })
    }

    pub fn stepper(&self) -> &Stepper {
        &self.stepper
    }

    pub fn qset(&self) -> &QSet {
        self.stepper.qset()
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn times(&self) -> Vec<f64> {
        (0..=self.steps)
            .map(|p| p as f64 * self.config.delta)
            .collect()
    }

    /// Runs path `path`, calling `visit(p, y)` for every grid point.
    pub fn run(
        &self,
        path: usize,
        mut visit: impl FnMut(usize, &[f64]),
    ) -> Result<(), SchemeError> {
        let mut rng = PathRng::for_path(self.config.seed, path as u64);
        let mut ws = self.stepper.workspace();
        let mut y = self.x0.clone();
        visit(0, &y);
        for p in 0..self.steps {
            let t = p as f64 * self.config.delta;
            self.stepper
                .advance_random(&mut y, t, &mut rng, &mut ws)
                .map_err(|e| match e {
                    SchemeError::Divergence { t, .. } => SchemeError::Divergence { t, step: p },
                    other => other,
                })?;
            visit(p + 1, &y);
        }
        Ok(())
    }

    pub fn path(&self, path: usize) -> Result<Trajectory, SchemeError> {
        let mut states = Vec::with_capacity(self.steps + 1);
        self.run(path, |_, y| states.push(y.to_vec()))?;
        Ok(Trajectory {
            times: self.times(),
            states,
        })
    }

    /// Runs `config.paths` paths in parallel and reduces their moments.
    /// Diverged paths are left out of the moments and listed instead.
    pub fn ensemble(&self, keep_trajectories: bool) -> Result<Ensemble, SchemeError> {
        let n = self.x0.len();
        let len = (self.steps + 1) * n;
        let paths = self.config.paths;
        let chunks: Vec<usize> = (0..paths.div_ceil(CHUNK)).collect();
        type ChunkOut = (Accumulator, Vec<DivergedPath>, Vec<Trajectory>);
        let results: Vec<Result<ChunkOut, SchemeError>> = chunks
            .par_iter()
            .map(|&c| {
                let mut acc = Accumulator::new(len);
                let mut diverged = Vec::new();
                let mut kept = Vec::new();
                let mut buf = vec![0.0; len];
                for path in c * CHUNK..((c + 1) * CHUNK).min(paths) {
                    match self.run(path, |p, y| buf[p * n..(p + 1) * n].copy_from_slice(y)) {
                        Ok(()) => {
                            acc.push(&buf);
                            if keep_trajectories {
                                kept.push(Trajectory {
                                    times: self.times(),
                                    states: buf.chunks(n).map(<[f64]>::to_vec).collect(),
                                });
                            }
                        }
                        Err(SchemeError::Divergence { t, step }) => {
                            diverged.push(DivergedPath { path, step, t })
                        }
                        Err(e) => return Err(e),
                    }
                }
                Ok((acc, diverged, kept))
            })
            .collect();
        let mut total = Accumulator::new(len);
        let mut diverged = Vec::new();
        let mut trajectories = Vec::new();
        for r in results {
            let (acc, d, t) = r?;
            total.merge(&acc);
            diverged.extend(d);
            trajectories.extend(t);
        }
        Ok(Ensemble {
            moments: total.moments(self.times(), n),
            diverged,
            qset: self.qset().clone(),
            trajectories: keep_trajectories.then_some(trajectories),
        })
    }
}

/// Simulates path 0 of `config`.
pub fn simulate_path(
    model: &SdeModel,
    config: &SchemeConfig,
    store: &CoeffStore,
) -> Result<Trajectory, SchemeError> {
    Simulator::new(model, *config, store)?.path(0)
}

/// Simulates `config.paths` independent paths and their moments.
pub fn simulate_ensemble(
    model: &SdeModel,
    config: &SchemeConfig,
    store: &CoeffStore,
    keep_trajectories: bool,
) -> Result<Ensemble, SchemeError> {
    Simulator::new(model, *config, store)?.ensemble(keep_trajectories)
}
