use serde::Serialize;

use crate::accuracy::{select_q, AccuracyError, QSet};
use crate::coeffs::CoeffStore;
use crate::integrals::{GaussianDraws, IntegralError, IntegralPlan, IntegralSet, PathRng};
use crate::operators::{build_scheme_fields, ModelError, SchemeFields, SdeModel};

use super::{Calculus, Order};

#[derive(Debug, thiserror::Error)]
pub enum SchemeError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Integral(#[from] IntegralError),
    #[error(transparent)]
    Accuracy(#[from] AccuracyError),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("integral set lacks the weights {0:?}")]
    MissingIntegral(Vec<u8>),
    #[error("state became non-finite in the step starting at t = {t}")]
    Divergence { t: f64, step: usize },
}

/// Parameters of one simulation run.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SchemeConfig {
    pub order: Order,
    pub calculus: Calculus,
    /// Step size Δ.
    pub delta: f64,
    /// Horizon T; `T/Δ` must be a positive integer.
    pub horizon: f64,
    /// Accuracy constant for truncation selection.
    pub c: f64,
    pub seed: u64,
    pub paths: usize,
}

impl SchemeConfig {
    pub fn new(order: Order, calculus: Calculus, delta: f64, horizon: f64) -> Self {
        Self {
            order,
            calculus,
            delta,
            horizon,
            c: 1.0,
            seed: 0,
            paths: 1,
        }
    }

    /// Number of steps `N = T/Δ`.
    pub fn steps(&self) -> Result<usize, SchemeError> {
        steps_for(self.horizon, self.delta)
    }

    pub fn validate(&self) -> Result<usize, SchemeError> {
        if self.calculus == Calculus::Stratonovich && self.order == Order::Half {
            return Err(SchemeError::Config(
                "the Stratonovich scheme starts at order 1.0".into(),
            ));
        }
        if !(self.c.is_finite() && self.c > 0.0) {
            return Err(SchemeError::Config(format!(
                "accuracy constant must be positive, got {}",
                self.c
            )));
        }
        self.steps()
    }
}

/// `T/Δ` when it is a positive integer up to rounding.
pub fn steps_for(horizon: f64, delta: f64) -> Result<usize, SchemeError> {
    if !(delta.is_finite() && delta > 0.0 && horizon.is_finite() && horizon > 0.0) {
        return Err(SchemeError::Config(format!(
            "need Δ > 0 and T > 0, got Δ = {delta}, T = {horizon}"
        )));
    }
    let n = (horizon / delta).round();
    if n < 1.0 || (n * delta - horizon).abs() > 1e-9 * horizon {
        return Err(SchemeError::Config(format!(
            "T = {horizon} is not a multiple of Δ = {delta}"
        )));
    }
    Ok(n as usize)
}

/// A simulated path on the grid `t_p = pΔ`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
}

impl Trajectory {
    pub fn last(&self) -> &[f64] {
        self.states.last().expect("a trajectory holds at least x0")
    }
}

/// Multiplier of one part: `coef·Δ^p`, times an integral unless deterministic.
#[derive(Clone, Debug)]
struct PartRef {
    scale: f64,
    slot: Option<usize>,
}

/// One scheme prepared for a fixed step: compiled fields, integral plan and
/// the part multipliers.
#[derive(Clone, Debug)]
pub struct Stepper {
    fields: SchemeFields,
    plan: IntegralPlan,
    qset: QSet,
    delta: f64,
    parts: Vec<Vec<PartRef>>,
}

/// Per-path scratch space of a [`Stepper`].
#[derive(Clone, Debug)]
pub struct Workspace {
    values: Vec<f64>,
    inputs: Vec<f64>,
    scratch: Vec<f64>,
    pub iset: IntegralSet,
    pub draws: GaussianDraws,
    next: Vec<f64>,
}

fn part_refs(
    fields: &SchemeFields,
    delta: f64,
    layout: &IntegralSet,
) -> Result<Vec<Vec<PartRef>>, SchemeError> {
    fields
        .terms
        .iter()
        .map(|t| {
            t.parts
                .iter()
                .map(|p| {
                    let slot = if p.weights.is_empty() {
                        None
                    } else {
                        Some(
                            layout
                                .slot(&p.weights)
                                .ok_or_else(|| SchemeError::MissingIntegral(p.weights.clone()))?,
                        )
                    };
                    Ok(PartRef {
                        scale: p.coef * delta.powi(p.delta_power),
                        slot,
                    })
                })
                .collect()
        })
        .collect()
}

/// `y + Σ_terms Σ_tuples F(y,t) · Σ_parts coef·Δ^p·I`, written into `out`.
fn apply_terms(
    fields: &SchemeFields,
    parts: &[Vec<PartRef>],
    values: &[f64],
    y: &[f64],
    iset: &IntegralSet,
    out: &mut [f64],
) {
    let n = fields.n;
    out.copy_from_slice(y);
    for (term, prefs) in fields.terms.iter().zip(parts) {
        for (t, &zero) in term.zero.iter().enumerate() {
            if zero {
                continue;
            }
            let mult: f64 = prefs
                .iter()
                .map(|p| match p.slot {
                    Some(s) => p.scale * iset.values(s)[t],
                    None => p.scale,
                })
                .sum();
            let f = &values[term.offset + t * n..term.offset + (t + 1) * n];
            for (o, v) in out.iter_mut().zip(f) {
                *o += v * mult;
            }
        }
    }
}

/// One step of the scheme in `fields` from `(y, t)` with the integrals `iset`.
pub fn step(
    fields: &SchemeFields,
    y: &[f64],
    t: f64,
    iset: &IntegralSet,
    delta: f64,
) -> Result<Vec<f64>, SchemeError> {
    let parts = part_refs(fields, delta, iset)?;
    let values = fields.eval(y, t);
    let mut out = vec![0.0; fields.n];
    apply_terms(fields, &parts, &values, y, iset, &mut out);
    if out.iter().all(|v| v.is_finite()) {
        Ok(out)
    } else {
        Err(SchemeError::Divergence { t, step: 0 })
    }
}

impl Stepper {
    pub fn new(
        model: &SdeModel,
        order: Order,
        calculus: Calculus,
        delta: f64,
        qset: QSet,
        store: &CoeffStore,
    ) -> Result<Self, SchemeError> {
        let fields = build_scheme_fields(model, order, calculus)?;
        Self::from_fields(fields, delta, qset, store)
    }

    /// Selects truncations with constant `c` and prepares the scheme.
    pub fn with_accuracy(
        model: &SdeModel,
        order: Order,
        calculus: Calculus,
        delta: f64,
        c: f64,
        store: &CoeffStore,
    ) -> Result<Self, SchemeError> {
        let qset = select_q(order, calculus, delta, c, store)?;
        Self::new(model, order, calculus, delta, qset, store)
    }

    pub fn from_fields(
        fields: SchemeFields,
        delta: f64,
        qset: QSet,
        store: &CoeffStore,
    ) -> Result<Self, SchemeError> {
        let plan =
            IntegralPlan::for_scheme(fields.order, fields.calculus, fields.m, delta, &qset, store)?;
        let parts = part_refs(&fields, delta, &plan.empty_set())?;
        Ok(Self {
            fields,
            plan,
            qset,
            delta,
            parts,
        })
    }

    pub fn fields(&self) -> &SchemeFields {
        &self.fields
    }

    pub fn plan(&self) -> &IntegralPlan {
        &self.plan
    }

    pub fn qset(&self) -> &QSet {
        &self.qset
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    /// Highest Legendre degree each step draws.
    pub fn jmax(&self) -> usize {
        self.plan.jmax()
    }

    pub fn workspace(&self) -> Workspace {
        Workspace {
            values: vec![0.0; self.fields.outputs()],
            inputs: Vec::with_capacity(self.fields.n + 1),
            scratch: Vec::new(),
            iset: self.plan.empty_set(),
            draws: GaussianDraws::zeros(self.fields.m, self.plan.jmax()),
            next: vec![0.0; self.fields.n],
        }
    }

    /// Steps `y` in place using the integrals already in `ws.iset`.
    pub fn step_in_place(
        &self,
        y: &mut [f64],
        t: f64,
        ws: &mut Workspace,
    ) -> Result<(), SchemeError> {
        self.fields
            .eval_into(y, t, &mut ws.inputs, &mut ws.scratch, &mut ws.values);
        apply_terms(
            &self.fields,
            &self.parts,
            &ws.values,
            y,
            &ws.iset,
            &mut ws.next,
        );
        if !ws.next.iter().all(|v| v.is_finite()) {
            return Err(SchemeError::Divergence { t, step: 0 });
        }
        y.copy_from_slice(&ws.next);
        Ok(())
    }

    /// Evaluates the integrals of `ws.draws`, then steps `y` in place.
    pub fn advance(&self, y: &mut [f64], t: f64, ws: &mut Workspace) -> Result<(), SchemeError> {
        self.plan.evaluate_into(&ws.draws, &mut ws.iset)?;
        self.step_in_place(y, t, ws)
    }

    /// Draws fresh Gaussians from `rng` and steps `y` in place.
    pub fn advance_random(
        &self,
        y: &mut [f64],
        t: f64,
        rng: &mut PathRng,
        ws: &mut Workspace,
    ) -> Result<(), SchemeError> {
        ws.draws.refill(rng);
        self.advance(y, t, ws)
    }
}
