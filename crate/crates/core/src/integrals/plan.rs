use crate::accuracy::QSet;
use crate::coeffs::{CoeffStore, ScaledTable};
use crate::schemes::{integral_weights, Calculus, Order};

use super::{
    dot, ito_pair00, ito_single, matching_applies, matching_sum, pair_matchings, strat_pair00,
    GaussianDraws, IntegralError, Matching,
};

#[derive(Clone, Debug)]
enum Kind {
    Single(u8),
    Pair00(usize),
    General {
        table: ScaledTable,
        matchings: Vec<Matching>,
    },
}

#[derive(Clone, Debug)]
struct Entry {
    weights: Vec<u8>,
    kind: Kind,
}

/// Everything needed to turn a step's draws into its integrals: the
/// Δ-scaled coefficient tables and the pair matchings, prepared once per run.
#[derive(Clone, Debug)]
pub struct IntegralPlan {
    calculus: Calculus,
    m: usize,
    delta: f64,
    jmax: usize,
    entries: Vec<Entry>,
}

/// Values of all integrals of one step. Each weight tuple holds `m^k`
/// values, the noise tuple `(i1..ik)` at `Σ i_a m^(a-1)`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct IntegralSet {
    pub m: usize,
    pub delta: f64,
    weights: Vec<Vec<u8>>,
    values: Vec<Vec<f64>>,
}

impl IntegralSet {
    pub fn slot(&self, weights: &[u8]) -> Option<usize> {
        self.weights.iter().position(|w| w == weights)
    }

    pub fn weights(&self) -> &[Vec<u8>] {
        &self.weights
    }

    /// All values of a slot, in noise-tuple order.
    pub fn values(&self, slot: usize) -> &[f64] {
        &self.values[slot]
    }

    pub fn get(&self, weights: &[u8], noise: &[usize]) -> Option<f64> {
        let s = self.slot(weights)?;
        if noise.len() != weights.len() || noise.iter().any(|&i| i >= self.m) {
            return None;
        }
        Some(self.values[s][tuple_index(noise, self.m)])
    }

    /// Number of individual integral values.
    pub fn len(&self) -> usize {
        self.values.iter().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Position of a 0-based noise tuple `(i1..ik)` in a slot: `Σ i_a m^(a-1)`.
pub fn tuple_index(noise: &[usize], m: usize) -> usize {
    noise.iter().rev().fold(0, |acc, &i| acc * m + i)
}

fn decode(mut idx: usize, m: usize, out: &mut [usize]) {
    for o in out.iter_mut() {
        *o = idx % m;
        idx /= m;
    }
}

impl IntegralPlan {
    /// Plans the given weight tuples with truncations from `qset`.
    pub fn new(
        weights: &[Vec<u8>],
        calculus: Calculus,
        m: usize,
        delta: f64,
        qset: &QSet,
        store: &CoeffStore,
    ) -> Result<Self, IntegralError> {
        let mut jmax = 0;
        let mut entries = Vec::with_capacity(weights.len());
        for w in weights {
            let kind = match w.as_slice() {
                [l] => Kind::Single(*l),
                [0, 0] => Kind::Pair00(qset.q),
                _ => {
                    let q = qset.for_weights(w).ok_or_else(|| IntegralError::Shape {
                        weights: w.clone(),
                        noise: Vec::new(),
                        m,
                    })?;
                    Kind::General {
                        table: store.scaled_table(w, q, delta)?,
                        matchings: match calculus {
                            Calculus::Ito => pair_matchings(w.len()),
                            Calculus::Stratonovich => Vec::new(),
                        },
                    }
                }
            };
            jmax = jmax.max(match &kind {
                Kind::Single(l) => *l as usize,
                Kind::Pair00(q) => *q,
                Kind::General { table, .. } => table.q,
            });
            entries.push(Entry {
                weights: w.clone(),
                kind,
            });
        }
        Ok(Self {
            calculus,
            m,
            delta,
            jmax,
            entries,
        })
    }

    /// Plans every integral of a scheme.
    pub fn for_scheme(
        order: Order,
        calculus: Calculus,
        m: usize,
        delta: f64,
        qset: &QSet,
        store: &CoeffStore,
    ) -> Result<Self, IntegralError> {
        let weights = integral_weights(order, calculus).map_err(|_| IntegralError::Shape {
            weights: Vec::new(),
            noise: Vec::new(),
            m,
        })?;
        Self::new(&weights, calculus, m, delta, qset, store)
    }

    /// Highest Legendre degree read from the draws.
    pub fn jmax(&self) -> usize {
        self.jmax
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    /// An empty set with the right layout, for [`Self::evaluate_into`].
    pub fn empty_set(&self) -> IntegralSet {
        IntegralSet {
            m: self.m,
            delta: self.delta,
            weights: self.entries.iter().map(|e| e.weights.clone()).collect(),
            values: self
                .entries
                .iter()
                .map(|e| vec![0.0; self.m.pow(e.weights.len() as u32)])
                .collect(),
        }
    }

    pub fn evaluate(&self, draws: &GaussianDraws) -> Result<IntegralSet, IntegralError> {
        let mut set = self.empty_set();
        self.evaluate_into(draws, &mut set)?;
        Ok(set)
    }

    /// Fills `set` (laid out by [`Self::empty_set`]) from one step's draws.
    pub fn evaluate_into(
        &self,
        draws: &GaussianDraws,
        set: &mut IntegralSet,
    ) -> Result<(), IntegralError> {
        if draws.m() != self.m {
            return Err(IntegralError::Shape {
                weights: Vec::new(),
                noise: Vec::new(),
                m: draws.m(),
            });
        }
        if draws.jmax() < self.jmax {
            return Err(IntegralError::DrawsTooShort {
                have: draws.jmax(),
                need: self.jmax,
            });
        }
        let m = self.m;
        let mut noise = Vec::with_capacity(6);
        for (entry, out) in self.entries.iter().zip(set.values.iter_mut()) {
            match &entry.kind {
                Kind::Single(l) => {
                    for (i, o) in out.iter_mut().enumerate() {
                        *o = ito_single(*l, i, draws, self.delta);
                    }
                }
                Kind::Pair00(q) => {
                    for (idx, o) in out.iter_mut().enumerate() {
                        let (i1, i2) = (idx % m, idx / m);
                        *o = match self.calculus {
                            Calculus::Ito => ito_pair00(i1, i2, draws, *q, self.delta),
                            Calculus::Stratonovich => strat_pair00(i1, i2, draws, *q, self.delta),
                        };
                    }
                }
                Kind::General { table, matchings } => {
                    contract_all(table, draws, m, out);
                    let k = table.k();
                    noise.resize(k, 0);
                    for (idx, o) in out.iter_mut().enumerate() {
                        decode(idx, m, &mut noise);
                        for mt in matchings {
                            if matching_applies(mt, &noise) {
                                let s = matching_sum(table, mt, &noise, draws);
                                *o += if mt.r() % 2 == 1 { -s } else { s };
                            }
                        }
                    }
                }
            }
        }
        Ok(())
    }
}

/// Product sums `Σ_j C_j Π_a ζ_{j_a}^{(i_a)}` for all noise tuples at once,
/// sharing the partial contractions of common inner prefixes.
fn contract_all(table: &ScaledTable, draws: &GaussianDraws, m: usize, out: &mut [f64]) {
    #[allow(clippy::too_many_arguments)]
    fn rec(
        cur: &[f64],
        left: usize,
        side: usize,
        draws: &GaussianDraws,
        m: usize,
        base: usize,
        stride: usize,
        out: &mut [f64],
    ) {
        if left == 0 {
            out[base] = cur[0];
            return;
        }
        let mut next = vec![0.0; cur.len() / side];
        for i in 0..m {
            let z = &draws.row(i)[..side];
            for (n, c) in next.iter_mut().zip(cur.chunks_exact(side)) {
                *n = dot(c, z);
            }
            rec(
                &next,
                left - 1,
                side,
                draws,
                m,
                base + i * stride,
                stride * m,
                out,
            );
        }
    }
    rec(&table.values, table.k(), table.q + 1, draws, m, 0, 1, out);
}

/// Builds the integrals of one step directly. Simulations should prepare an
/// [`IntegralPlan`] once and reuse it.
pub fn build_integral_set(
    order: Order,
    calculus: Calculus,
    draws: &GaussianDraws,
    delta: f64,
    qset: &QSet,
    store: &CoeffStore,
) -> Result<IntegralSet, IntegralError> {
    IntegralPlan::for_scheme(order, calculus, draws.m(), delta, qset, store)?.evaluate(draws)
}
