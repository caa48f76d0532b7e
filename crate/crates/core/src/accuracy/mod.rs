//! Truncation levels and mean-square approximation errors.
//!
//! For a weight tuple of multiplicity `k` and total weight `Σl`, the
//! normalized residual of the cube `{0..q}^k` is
//!
//! ```text
//! R(q) = ‖K‖²/Δ^(k+2Σl) − Σ_{j ∈ {0..q}^k} Π(2j_i+1) Cbar_j² / 4^(k+Σl)
//! ```
//!
//! and a scheme of strong order `r/2` requires `R(q) ≤ C·Δ^(r+1−k−2Σl)`.
//! The residual of `(0,0)` has the closed form `1/(4(2q+1))`.

use std::collections::HashMap;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{ToPrimitive, Zero};
use serde::Serialize;

use crate::coeffs::{self, CoeffError, CoeffStore};
use crate::schemes::{integral_weights, Calculus, Order};

#[derive(Debug, thiserror::Error)]
pub enum AccuracyError {
    #[error(transparent)]
    Coeff(#[from] CoeffError),
    #[error("step size must be positive and finite, got {0}")]
    BadStep(f64),
    #[error("accuracy constant must be positive and finite, got {0}")]
    BadConstant(f64),
    #[error("no exact error formula for index pattern {pattern:?} with weights {weights:?}")]
    UnsupportedPattern {
        weights: Vec<u8>,
        pattern: Vec<usize>,
    },
    #[error("{0}")]
    Unsupported(String),
}

/// One truncation number and the weight tuples it governs.
#[derive(Clone, Copy, Debug)]
pub struct Slot {
    pub name: &'static str,
    pub weights: &'static [&'static [u8]],
    pub cap: usize,
}

/// `q1..q15` in order.
pub const SLOTS: [Slot; 15] = [
    Slot {
        name: "q1",
        weights: &[&[0, 0, 0]],
        cap: 56,
    },
    Slot {
        name: "q2",
        weights: &[&[0, 1], &[1, 0]],
        cap: 15,
    },
    Slot {
        name: "q3",
        weights: &[&[0, 0, 0, 0]],
        cap: 15,
    },
    Slot {
        name: "q4",
        weights: &[&[0, 0, 0, 0, 0]],
        cap: 6,
    },
    Slot {
        name: "q5",
        weights: &[&[2, 0]],
        cap: 2,
    },
    Slot {
        name: "q6",
        weights: &[&[1, 1]],
        cap: 2,
    },
    Slot {
        name: "q7",
        weights: &[&[0, 2]],
        cap: 2,
    },
    Slot {
        name: "q8",
        weights: &[&[0, 0, 1]],
        cap: 6,
    },
    Slot {
        name: "q9",
        weights: &[&[0, 1, 0]],
        cap: 6,
    },
    Slot {
        name: "q10",
        weights: &[&[1, 0, 0]],
        cap: 6,
    },
    Slot {
        name: "q11",
        weights: &[&[0, 0, 0, 1]],
        cap: 2,
    },
    Slot {
        name: "q12",
        weights: &[&[0, 0, 1, 0]],
        cap: 2,
    },
    Slot {
        name: "q13",
        weights: &[&[0, 1, 0, 0]],
        cap: 2,
    },
    Slot {
        name: "q14",
        weights: &[&[1, 0, 0, 0]],
        cap: 2,
    },
    Slot {
        name: "q15",
        weights: &[&[0, 0, 0, 0, 0, 0]],
        cap: 2,
    },
];

/// Index into [`SLOTS`] of a weight tuple.
pub fn slot_of(weights: &[u8]) -> Option<usize> {
    SLOTS.iter().position(|s| s.weights.contains(&weights))
}

/// Achieved residual of one weight tuple at its selected truncation.
#[derive(Clone, Debug, Serialize)]
pub struct Residual {
    pub weights: Vec<u8>,
    pub q: usize,
    pub residual: f64,
    pub threshold: f64,
    pub capped: bool,
}

/// Truncation numbers for one run.
#[derive(Clone, Debug, Serialize)]
pub struct QSet {
    /// Truncation of the `(0,0)` pair, `0` when the scheme has no pair.
    pub q: usize,
    /// `q1..q15`; `None` when the scheme does not use that slot.
    pub extra: [Option<usize>; 15],
    pub residuals: Vec<Residual>,
}

impl QSet {
    /// A set with explicit values and no selection record.
    pub fn fixed(q: usize, extra: [Option<usize>; 15]) -> Self {
        Self {
            q,
            extra,
            residuals: Vec::new(),
        }
    }

    /// The same truncation for every multiple integral.
    pub fn uniform(q: usize) -> Self {
        Self::fixed(q, [Some(q); 15])
    }

    /// Truncation used for a weight tuple (`None` for the exact singles).
    pub fn for_weights(&self, weights: &[u8]) -> Option<usize> {
        match weights {
            [_] => None,
            [0, 0] => Some(self.q),
            w => slot_of(w).and_then(|s| self.extra[s]),
        }
    }

    /// Whether any cap was binding.
    pub fn capped(&self) -> bool {
        self.residuals.iter().any(|r| r.capped)
    }

    /// Largest truncation used, which sets the width of the draw matrix.
    pub fn max_q(&self) -> usize {
        self.extra
            .iter()
            .flatten()
            .copied()
            .chain([self.q])
            .max()
            .unwrap_or(0)
    }
}

fn check_inputs(delta: f64, c: f64) -> Result<(), AccuracyError> {
    if !(delta > 0.0 && delta.is_finite()) {
        return Err(AccuracyError::BadStep(delta));
    }
    if !(c > 0.0 && c.is_finite()) {
        return Err(AccuracyError::BadConstant(c));
    }
    Ok(())
}

/// Smallest `q ≥ 1` with `1/(4(2q+1)) ≤ C·Δ^(r−1)`.
pub fn pair_q(order: Order, delta: f64, c: f64) -> usize {
    let x = delta.powi(-(order.r() as i32 - 1)) / (4.0 * c);
    let q = ((x - 1.0) / 2.0).ceil();
    if q.is_nan() || q < 1.0 {
        1
    } else if q >= usize::MAX as f64 {
        usize::MAX
    } else {
        q as usize
    }
}

/// Threshold exponent `r + 1 − (k + 2Σl)` of a weight tuple.
pub fn threshold_exponent(order: Order, weights: &[u8]) -> i32 {
    order.r() as i32 + 1 - coeffs::degree(weights).1 as i32
}

/// Exact normalized residual `R(q)` of a weight tuple.
pub fn residual_exact(
    weights: &[u8],
    q: usize,
    store: &CoeffStore,
) -> Result<BigRational, AccuracyError> {
    let norm = coeffs::norm_bar(weights)?;
    if weights == [0, 0] {
        return Ok(BigRational::new(
            1.into(),
            BigInt::from(4 * (2 * q as u64 + 1)),
        ));
    }
    let shells = store.parseval_shells(weights, q)?;
    Ok(shells.iter().fold(norm, |acc, s| acc - s))
}

fn to_f64(r: &BigRational) -> f64 {
    r.to_f64().unwrap_or_else(|| {
        r.numer().to_f64().unwrap_or(f64::NAN) / r.denom().to_f64().unwrap_or(f64::NAN)
    })
}

/// Smallest `q ≤ cap` meeting `R(q) ≤ threshold`, or `(cap, true)` when none does.
fn search(
    weights: &[u8],
    cap: usize,
    threshold: f64,
    store: &CoeffStore,
) -> Result<(usize, f64, bool), AccuracyError> {
    let passes = |q: usize| -> Result<(bool, f64), AccuracyError> {
        let r = to_f64(&residual_exact(weights, q, store)?);
        Ok((r <= threshold, r))
    };
    // Grow geometrically so the cube is only generated as far as needed.
    let mut lo = None;
    let mut hi = 0usize;
    loop {
        let (ok, r) = passes(hi)?;
        if ok {
            if hi == 0 {
                return Ok((0, r, false));
            }
            break;
        }
        if hi == cap {
            return Ok((cap, r, true));
        }
        lo = Some(hi);
        hi = if hi == 0 { 1 } else { (hi * 2).min(cap) };
    }
    // Invariant: lo fails, hi passes.
    let mut lo = lo.expect("a failing level precedes a passing one");
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if passes(mid)?.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok((hi, passes(hi)?.1, false))
}

/// Selects every truncation number a scheme needs for step `delta` and
/// accuracy constant `c`. Both calculi use the same conditions.
pub fn select_q(
    order: Order,
    calculus: Calculus,
    delta: f64,
    c: f64,
    store: &CoeffStore,
) -> Result<QSet, AccuracyError> {
    check_inputs(delta, c)?;
    let weights =
        integral_weights(order, calculus).map_err(|e| AccuracyError::Unsupported(e.to_string()))?;
    let mut out = QSet::fixed(0, [None; 15]);
    if weights.iter().any(|w| w == &[0, 0]) {
        out.q = pair_q(order, delta, c);
        let e = threshold_exponent(order, &[0, 0]);
        out.residuals.push(Residual {
            weights: vec![0, 0],
            q: out.q,
            residual: 1.0 / (4.0 * (2.0 * out.q as f64 + 1.0)),
            threshold: c * delta.powi(e),
            capped: false,
        });
    }
    for (s, slot) in SLOTS.iter().enumerate() {
        let used: Vec<&[u8]> = slot
            .weights
            .iter()
            .copied()
            .filter(|w| weights.iter().any(|x| x == w))
            .collect();
        if used.is_empty() {
            continue;
        }
        let mut q = 0;
        let mut rows = Vec::new();
        for w in used {
            let threshold = c * delta.powi(threshold_exponent(order, w));
            let (qw, r, capped) = search(w, slot.cap, threshold, store)?;
            q = q.max(qw);
            rows.push((w, threshold, r, capped));
        }
        for (w, threshold, r, capped) in rows {
            // A shared slot may end above the level this tuple needed on its own.
            let residual = if capped {
                r
            } else {
                to_f64(&residual_exact(w, q, store)?)
            };
            out.residuals.push(Residual {
                weights: w.to_vec(),
                q,
                residual,
                threshold,
                capped,
            });
        }
        out.extra[s] = Some(q);
    }
    Ok(out)
}

/// Mean-square error of the truncated approximation when all noise indices
/// are pairwise different: `‖K‖² − Σ C²`.
pub fn exact_error_distinct(
    weights: &[u8],
    q: usize,
    delta: f64,
    store: &CoeffStore,
) -> Result<f64, AccuracyError> {
    let (_, e) = coeffs::degree(weights);
    Ok(to_f64(&residual_exact(weights, q, store)?) * delta.powi(e as i32))
}

/// Upper bound `k!·(‖K‖² − Σ C²)` valid for any index combination.
pub fn error_bound(
    weights: &[u8],
    q: usize,
    delta: f64,
    store: &CoeffStore,
) -> Result<f64, AccuracyError> {
    let k = weights.len();
    let fact: f64 = (1..=k).map(|x| x as f64).product();
    Ok(fact * exact_error_distinct(weights, q, delta, store)?)
}

/// Canonical form of a noise pattern: labels renumbered by first appearance.
fn canonical(pattern: &[usize]) -> Vec<usize> {
    let mut seen: HashMap<usize, usize> = HashMap::new();
    pattern
        .iter()
        .map(|p| {
            let n = seen.len();
            *seen.entry(*p).or_insert(n)
        })
        .collect()
}

/// Repeated-index patterns with a printed exact error formula, in canonical form.
const PATTERNS: [&[usize]; 25] = [
    &[0, 0],
    &[0, 0, 1],
    &[0, 1, 1],
    &[0, 1, 0],
    &[0, 0, 1, 2],
    &[0, 1, 0, 2],
    &[0, 1, 1, 2],
    &[0, 1, 2, 0],
    &[0, 1, 1, 0],
    &[0, 0, 0, 1],
    &[0, 1, 1, 1],
    &[0, 0, 1, 0],
    &[0, 1, 0, 0],
    &[0, 0, 1, 2, 3],
    &[0, 1, 1, 2, 3],
    &[0, 1, 0, 2, 3],
    &[0, 1, 2, 0, 3],
    &[0, 1, 2, 3, 0],
    &[0, 1, 2, 1, 3],
    &[0, 1, 2, 3, 3],
    &[0, 1, 2, 1, 2],
    &[0, 0, 0],
    &[0, 0, 0, 0],
    &[0, 0, 0, 0, 0],
    &[0, 0, 0, 0, 0, 0],
];

/// Position permutations that leave the noise pattern unchanged.
fn stabilizer(pattern: &[usize]) -> Vec<Vec<usize>> {
    fn rec(
        pattern: &[usize],
        used: &mut Vec<bool>,
        cur: &mut Vec<usize>,
        out: &mut Vec<Vec<usize>>,
    ) {
        let a = cur.len();
        if a == pattern.len() {
            out.push(cur.clone());
            return;
        }
        for b in 0..pattern.len() {
            if !used[b] && pattern[b] == pattern[a] {
                used[b] = true;
                cur.push(b);
                rec(pattern, used, cur, out);
                cur.pop();
                used[b] = false;
            }
        }
    }
    let mut out = Vec::new();
    rec(
        pattern,
        &mut vec![false; pattern.len()],
        &mut Vec::new(),
        &mut out,
    );
    out
}

/// Exact mean-square error for a noise pattern with repeated indices:
/// `‖K‖² − Σ_j C_j Σ_σ C_{σ(j)}` where `σ` runs over the position
/// permutations that only exchange equal noise indices. Pairwise distinct
/// patterns reduce to [`exact_error_distinct`].
pub fn exact_error_pattern(
    weights: &[u8],
    q: usize,
    delta: f64,
    pattern: &[usize],
    store: &CoeffStore,
) -> Result<f64, AccuracyError> {
    let k = weights.len();
    let unsupported = || AccuracyError::UnsupportedPattern {
        weights: weights.to_vec(),
        pattern: pattern.to_vec(),
    };
    if pattern.len() != k {
        return Err(unsupported());
    }
    let canon = canonical(pattern);
    if canon.iter().enumerate().all(|(a, &c)| a == c) {
        return exact_error_distinct(weights, q, delta, store);
    }
    if !PATTERNS.contains(&canon.as_slice()) {
        return Err(unsupported());
    }
    let perms = stabilizer(&canon);
    let cube = store.cube(weights, q)?;
    let side = q + 1;
    let index = |j: &[u16]| {
        j.iter()
            .rev()
            .fold(0usize, |acc, &x| acc * side + x as usize)
    };
    let (sum_l, e) = coeffs::degree(weights);
    let mut total = BigRational::zero();
    let mut permuted = vec![0u16; k];
    for (key, v) in &cube {
        if v.is_zero() {
            continue;
        }
        let mut inner = BigRational::zero();
        for p in &perms {
            for a in 0..k {
                permuted[a] = key.indices[p[a]];
            }
            inner += &cube[index(&permuted)].1;
        }
        let prod: i64 = key.indices.iter().map(|&j| 2 * j as i64 + 1).product();
        total += v * inner * BigRational::from_integer(prod.into());
    }
    let den = BigInt::from(1) << (2 * (k as u32 + sum_l)) as usize;
    let sum = total / BigRational::from_integer(den);
    Ok(to_f64(&(coeffs::norm_bar(weights)? - sum)) * delta.powi(e as i32))
}

/// Error summary of one weight tuple.
#[derive(Clone, Debug, Serialize)]
pub struct ErrorRow {
    pub weights: Vec<u8>,
    pub q: usize,
    pub exact_error_distinct: f64,
    pub bound: f64,
    pub norm: f64,
    pub parseval_sum: f64,
}

/// Errors of every multiple integral governed by `qset`.
pub fn error_report(
    order: Order,
    calculus: Calculus,
    qset: &QSet,
    delta: f64,
    store: &CoeffStore,
) -> Result<Vec<ErrorRow>, AccuracyError> {
    let weights =
        integral_weights(order, calculus).map_err(|e| AccuracyError::Unsupported(e.to_string()))?;
    let mut rows = Vec::new();
    for w in weights {
        let Some(q) = qset.for_weights(&w) else {
            continue;
        };
        let norm = coeffs::norm_ik(&w, delta)?;
        let exact = exact_error_distinct(&w, q, delta, store)?;
        rows.push(ErrorRow {
            q,
            exact_error_distinct: exact,
            bound: error_bound(&w, q, delta, store)?,
            norm,
            parseval_sum: norm - exact,
            weights: w,
        });
    }
    Ok(rows)
}
