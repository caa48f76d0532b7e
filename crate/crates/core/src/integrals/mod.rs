//! Mean-square approximations of iterated Itô and Stratonovich integrals.
//!
//! All integrals of a step read the same [`GaussianDraws`]. Noise indices
//! are 0-based here; index tuples, weight tuples and Legendre degrees are
//! all ordered innermost first.

mod plan;
pub mod rng;

use crate::coeffs::{CoeffError, CoeffStore, ScaledTable};

pub use plan::{build_integral_set, tuple_index, IntegralPlan, IntegralSet};
pub use rng::{draw, path_seed, GaussianDraws, PathRng};

#[derive(Debug, thiserror::Error)]
pub enum IntegralError {
    #[error(transparent)]
    Coeff(#[from] CoeffError),
    #[error("noise index tuple {noise:?} does not fit weights {weights:?} with m = {m}")]
    Shape {
        weights: Vec<u8>,
        noise: Vec<usize>,
        m: usize,
    },
    #[error("draws hold degrees up to {have}, but {need} are required")]
    DrawsTooShort { have: usize, need: usize },
}

/// Single integral `I_(l)` for `l ∈ {0, 1, 2}`, exact in terms of `ζ_0..ζ_l`.
pub fn ito_single(l: u8, i: usize, draws: &GaussianDraws, delta: f64) -> f64 {
    let z = draws.row(i);
    let s = delta.sqrt();
    match l {
        0 => s * z[0],
        1 => -delta * s / 2.0 * (z[0] + z[1] / 3f64.sqrt()),
        2 => {
            delta * delta * s / 3.0 * (z[0] + 3f64.sqrt() / 2.0 * z[1] + z[2] / (2.0 * 5f64.sqrt()))
        }
        _ => panic!("single integrals are defined for weights 0, 1 and 2 only"),
    }
}

fn pair00_sum(z1: &[f64], z2: &[f64], q: usize) -> f64 {
    let mut s = z1[0] * z2[0];
    for i in 1..=q {
        let d = ((4 * i * i - 1) as f64).sqrt();
        s += (z1[i - 1] * z2[i] - z1[i] * z2[i - 1]) / d;
    }
    s
}

/// Itô `I_(00)^(i1 i2)` truncated at `q`.
pub fn ito_pair00(i1: usize, i2: usize, draws: &GaussianDraws, q: usize, delta: f64) -> f64 {
    let ind = if i1 == i2 { 1.0 } else { 0.0 };
    delta / 2.0 * (pair00_sum(draws.row(i1), draws.row(i2), q) - ind)
}

/// Stratonovich `I*_(00)^(i1 i2)` truncated at `q`.
pub fn strat_pair00(i1: usize, i2: usize, draws: &GaussianDraws, q: usize, delta: f64) -> f64 {
    delta / 2.0 * pair00_sum(draws.row(i1), draws.row(i2), q)
}

/// A set of disjoint unordered position pairs (0-based) plus the positions
/// left unpaired.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Matching {
    pub pairs: Vec<(usize, usize)>,
    pub leftover: Vec<usize>,
}

impl Matching {
    pub fn r(&self) -> usize {
        self.pairs.len()
    }
}

/// All matchings of `{0..k-1}` with at least one pair, ordered by number of
/// pairs and then lexicographically.
pub fn pair_matchings(k: usize) -> Vec<Matching> {
    fn extend(free: &[usize], pairs: &mut Vec<(usize, usize)>, out: &mut Vec<Vec<(usize, usize)>>) {
        out.push(pairs.clone());
        let start = pairs.last().map_or(0, |p| p.0 + 1);
        for (x, &a) in free.iter().enumerate() {
            if a < start {
                continue;
            }
            for &b in &free[x + 1..] {
                let rest: Vec<usize> = free.iter().copied().filter(|&c| c != a && c != b).collect();
                pairs.push((a, b));
                extend(&rest, pairs, out);
                pairs.pop();
            }
        }
    }
    let all: Vec<usize> = (0..k).collect();
    let mut sets = Vec::new();
    extend(&all, &mut Vec::new(), &mut sets);
    let mut out: Vec<Matching> = sets
        .into_iter()
        .filter(|p| !p.is_empty())
        .map(|pairs| {
            let leftover = all
                .iter()
                .copied()
                .filter(|c| !pairs.iter().any(|&(a, b)| a == *c || b == *c))
                .collect();
            Matching { pairs, leftover }
        })
        .collect();
    out.sort_by(|a, b| (a.r(), &a.pairs).cmp(&(b.r(), &b.pairs)));
    out
}

fn check_shape(
    table: &ScaledTable,
    noise: &[usize],
    draws: &GaussianDraws,
) -> Result<(), IntegralError> {
    if noise.len() != table.k() || noise.iter().any(|&i| i >= draws.m()) {
        return Err(IntegralError::Shape {
            weights: table.weights.clone(),
            noise: noise.to_vec(),
            m: draws.m(),
        });
    }
    if draws.jmax() < table.q {
        return Err(IntegralError::DrawsTooShort {
            have: draws.jmax(),
            need: table.q,
        });
    }
    Ok(())
}

/// `Σ_j C_j Π_a ζ_{j_a}^{(i_a)}` by contracting the innermost index first.
pub(crate) fn product_sum(table: &ScaledTable, noise: &[usize], draws: &GaussianDraws) -> f64 {
    let side = table.q + 1;
    let mut cur = table.values.clone();
    for &i in noise {
        let z = &draws.row(i)[..side];
        cur = cur.chunks_exact(side).map(|c| dot(c, z)).collect();
    }
    cur[0]
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `Σ_j C_j Π_{pairs} 1{j_a = j_b} Π_{leftover} ζ` for one matching whose
/// noise indicators are already known to hold.
pub(crate) fn matching_sum(
    table: &ScaledTable,
    m: &Matching,
    noise: &[usize],
    draws: &GaussianDraws,
) -> f64 {
    let side = table.q + 1;
    let pow: Vec<usize> = (0..table.k()).map(|a| side.pow(a as u32)).collect();
    // Free variables: one per pair, then one per leftover position.
    let mut strides: Vec<usize> = m.pairs.iter().map(|&(a, b)| pow[a] + pow[b]).collect();
    strides.extend(m.leftover.iter().map(|&c| pow[c]));
    let rows: Vec<&[f64]> = m.leftover.iter().map(|&c| draws.row(noise[c])).collect();
    let r = m.pairs.len();
    let g = strides.len();
    let mut j = vec![0usize; g];
    let mut total = 0.0;
    loop {
        let idx: usize = j.iter().zip(&strides).map(|(a, b)| a * b).sum();
        let mut p = table.values[idx];
        for (x, row) in rows.iter().enumerate() {
            p *= row[j[r + x]];
        }
        total += p;
        let mut a = 0;
        loop {
            if a == g {
                return total;
            }
            j[a] += 1;
            if j[a] < side {
                break;
            }
            j[a] = 0;
            a += 1;
        }
    }
}

pub(crate) fn matching_applies(m: &Matching, noise: &[usize]) -> bool {
    m.pairs.iter().all(|&(a, b)| noise[a] == noise[b])
}

/// Itô approximation from a prepared table: the product sum plus the
/// alternating pair-partition corrections.
pub fn ito_general_with(
    table: &ScaledTable,
    noise: &[usize],
    draws: &GaussianDraws,
) -> Result<f64, IntegralError> {
    check_shape(table, noise, draws)?;
    let mut v = product_sum(table, noise, draws);
    for m in pair_matchings(table.k()) {
        if matching_applies(&m, noise) {
            let s = matching_sum(table, &m, noise, draws);
            v += if m.r() % 2 == 1 { -s } else { s };
        }
    }
    Ok(v)
}

/// Stratonovich approximation from a prepared table: the plain product sum.
pub fn strat_general_with(
    table: &ScaledTable,
    noise: &[usize],
    draws: &GaussianDraws,
) -> Result<f64, IntegralError> {
    check_shape(table, noise, draws)?;
    Ok(product_sum(table, noise, draws))
}

/// Itô approximation of `I_(weights)^(noise)` truncated at `q` on a step `delta`.
pub fn ito_general(
    weights: &[u8],
    noise: &[usize],
    draws: &GaussianDraws,
    q: usize,
    delta: f64,
    store: &CoeffStore,
) -> Result<f64, IntegralError> {
    ito_general_with(&store.scaled_table(weights, q, delta)?, noise, draws)
}

/// Stratonovich approximation of `I*_(weights)^(noise)` truncated at `q` on a step `delta`.
pub fn strat_general(
    weights: &[u8],
    noise: &[usize],
    draws: &GaussianDraws,
    q: usize,
    delta: f64,
    store: &CoeffStore,
) -> Result<f64, IntegralError> {
    strat_general_with(&store.scaled_table(weights, q, delta)?, noise, draws)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_draws(m: usize, jmax: usize, seed: u64) -> GaussianDraws {
        draw(&mut PathRng::new(seed), m, jmax)
    }

    #[test]
    fn single_integral_examples() {
        let d = GaussianDraws::from_values(1, 2, vec![1.0, 0.0, 0.0]);
        assert_eq!(ito_single(0, 0, &d, 1.0), 1.0);
        assert!((ito_single(2, 0, &d, 1.0) - 1.0 / 3.0).abs() < 1e-16);
        let d = GaussianDraws::zeros(1, 2);
        assert_eq!(ito_single(1, 0, &d, 0.3), 0.0);
    }

    #[test]
    fn pair_with_equal_indices_collapses() {
        let d = sample_draws(2, 10, 5);
        for q in [1, 4, 10] {
            let w = d.z(1, 0);
            let v = ito_pair00(1, 1, &d, q, 0.25);
            assert!((v - (0.25 * w * w - 0.25) / 2.0).abs() < 1e-15);
        }
    }

    #[test]
    fn pair_hand_expansion_q1() {
        let d = GaussianDraws::from_values(2, 1, vec![0.3, -1.2, 0.7, 2.0]);
        let want = 0.5 / 2.0 * (0.3 * 0.7 + (0.3 * 2.0 - (-1.2) * 0.7) / 3f64.sqrt());
        assert!((ito_pair00(0, 1, &d, 1, 0.5) - want).abs() < 1e-15);
        assert_eq!(ito_pair00(0, 1, &GaussianDraws::zeros(2, 1), 1, 0.5), 0.0);
    }

    #[test]
    fn matching_counts() {
        let count = |k: usize, r: usize| pair_matchings(k).iter().filter(|m| m.r() == r).count();
        assert_eq!(pair_matchings(1).len(), 0);
        assert_eq!(
            pair_matchings(2),
            vec![Matching {
                pairs: vec![(0, 1)],
                leftover: vec![]
            }]
        );
        assert_eq!((count(3, 1), count(3, 2)), (3, 0));
        assert_eq!((count(4, 1), count(4, 2)), (6, 3));
        assert_eq!((count(5, 1), count(5, 2)), (10, 15));
        assert_eq!((count(6, 1), count(6, 2), count(6, 3)), (15, 45, 15));
    }

    #[test]
    fn general_pair_agrees_with_closed_form_at_q0() {
        let store = CoeffStore::in_memory();
        let d = sample_draws(2, 2, 9);
        for (i1, i2) in [(0, 0), (0, 1), (1, 0)] {
            let g = ito_general(&[0, 0], &[i1, i2], &d, 0, 0.7, &store).unwrap();
            assert!((g - ito_pair00(i1, i2, &d, 0, 0.7)).abs() < 1e-15);
        }
    }

    #[test]
    fn general_pair_matches_closed_form_for_larger_q() {
        let store = CoeffStore::in_memory();
        let d = sample_draws(2, 6, 21);
        for (i1, i2) in [(0, 0), (0, 1), (1, 0), (1, 1)] {
            let g = ito_general(&[0, 0], &[i1, i2], &d, 6, 0.3, &store).unwrap();
            let s = strat_general(&[0, 0], &[i1, i2], &d, 6, 0.3, &store).unwrap();
            assert!((g - ito_pair00(i1, i2, &d, 6, 0.3)).abs() < 1e-14);
            assert!((s - strat_pair00(i1, i2, &d, 6, 0.3)).abs() < 1e-14);
        }
    }

    #[test]
    fn distinct_indices_make_calculi_agree() {
        let store = CoeffStore::in_memory();
        let d = sample_draws(3, 3, 1);
        let a = ito_general(&[0, 0, 0], &[0, 1, 2], &d, 3, 0.1, &store).unwrap();
        let b = strat_general(&[0, 0, 0], &[0, 1, 2], &d, 3, 0.1, &store).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn shape_errors() {
        let store = CoeffStore::in_memory();
        let d = sample_draws(2, 1, 1);
        assert!(matches!(
            ito_general(&[0, 0, 0], &[0, 2, 1], &d, 1, 0.1, &store),
            Err(IntegralError::Shape { .. })
        ));
        assert!(matches!(
            ito_general(&[0, 0, 0], &[0, 1, 1], &d, 3, 0.1, &store),
            Err(IntegralError::DrawsTooShort { .. })
        ));
    }
}
