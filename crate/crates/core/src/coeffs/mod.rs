//! Exact multiple Fourier–Legendre coefficients of iterated stochastic integrals.
//!
//! For a weight tuple `(l1..lk)` and degree tuple `(j1..jk)` (both innermost
//! first) the normalized coefficient is
//!
//! ```text
//! Cbar = (-1)^(l1+..+lk) ∫_{-1}^{1} P_jk(xk)(1+xk)^lk ... ∫_{-1}^{x2} P_j1(x1)(1+x1)^l1 dx1 ... dxk
//! ```
//!
//! and the coefficient used on a step of length `Δ` is
//!
//! ```text
//! C = Π sqrt(2 j_i + 1) / 2^(k + Σl) · Δ^((k + 2Σl)/2) · Cbar.
//! ```
//!
//! `Cbar` is computed exactly: each nested integrand is kept as a polynomial
//! in the Legendre basis with big-rational coefficients, multiplication by
//! `P_j` follows the three-term recurrence and antiderivatives use
//! `∫ P_n = (P_{n+1} - P_{n-1}) / (2n + 1)`.

pub mod quadrature;
mod series;
mod store;

use std::fmt;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};
use thiserror::Error;

use series::{ratio, Series};
pub use store::{CoeffStore, ScaledTable};

/// Largest Legendre degree accepted anywhere in the module.
pub const MAX_DEGREE: usize = 64;

/// Weight tuples of the iterated integrals used by the schemes (multiplicity ≥ 2,
/// excluding the closed-form pair `(0,0)`).
pub const SCHEME_WEIGHTS: [&[u8]; 16] = [
    &[0, 0, 0],
    &[0, 1],
    &[1, 0],
    &[0, 0, 0, 0],
    &[0, 2],
    &[2, 0],
    &[1, 1],
    &[1, 0, 0],
    &[0, 1, 0],
    &[0, 0, 1],
    &[0, 0, 0, 0, 0],
    &[1, 0, 0, 0],
    &[0, 1, 0, 0],
    &[0, 0, 1, 0],
    &[0, 0, 0, 1],
    &[0, 0, 0, 0, 0, 0],
];

/// Additional weight tuples with closed-form approximations that the module
/// still accepts (used by error formulas and tests).
pub const EXTRA_WEIGHTS: [&[u8]; 4] = [&[0], &[1], &[2], &[0, 0]];

#[derive(Debug, Error)]
pub enum CoeffError {
    #[error("unsupported weight tuple {0:?}")]
    UnsupportedWeights(Vec<u8>),
    #[error("Legendre degree {0} exceeds the cap {MAX_DEGREE}")]
    DegreeCap(usize),
    #[error("index tuple {indices:?} does not match weights {weights:?}")]
    Shape { weights: Vec<u8>, indices: Vec<u16> },
    #[error("coefficient {0} is not in the store and generation is disabled")]
    Missing(CoeffKey),
    #[error("conflicting value for stored coefficient {0}")]
    Conflict(CoeffKey),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Format {
        path: String,
        line: usize,
        message: String,
    },
}

pub fn is_supported(weights: &[u8]) -> bool {
    SCHEME_WEIGHTS.contains(&weights) || EXTRA_WEIGHTS.contains(&weights)
}

fn check_weights(weights: &[u8]) -> Result<(), CoeffError> {
    if is_supported(weights) {
        Ok(())
    } else {
        Err(CoeffError::UnsupportedWeights(weights.to_vec()))
    }
}

/// Weight tuple plus Legendre degrees, both innermost first.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct CoeffKey {
    pub weights: Vec<u8>,
    pub indices: Vec<u16>,
}

impl CoeffKey {
    pub fn new(weights: &[u8], indices: &[u16]) -> Result<Self, CoeffError> {
        check_weights(weights)?;
        if weights.len() != indices.len() {
            return Err(CoeffError::Shape {
                weights: weights.to_vec(),
                indices: indices.to_vec(),
            });
        }
        if let Some(&j) = indices.iter().find(|&&j| j as usize > MAX_DEGREE) {
            return Err(CoeffError::DegreeCap(j as usize));
        }
        Ok(Self {
            weights: weights.to_vec(),
            indices: indices.to_vec(),
        })
    }

    pub fn k(&self) -> usize {
        self.weights.len()
    }
}

impl Ord for CoeffKey {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        (self.k(), &self.weights, &self.indices).cmp(&(other.k(), &other.weights, &other.indices))
    }
}

impl PartialOrd for CoeffKey {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for CoeffKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}|{}|{}",
            self.k(),
            join(&self.weights),
            join(&self.indices)
        )
    }
}

pub(crate) fn join<T: fmt::Display>(v: &[T]) -> String {
    v.iter()
        .map(|x| x.to_string())
        .collect::<Vec<_>>()
        .join(",")
}

/// Monomial coefficients (constant term first) of the Legendre polynomial `P_j`.
pub fn legendre(j: usize) -> Result<Vec<BigRational>, CoeffError> {
    if j > MAX_DEGREE {
        return Err(CoeffError::DegreeCap(j));
    }
    let mut p0 = vec![BigRational::one()];
    if j == 0 {
        return Ok(p0);
    }
    let mut p1 = vec![BigRational::zero(), BigRational::one()];
    for n in 1..j {
        // (n+1) P_{n+1} = (2n+1) x P_n - n P_{n-1}
        let mut next = vec![BigRational::zero(); n + 2];
        let a = ratio(2 * n as i64 + 1, n as i64 + 1);
        let b = ratio(n as i64, n as i64 + 1);
        for (d, c) in p1.iter().enumerate() {
            next[d + 1] += c * &a;
        }
        for (d, c) in p0.iter().enumerate() {
            next[d] -= c * &b;
        }
        p0 = p1;
        p1 = next;
    }
    Ok(p1)
}

fn sign_for(weights: &[u8]) -> BigRational {
    let total: u32 = weights.iter().map(|&l| l as u32).sum();
    if total % 2 == 1 {
        -BigRational::one()
    } else {
        BigRational::one()
    }
}

/// Exact normalized coefficient for one key.
pub fn cbar(key: &CoeffKey) -> Result<BigRational, CoeffError> {
    check_weights(&key.weights)?;
    let k = key.k();
    let mut q = Series::one();
    for m in 0..k - 1 {
        let g = q.mul_one_plus_x_pow(key.weights[m] as u32);
        let prod = g
            .times_legendre_upto(key.indices[m] as usize)
            .pop()
            .expect("nonempty");
        q = prod.integrate_from_minus_one();
    }
    let g = q.mul_one_plus_x_pow(key.weights[k - 1] as u32);
    Ok(sign_for(&key.weights) * g.project(key.indices[k - 1] as usize))
}

/// All exact coefficients of the index box `j_i ∈ 0..=jmax[i]`, visiting each
/// shared prefix once. Calls `sink(indices, value)` in lexicographic order of
/// `(j1, j2, ...)`.
pub fn cbar_box(
    weights: &[u8],
    jmax: &[usize],
    mut sink: impl FnMut(&[u16], BigRational),
) -> Result<(), CoeffError> {
    check_weights(weights)?;
    if jmax.len() != weights.len() {
        return Err(CoeffError::Shape {
            weights: weights.to_vec(),
            indices: jmax.iter().map(|&j| j as u16).collect(),
        });
    }
    if let Some(&j) = jmax.iter().find(|&&j| j > MAX_DEGREE) {
        return Err(CoeffError::DegreeCap(j));
    }
    let sign = sign_for(weights);
    let mut prefix = Vec::with_capacity(weights.len());
    descend(weights, jmax, &sign, Series::one(), &mut prefix, &mut sink);
    Ok(())
}

fn descend(
    weights: &[u8],
    jmax: &[usize],
    sign: &BigRational,
    q: Series,
    prefix: &mut Vec<u16>,
    sink: &mut impl FnMut(&[u16], BigRational),
) {
    let m = prefix.len();
    let g = q.mul_one_plus_x_pow(weights[m] as u32);
    if m + 1 == weights.len() {
        for j in 0..=jmax[m] {
            prefix.push(j as u16);
            sink(prefix, sign * g.project(j));
            prefix.pop();
        }
        return;
    }
    for (j, prod) in g.times_legendre_upto(jmax[m]).into_iter().enumerate() {
        prefix.push(j as u16);
        descend(
            weights,
            jmax,
            sign,
            prod.integrate_from_minus_one(),
            prefix,
            sink,
        );
        prefix.pop();
    }
}

/// Total weight `Σl` and the Δ exponent `k + 2Σl` of the squared norm.
pub fn degree(weights: &[u8]) -> (u32, u32) {
    let sum: u32 = weights.iter().map(|&l| l as u32).sum();
    (sum, weights.len() as u32 + 2 * sum)
}

/// Δ-independent part of the scaling: `Π sqrt(2j+1) / 2^(k+Σl)`.
pub fn prefactor(key: &CoeffKey) -> f64 {
    let (sum, _) = degree(&key.weights);
    let prod: f64 = key
        .indices
        .iter()
        .map(|&j| (2.0 * j as f64 + 1.0).sqrt())
        .product();
    prod / 2f64.powi((key.k() as u32 + sum) as i32)
}

/// Scaled coefficient `C` for a step of length `delta`.
pub fn scale(key: &CoeffKey, cbar_value: &BigRational, delta: f64) -> f64 {
    let (_, e) = degree(&key.weights);
    prefactor(key) * delta.powf(e as f64 / 2.0) * to_f64(cbar_value)
}

pub(crate) fn to_f64(r: &BigRational) -> f64 {
    r.to_f64().unwrap_or_else(|| {
        // Fallback for magnitudes outside the direct conversion range.
        let n = r.numer().to_f64().unwrap_or(f64::NAN);
        let d = r.denom().to_f64().unwrap_or(f64::NAN);
        n / d
    })
}

/// `∫` over the ordered unit simplex of `Π u_i^(2 l_i)`, i.e. the squared
/// L2-norm of the kernel divided by `Δ^(k + 2Σl)`.
pub fn norm_bar(weights: &[u8]) -> Result<BigRational, CoeffError> {
    check_weights(weights)?;
    let mut acc = 0i64;
    let mut denom = BigInt::one();
    for (m, &l) in weights.iter().enumerate() {
        acc += 2 * l as i64;
        denom *= BigInt::from(acc + m as i64 + 1);
    }
    Ok(BigRational::new(BigInt::one(), denom))
}

/// Squared L2-norm of the kernel of the iterated integral on a step of length `delta`.
pub fn norm_ik(weights: &[u8], delta: f64) -> Result<f64, CoeffError> {
    let (_, e) = degree(weights);
    Ok(to_f64(&norm_bar(weights)?) * delta.powi(e as i32))
}

/// `Π(2j+1) Cbar² / 4^(k+Σl)`: the squared scaled coefficient divided by `Δ^(k+2Σl)`.
pub fn squared_weight(key: &CoeffKey, cbar_value: &BigRational) -> BigRational {
    let (sum, _) = degree(&key.weights);
    let prod: i64 = key.indices.iter().map(|&j| 2 * j as i64 + 1).product();
    let den = BigInt::one() << (2 * (key.k() as u32 + sum)) as usize;
    cbar_value * cbar_value * BigRational::new(BigInt::from(prod), den)
}
