//! Exact polynomial algebra in the Legendre basis on [-1, 1].

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Zero};

pub(crate) fn ratio(n: i64, d: i64) -> BigRational {
    BigRational::new(BigInt::from(n), BigInt::from(d))
}

/// `sum_n c[n] P_n(x)` with exact rational coefficients.
#[derive(Clone, Debug, PartialEq)]
pub(crate) struct Series(pub Vec<BigRational>);

impl Series {
    pub fn one() -> Self {
        Series(vec![BigRational::one()])
    }

    pub fn coeff(&self, n: usize) -> BigRational {
        self.0.get(n).cloned().unwrap_or_else(BigRational::zero)
    }

    fn trimmed(mut v: Vec<BigRational>) -> Self {
        while v.len() > 1 && v.last().is_some_and(|c| c.is_zero()) {
            v.pop();
        }
        Series(v)
    }

    /// `x * f`, using `x P_n = ((n+1) P_{n+1} + n P_{n-1}) / (2n+1)`.
    pub fn mul_x(&self) -> Self {
        let mut out = vec![BigRational::zero(); self.0.len() + 1];
        for (n, c) in self.0.iter().enumerate() {
            if c.is_zero() {
                continue;
            }
            let d = 2 * n as i64 + 1;
            out[n + 1] += c * ratio(n as i64 + 1, d);
            if n > 0 {
                out[n - 1] += c * ratio(n as i64, d);
            }
        }
        Self::trimmed(out)
    }

    /// `(1 + x)^l * f`.
    pub fn mul_one_plus_x_pow(&self, l: u32) -> Self {
        let mut f = self.clone();
        for _ in 0..l {
            let xf = f.mul_x();
            f = f.add(&xf);
        }
        f
    }

    pub fn add(&self, other: &Series) -> Self {
        let len = self.0.len().max(other.0.len());
        let out = (0..len).map(|n| self.coeff(n) + other.coeff(n)).collect();
        Self::trimmed(out)
    }

    /// `a * self + b * other`.
    pub fn combine(&self, a: &BigRational, other: &Series, b: &BigRational) -> Self {
        let len = self.0.len().max(other.0.len());
        let out = (0..len)
            .map(|n| {
                let mut v = BigRational::zero();
                if let Some(c) = self.0.get(n) {
                    if !c.is_zero() {
                        v += c * a;
                    }
                }
                if let Some(c) = other.0.get(n) {
                    if !c.is_zero() {
                        v += c * b;
                    }
                }
                v
            })
            .collect();
        Self::trimmed(out)
    }

    /// The antiderivative vanishing at -1.
    pub fn integrate_from_minus_one(&self) -> Self {
        let mut out = vec![BigRational::zero(); self.0.len() + 1];
        for (n, c) in self.0.iter().enumerate() {
            if c.is_zero() {
                continue;
            }
            if n == 0 {
                out[0] += c;
                out[1] += c;
            } else {
                let q = c * ratio(1, 2 * n as i64 + 1);
                out[n + 1] += &q;
                out[n - 1] -= q;
            }
        }
        Self::trimmed(out)
    }

    /// `∫_{-1}^{1} P_j(x) f(x) dx`.
    pub fn project(&self, j: usize) -> BigRational {
        self.coeff(j) * ratio(2, 2 * j as i64 + 1)
    }

    /// The products `f P_0, f P_1, ..., f P_jmax` via the three-term recurrence.
    pub fn times_legendre_upto(&self, jmax: usize) -> Vec<Series> {
        let mut out = Vec::with_capacity(jmax + 1);
        out.push(self.clone());
        if jmax >= 1 {
            out.push(self.mul_x());
        }
        for j in 1..jmax {
            let a = ratio(2 * j as i64 + 1, j as i64 + 1);
            let b = ratio(-(j as i64), j as i64 + 1);
            let next = out[j].mul_x().combine(&a, &out[j - 1], &b);
            out.push(next);
        }
        out
    }

    /// Evaluates at `x` in floating point (for tests).
    #[cfg(test)]
    pub fn eval_f64(&self, x: f64) -> f64 {
        use num_traits::ToPrimitive;
        let (mut p0, mut p1) = (1.0, x);
        let mut s = 0.0;
        for (n, c) in self.0.iter().enumerate() {
            let pn = if n == 0 {
                1.0
            } else if n == 1 {
                x
            } else {
                let p2 = ((2 * n - 1) as f64 * x * p1 - (n - 1) as f64 * p0) / n as f64;
                p0 = p1;
                p1 = p2;
                p2
            };
            s += c.to_f64().unwrap() * pn;
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn antiderivative_vanishes_at_minus_one_and_differentiates_back() {
        let f = Series(vec![ratio(1, 2), ratio(-3, 1), ratio(2, 5), ratio(7, 3)]);
        let g = f.integrate_from_minus_one();
        assert!(g.eval_f64(-1.0).abs() < 1e-14);
        let h = 1e-6;
        for x in [-0.7, 0.0, 0.4, 0.9] {
            let fd = (g.eval_f64(x + h) - g.eval_f64(x - h)) / (2.0 * h);
            assert!((fd - f.eval_f64(x)).abs() < 1e-7);
        }
    }

    #[test]
    fn legendre_products_match_pointwise() {
        let f = Series(vec![ratio(1, 3), ratio(2, 1), ratio(-1, 4)]);
        let prods = f.times_legendre_upto(5);
        for x in [-0.9, -0.2, 0.3, 0.8] {
            let (mut p0, mut p1) = (1.0f64, x);
            for (j, prod) in prods.iter().enumerate() {
                let pj = match j {
                    0 => 1.0,
                    1 => x,
                    _ => {
                        let p2 = ((2 * j - 1) as f64 * x * p1 - (j - 1) as f64 * p0) / j as f64;
                        p0 = p1;
                        p1 = p2;
                        p2
                    }
                };
                assert!((prod.eval_f64(x) - f.eval_f64(x) * pj).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn one_plus_x_squared() {
        let s = Series::one().mul_one_plus_x_pow(2);
        for x in [-1.0, 0.0, 0.5] {
            assert!((s.eval_f64(x) - (1.0 + x) * (1.0 + x)).abs() < 1e-14);
        }
    }
}
