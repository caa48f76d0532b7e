//! Floating-point cross-check for the exact coefficients.
//!
//! Each nested integral `Q_m(y) = ∫_{-1}^{y} P_j(x)(1+x)^l Q_{m-1}(x) dx` is a
//! polynomial of known degree; it is sampled at Chebyshev points, every sample
//! computed by adaptive Gauss–Kronrod quadrature of the previous level's
//! barycentric interpolant.

use super::{check_weights, CoeffError};

const GK_NODES: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const K15_WEIGHTS: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_728_0,
];
const G7_WEIGHTS: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn gauss_kronrod(f: &dyn Fn(f64) -> f64, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut k = K15_WEIGHTS[7] * fc;
    let mut g = G7_WEIGHTS[3] * fc;
    for i in 0..7 {
        let x = h * GK_NODES[i];
        let s = f(c - x) + f(c + x);
        k += K15_WEIGHTS[i] * s;
        if i % 2 == 1 {
            g += G7_WEIGHTS[i / 2] * s;
        }
    }
    (k * h, ((k - g) * h).abs())
}

/// Adaptive Gauss–Kronrod (7/15) quadrature on `[a, b]`.
pub fn integrate(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    fn rec(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64, depth: u32) -> f64 {
        let (v, err) = gauss_kronrod(f, a, b);
        if err <= tol || depth >= 40 || (b - a).abs() < 1e-12 {
            return v;
        }
        let m = 0.5 * (a + b);
        rec(f, a, m, 0.5 * tol, depth + 1) + rec(f, m, b, 0.5 * tol, depth + 1)
    }
    if a == b {
        return 0.0;
    }
    rec(f, a, b, tol, 0)
}

/// Legendre polynomial value by the three-term recurrence.
pub fn legendre_value(j: usize, x: f64) -> f64 {
    let (mut p0, mut p1) = (1.0, x);
    match j {
        0 => 1.0,
        1 => x,
        _ => {
            for n in 1..j {
                let p2 = ((2 * n + 1) as f64 * x * p1 - n as f64 * p0) / (n + 1) as f64;
                p0 = p1;
                p1 = p2;
            }
            p1
        }
    }
}

/// Gauss–Legendre nodes and weights on `[-1, 1]`, exact for degree `2n - 1`.
pub fn gauss_legendre(n: usize) -> Vec<(f64, f64)> {
    (0..n)
        .map(|i| {
            let mut x = -(std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 1.0;
            for _ in 0..100 {
                let p = legendre_value(n, x);
                dp = n as f64 * (x * p - legendre_value(n - 1, x)) / (x * x - 1.0);
                let dx = p / dp;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            (x, 2.0 / ((1.0 - x * x) * dp * dp))
        })
        .collect()
}

/// Polynomial on [-1, 1] stored by its values at Chebyshev points of the second kind.
struct Interpolant {
    nodes: Vec<f64>,
    values: Vec<f64>,
    weights: Vec<f64>,
}

impl Interpolant {
    fn sample(degree: usize, f: impl Fn(f64) -> f64) -> Self {
        let n = degree.max(1);
        let nodes: Vec<f64> = (0..=n)
            .map(|i| -(std::f64::consts::PI * i as f64 / n as f64).cos())
            .collect();
        let weights = (0..=n)
            .map(|i| {
                let s = if i % 2 == 0 { 1.0 } else { -1.0 };
                if i == 0 || i == n {
                    0.5 * s
                } else {
                    s
                }
            })
            .collect();
        let values = nodes.iter().map(|&x| f(x)).collect();
        Self {
            nodes,
            values,
            weights,
        }
    }

    fn eval(&self, x: f64) -> f64 {
        let mut num = 0.0;
        let mut den = 0.0;
        for i in 0..self.nodes.len() {
            let d = x - self.nodes[i];
            if d == 0.0 {
                return self.values[i];
            }
            let w = self.weights[i] / d;
            num += w * self.values[i];
            den += w;
        }
        num / den
    }
}

/// Normalized coefficient computed numerically (same sign convention as [`super::cbar`]).
pub fn cbar_numeric(weights: &[u8], indices: &[u16]) -> Result<f64, CoeffError> {
    check_weights(weights)?;
    let k = weights.len();
    let tol = 1e-15;
    let mut prev: Option<Interpolant> = None;
    let mut degree = 0usize;
    for m in 0..k - 1 {
        let (j, l) = (indices[m] as usize, weights[m] as i32);
        degree += j + l as usize + 1;
        let level = {
            let prev = prev.as_ref();
            let integrand = move |x: f64| {
                let q = prev.map_or(1.0, |p| p.eval(x));
                legendre_value(j, x) * (1.0 + x).powi(l) * q
            };
            Interpolant::sample(degree, |y| integrate(&integrand, -1.0, y, tol))
        };
        prev = Some(level);
    }
    let (j, l) = (indices[k - 1] as usize, weights[k - 1] as i32);
    let prev = prev.as_ref();
    let integrand = move |x: f64| {
        let q = prev.map_or(1.0, |p| p.eval(x));
        legendre_value(j, x) * (1.0 + x).powi(l) * q
    };
    let v = integrate(&integrand, -1.0, 1.0, tol);
    let total: u32 = weights.iter().map(|&w| w as u32).sum();
    Ok(if total % 2 == 1 { -v } else { v })
}
