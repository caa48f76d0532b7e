//! Seedable Gaussian streams.
//!
//! Every path owns a xoshiro256++ generator seeded from `mix(seed, path)`,
//! where `mix` is the SplitMix64 finalizer. Uniforms are taken from the top
//! 53 bits shifted to the open interval `(0, 1)`, and normals come in pairs
//! from the Box–Muller transform.

use rand_core::{RngCore, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of the stream for one path.
pub fn path_seed(seed: u64, path: u64) -> u64 {
    splitmix(seed ^ splitmix(path))
}

#[derive(Clone, Debug)]
pub struct PathRng {
    inner: Xoshiro256PlusPlus,
}

impl PathRng {
    pub fn new(seed: u64) -> Self {
        Self {
            inner: Xoshiro256PlusPlus::seed_from_u64(seed),
        }
    }

    pub fn for_path(seed: u64, path: u64) -> Self {
        Self::new(path_seed(seed, path))
    }

    /// Uniform on the open interval `(0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        ((self.inner.next_u64() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
    }

    /// Two independent standard normals from two uniforms.
    pub fn normal_pair(&mut self) -> (f64, f64) {
        let u1 = self.uniform();
        let u2 = self.uniform();
        let r = (-2.0 * u1.ln()).sqrt();
        let (s, c) = (std::f64::consts::TAU * u2).sin_cos();
        (r * c, r * s)
    }

    /// Fills `out` with standard normals, pairwise. An odd final slot uses
    /// the first normal of a fresh pair and discards the second.
    pub fn fill_normals(&mut self, out: &mut [f64]) {
        let mut chunks = out.chunks_exact_mut(2);
        for pair in &mut chunks {
            let (a, b) = self.normal_pair();
            pair[0] = a;
            pair[1] = b;
        }
        if let [last] = chunks.into_remainder() {
            *last = self.normal_pair().0;
        }
    }

    pub fn normal(&mut self) -> f64 {
        self.normal_pair().0
    }
}

/// Standard normals `ζ_j^(i)` for one step, `i < m`, `j ≤ jmax`.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussianDraws {
    m: usize,
    jmax: usize,
    values: Vec<f64>,
}

impl GaussianDraws {
    pub fn zeros(m: usize, jmax: usize) -> Self {
        Self {
            m,
            jmax,
            values: vec![0.0; m * (jmax + 1)],
        }
    }

    /// Wraps row-major values (`m` rows of `jmax + 1`).
    pub fn from_values(m: usize, jmax: usize, values: Vec<f64>) -> Self {
        assert_eq!(
            values.len(),
            m * (jmax + 1),
            "draw matrix has the wrong size"
        );
        Self { m, jmax, values }
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn jmax(&self) -> usize {
        self.jmax
    }

    /// `ζ_j` of noise component `i` (both 0-based).
    #[inline]
    pub fn z(&self, i: usize, j: usize) -> f64 {
        self.values[i * (self.jmax + 1) + j]
    }

    /// All `ζ_0..ζ_jmax` of noise component `i`.
    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        let w = self.jmax + 1;
        &self.values[i * w..(i + 1) * w]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        let w = self.jmax + 1;
        &mut self.values[i * w..(i + 1) * w]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Refills from `rng`, consuming `2·ceil(m(jmax+1)/2)` uniforms.
    pub fn refill(&mut self, rng: &mut PathRng) {
        rng.fill_normals(&mut self.values);
    }
}

/// A fresh draw matrix for one step.
pub fn draw(rng: &mut PathRng, m: usize, jmax: usize) -> GaussianDraws {
    let mut d = GaussianDraws::zeros(m, jmax);
    d.refill(rng);
    d
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reproducible_and_path_dependent() {
        let a = draw(&mut PathRng::for_path(7, 0), 2, 3);
        let b = draw(&mut PathRng::for_path(7, 0), 2, 3);
        let c = draw(&mut PathRng::for_path(7, 1), 2, 3);
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_eq!(a.row(1)[2], a.z(1, 2));
    }

    #[test]
    fn odd_fill_consumes_a_whole_pair() {
        let mut r1 = PathRng::new(3);
        let mut r2 = PathRng::new(3);
        let mut odd = [0.0; 3];
        r1.fill_normals(&mut odd);
        let mut even = [0.0; 4];
        r2.fill_normals(&mut even);
        assert_eq!(odd[..], even[..3]);
        assert_eq!(r1.uniform(), r2.uniform());
    }

    #[test]
    fn uniforms_stay_inside_the_open_interval() {
        let mut r = PathRng::new(11);
        for _ in 0..10_000 {
            let u = r.uniform();
            assert!(u > 0.0 && u < 1.0);
        }
    }

    #[test]
    fn moments_of_the_normals() {
        let mut r = PathRng::new(2024);
        let n = 1_000_000;
        let mut buf = vec![0.0; n];
        r.fill_normals(&mut buf);
        let mean = buf.iter().sum::<f64>() / n as f64;
        let var = buf.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n as f64;
        let cross = buf.chunks_exact(2).map(|p| p[0] * p[1]).sum::<f64>() / (n / 2) as f64;
        let se = (1.0 / n as f64).sqrt();
        assert!(mean.abs() < 3.0 * se, "mean {mean}");
        assert!(
            (var - 1.0).abs() < 3.0 * (2.0 / n as f64).sqrt(),
            "var {var}"
        );
        assert!(cross.abs() < 3.0 * (2.0 / n as f64).sqrt(), "cross {cross}");
    }
}
