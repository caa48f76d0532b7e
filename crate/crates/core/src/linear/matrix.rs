//! Dense matrix routines behind the exact linear step: the exponential, the
//! step-held input map, the one-step noise covariance and its spectral factor.

use nalgebra::DMatrix;

use super::LinearError;

const PADE3: [f64; 4] = [120.0, 60.0, 12.0, 1.0];
const PADE5: [f64; 6] = [30240.0, 15120.0, 3360.0, 420.0, 30.0, 1.0];
const PADE7: [f64; 8] = [
    17297280.0, 8648640.0, 1995840.0, 277200.0, 25200.0, 1512.0, 56.0, 1.0,
];
const PADE9: [f64; 10] = [
    17643225600.0,
    8821612800.0,
    2075673600.0,
    302702400.0,
    30270240.0,
    2162160.0,
    110880.0,
    3960.0,
    90.0,
    1.0,
];
const PADE13: [f64; 14] = [
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
];
/// 1-norm bounds up to which each Padé degree is accurate to unit roundoff.
const THETA: [(usize, f64); 4] = [
    (3, 1.495585217958292e-2),
    (5, 2.539398330063230e-1),
    (7, 9.504178996162932e-1),
    (9, 2.097847961257068),
];
const THETA13: f64 = 5.371920351148152;

/// Largest absolute column sum.
pub fn norm1(a: &DMatrix<f64>) -> f64 {
    a.column_iter()
        .map(|c| c.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

fn solve_pade(u: DMatrix<f64>, v: DMatrix<f64>) -> Result<DMatrix<f64>, LinearError> {
    let p = &v + &u;
    let q = v - u;
    q.lu().solve(&p).ok_or(LinearError::Overflow)
}

fn low_degree(a: &DMatrix<f64>, b: &[f64]) -> Result<DMatrix<f64>, LinearError> {
    let n = a.nrows();
    let a2 = a * a;
    let mut power = DMatrix::identity(n, n);
    let mut odd = DMatrix::zeros(n, n);
    let mut even = DMatrix::zeros(n, n);
    for k in (0..b.len()).step_by(2) {
        even += &power * b[k];
        odd += &power * b[k + 1];
        power = &power * &a2;
    }
    solve_pade(a * odd, even)
}

/// `e^{AΔ}` by scaling and squaring with a diagonal Padé approximant.
pub fn mat_exp(a: &DMatrix<f64>, delta: f64) -> Result<DMatrix<f64>, LinearError> {
    if !a.is_square() {
        return Err(LinearError::Dimension("exponent must be square".into()));
    }
    let a = a * delta;
    let norm = norm1(&a);
    if !norm.is_finite() {
        return Err(LinearError::Overflow);
    }
    let n = a.nrows();
    for (degree, theta) in THETA {
        if norm <= theta {
            let b = match degree {
                3 => &PADE3[..],
                5 => &PADE5[..],
                7 => &PADE7[..],
                _ => &PADE9[..],
            };
            return low_degree(&a, b);
        }
    }
    let s = (norm / THETA13).log2().ceil().max(0.0) as i32;
    if s > 1000 {
        return Err(LinearError::Overflow);
    }
    let a = a * 2f64.powi(-s);
    let b = &PADE13;
    let id = DMatrix::<f64>::identity(n, n);
    let a2 = &a * &a;
    let a4 = &a2 * &a2;
    let a6 = &a4 * &a2;
    let inner_u = &a6 * (&a6 * b[13] + &a4 * b[11] + &a2 * b[9])
        + &a6 * b[7]
        + &a4 * b[5]
        + &a2 * b[3]
        + &id * b[1];
    let u = &a * inner_u;
    let v = &a6 * (&a6 * b[12] + &a4 * b[10] + &a2 * b[8])
        + &a6 * b[6]
        + &a4 * b[4]
        + &a2 * b[2]
        + &id * b[0];
    let mut e = solve_pade(u, v)?;
    for _ in 0..s {
        e = &e * &e;
    }
    if e.iter().all(|v| v.is_finite()) {
        Ok(e)
    } else {
        Err(LinearError::Overflow)
    }
}

/// `Δ(I + AΔ/2! + (AΔ)²/3! + …)B`, the exact integral of `e^{As}B` over `[0, Δ]`.
///
/// Summed directly while `‖AΔ‖₁ ≤ 1`; beyond that the same series is evaluated
/// as the corner block of the exponential of `[[A, B], [0, 0]]Δ`.
pub fn input_series(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    delta: f64,
) -> Result<DMatrix<f64>, LinearError> {
    let (n, k) = (a.nrows(), b.ncols());
    let ad = a * delta;
    if norm1(&ad) <= 1.0 {
        let mut term = b * delta;
        let mut sum = term.clone();
        for j in 2..200 {
            term = &ad * term / j as f64;
            sum += &term;
            if norm1(&term) <= f64::EPSILON * norm1(&sum) {
                break;
            }
        }
        return Ok(sum);
    }
    let mut block = DMatrix::zeros(n + k, n + k);
    block.view_mut((0, 0), (n, n)).copy_from(a);
    block.view_mut((0, n), (n, k)).copy_from(b);
    let e = mat_exp(&block, delta)?;
    Ok(e.view((0, n), (n, k)).into_owned())
}

/// The input map `A⁻¹(e^{AΔ} − I)B`.
///
/// The closed form is used when `A` is well conditioned and `AΔ` is not so
/// small that `e^{AΔ} − I` cancels; otherwise [`input_series`].
pub fn input_matrix(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    delta: f64,
) -> Result<DMatrix<f64>, LinearError> {
    if a.nrows() != b.nrows() {
        return Err(LinearError::Dimension(
            "input matrix must have one row per state".into(),
        ));
    }
    let an = norm1(a);
    if an * delta >= 0.5 {
        if let Some(inv) = a.clone().try_inverse() {
            if an * norm1(&inv) <= 1e8 {
                let n = a.nrows();
                let phi = mat_exp(a, delta)?;
                return Ok(inv * (phi - DMatrix::identity(n, n)) * b);
            }
        }
    }
    input_series(a, b, delta)
}

/// `D(Δ) = ∫₀^Δ e^{As} FFᵀ e^{Aᵀs} ds`, the solution at `Δ` of
/// `D' = AD + DAᵀ + FFᵀ`, `D(0) = 0`.
///
/// Evaluated from the exponential of the block matrix `[[-A, FFᵀ], [0, Aᵀ]]Δ`.
pub fn covariance_df(
    a: &DMatrix<f64>,
    f: &DMatrix<f64>,
    delta: f64,
) -> Result<DMatrix<f64>, LinearError> {
    let n = a.nrows();
    if f.nrows() != n || !a.is_square() {
        return Err(LinearError::Dimension(
            "noise matrix must have one row per state".into(),
        ));
    }
    let q = f * f.transpose();
    let mut block = DMatrix::zeros(2 * n, 2 * n);
    block.view_mut((0, 0), (n, n)).copy_from(&(-a));
    block.view_mut((0, n), (n, n)).copy_from(&q);
    block.view_mut((n, n), (n, n)).copy_from(&a.transpose());
    let e = mat_exp(&block, delta)?;
    let d = e.view((n, n), (n, n)).transpose() * e.view((0, n), (n, n));
    Ok((&d + d.transpose()) * 0.5)
}

/// Largest entry of `AD + DAᵀ + FFᵀ − e^{AΔ}FFᵀe^{AᵀΔ}`, the defect of `D`
/// in the covariance equation at `Δ`, relative to `‖FFᵀ‖`.
pub fn covariance_residual(
    a: &DMatrix<f64>,
    f: &DMatrix<f64>,
    delta: f64,
    d: &DMatrix<f64>,
) -> Result<f64, LinearError> {
    let q = f * f.transpose();
    let phi = mat_exp(a, delta)?;
    let r = a * d + d * a.transpose() + &q - &phi * &q * phi.transpose();
    let scale = q.amax();
    Ok(if scale == 0.0 { r.amax() } else { r.amax() / scale })
}

/// Eigenvalues and orthonormal eigenvectors (columns) of a symmetric matrix
/// by cyclic Jacobi rotations. Sweeps stop once the off-diagonal Frobenius
/// norm is at most `1e-13` of the full norm.
pub fn symmetric_eigen(d: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let n = d.nrows();
    let mut a = d.clone();
    let mut v = DMatrix::<f64>::identity(n, n);
    let total = a.norm();
    let off = |a: &DMatrix<f64>| {
        let mut s = 0.0;
        for j in 0..n {
            for i in 0..n {
                if i != j {
                    s += a[(i, j)] * a[(i, j)];
                }
            }
        }
        s.sqrt()
    };
    for _ in 0..100 {
        if off(&a) <= 1e-13 * total {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (akp, akq) = (a[(k, p)], a[(k, q)]);
                    a[(k, p)] = c * akp - s * akq;
                    a[(k, q)] = s * akp + c * akq;
                }
                for k in 0..n {
                    let (apk, aqk) = (a[(p, k)], a[(q, k)]);
                    a[(p, k)] = c * apk - s * aqk;
                    a[(q, k)] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let (vkp, vkq) = (v[(k, p)], v[(k, q)]);
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
    }
    ((0..n).map(|i| a[(i, i)]).collect(), v)
}

/// Spectral factor `M = S·diag(√λ)` with `MMᵀ = D`.
///
/// Asymmetry above `1e-10·max(1, max|D|)` is rejected. Eigenvalues down to
/// `-1e-12·max(1, max|λ|)` are clamped to zero; anything more negative is an
/// error.
pub fn noise_factor(d: &DMatrix<f64>) -> Result<DMatrix<f64>, LinearError> {
    if !d.is_square() {
        return Err(LinearError::Dimension("covariance must be square".into()));
    }
    let scale = d.amax().max(1.0);
    let asym = (d - d.transpose()).amax();
    if asym > 1e-10 * scale {
        return Err(LinearError::Asymmetric(asym));
    }
    let sym = (d + d.transpose()) * 0.5;
    let (values, mut vectors) = symmetric_eigen(&sym);
    let floor = -1e-12 * values.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    for (j, &lambda) in values.iter().enumerate() {
        if lambda < floor {
            return Err(LinearError::Indefinite(lambda));
        }
        let root = lambda.max(0.0).sqrt();
        vectors.column_mut(j).scale_mut(root);
    }
    Ok(vectors)
}
