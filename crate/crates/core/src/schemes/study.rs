use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;

use crate::coeffs::quadrature::gauss_legendre;
use crate::coeffs::CoeffStore;
use crate::integrals::{path_seed, GaussianDraws, PathRng};
use crate::operators::SdeModel;

use super::{steps_for, Calculus, Order, SchemeConfig, SchemeError, Stepper};

/// Highest coarse Legendre degree rebuilt from the fine path. Degrees above
/// it are drawn afresh, independently of the fine grid.
pub const COUPLED_DEGREES: usize = 192;

/// Legendre degrees drawn per fine step (at least) and used for coupling.
pub const FINE_DEGREES: usize = 24;

/// Closed-form solution `x_T` from `(x0, T, W_T)`.
pub type ExactSolution = Arc<dyn Fn(&[f64], f64, &[f64]) -> Vec<f64> + Send + Sync>;

/// What the coarse schemes are compared against.
#[derive(Clone)]
pub enum Reference {
    /// The Itô scheme of this order run on the fine grid.
    Fine(Order),
    /// A known solution driven by the fine-grid Wiener path.
    Exact(ExactSolution),
}

impl std::fmt::Debug for Reference {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Reference::Fine(o) => write!(f, "Fine({o})"),
            Reference::Exact(_) => f.write_str("Exact"),
        }
    }
}

#[derive(Clone, Debug)]
pub struct StudySpec {
    pub schemes: Vec<(Order, Calculus)>,
    pub deltas: Vec<f64>,
    pub ref_delta: f64,
    pub horizon: f64,
    pub paths: usize,
    /// Accuracy constant for every scheme, the fine reference included.
    pub c: f64,
    pub seed: u64,
    pub reference: Reference,
}

/// Strong error `E|x_T − y_T|` of one scheme at one step size.
#[derive(Clone, Debug, Serialize)]
pub struct StudyRow {
    pub order: Order,
    pub calculus: Calculus,
    pub delta: f64,
    pub mean_error: f64,
    /// Standard error of `mean_error`.
    pub std_error: f64,
    pub diverged: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct SchemeSlope {
    pub order: Order,
    pub calculus: Calculus,
    /// Least-squares slope of `ln E` against `ln Δ`; `None` with fewer than two step sizes.
    pub slope: Option<f64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct ErrorStudy {
    pub rows: Vec<StudyRow>,
    pub slopes: Vec<SchemeSlope>,
    pub reference_diverged: usize,
    /// `path_errors[row][path]`, NaN where either side diverged.
    #[serde(skip)]
    pub path_errors: Vec<Vec<f64>>,
}

impl ErrorStudy {
    pub fn row(&self, order: Order, calculus: Calculus, delta: f64) -> Option<usize> {
        self.rows.iter().position(|r| {
            r.order == order && r.calculus == calculus && (r.delta - delta).abs() <= 1e-12 * delta
        })
    }
}

/// How coarse Legendre coefficients are read off a fine path.
struct Projection {
    /// `a[j][s][l]`: the coarse basis function of degree `j` on sub-step `s`
    /// in the fine basis, for `l ≤ min(j, FINE_DEGREES)`.
    a: Vec<Vec<Vec<f64>>>,
    /// Standard deviation of the part of coarse `ζ_j` the fine degrees miss.
    top_up: Vec<f64>,
    r: usize,
}

/// `√(2j+1)·P_j(2u−1)` for `j = 0..=deg`.
fn shifted_legendre(deg: usize, u: f64) -> Vec<f64> {
    let x = 2.0 * u - 1.0;
    let mut p = Vec::with_capacity(deg + 1);
    p.push(1.0);
    if deg > 0 {
        p.push(x);
    }
    for n in 1..deg {
        p.push(((2 * n + 1) as f64 * x * p[n] - n as f64 * p[n - 1]) / (n + 1) as f64);
    }
    p.iter()
        .enumerate()
        .map(|(j, v)| ((2 * j + 1) as f64).sqrt() * v)
        .collect()
}

/// Coarse `ζ_j = R^{-1/2} Σ_s Σ_l a[j][s][l] ζ_{s,l} + top_up[j]·ξ_j` with
/// fresh `ξ_j`; exact in law, and exactly coupled for `j ≤ FINE_DEGREES`.
fn projection(r: usize, degrees: usize) -> Projection {
    let lf = FINE_DEGREES;
    let rule = gauss_legendre((degrees + lf) / 2 + 1);
    let fine: Vec<Vec<f64>> = rule
        .iter()
        .map(|&(x, _)| shifted_legendre(lf, 0.5 * (x + 1.0)))
        .collect();
    let mut a: Vec<Vec<Vec<f64>>> = (0..=degrees)
        .map(|j| vec![vec![0.0; j.min(lf) + 1]; r])
        .collect();
    for s in 0..r {
        for (&(x, w), fl) in rule.iter().zip(&fine) {
            let coarse = shifted_legendre(degrees, (s as f64 + 0.5 * (x + 1.0)) / r as f64);
            for (aj, cj) in a.iter_mut().zip(&coarse) {
                for (v, f) in aj[s].iter_mut().zip(fl) {
                    *v += 0.5 * w * cj * f;
                }
            }
        }
    }
    let top_up = a
        .iter()
        .map(|aj| {
            let missing = 1.0 - aj.iter().flatten().map(|v| v * v).sum::<f64>() / r as f64;
            // Rounding residue on fully covered degrees.
            if missing < 1e-12 {
                0.0
            } else {
                missing.sqrt()
            }
        })
        .collect();
    Projection { a, top_up, r }
}

/// Ratio `a/b` when it is a positive integer up to rounding.
fn ratio(a: f64, b: f64) -> Option<usize> {
    let r = (a / b).round();
    (r >= 1.0 && (r * b - a).abs() <= 1e-9 * a).then_some(r as usize)
}

struct Coarse {
    scheme: usize,
    delta_index: usize,
    stepper: Stepper,
}

/// Coupled strong-error study: every path draws one fine Wiener path
/// (Legendre coefficients per fine step), runs the reference on it, and
/// feeds each coarse scheme the same path seen on its own grid.
pub fn run_study(
    model: &SdeModel,
    spec: &StudySpec,
    store: &CoeffStore,
) -> Result<ErrorStudy, SchemeError> {
    let fine_steps = steps_for(spec.horizon, spec.ref_delta)?;
    let mut ratios = Vec::with_capacity(spec.deltas.len());
    for &d in &spec.deltas {
        steps_for(spec.horizon, d)?;
        ratios.push(ratio(d, spec.ref_delta).ok_or_else(|| {
            SchemeError::Config(format!(
                "reference step {} does not divide Δ = {d}",
                spec.ref_delta
            ))
        })?);
    }
    for &(order, calculus) in &spec.schemes {
        SchemeConfig {
            c: spec.c,
            ..SchemeConfig::new(order, calculus, spec.ref_delta, spec.horizon)
        }
        .validate()?;
    }
    let reference = match &spec.reference {
        Reference::Fine(order) => Some(Stepper::with_accuracy(
            model,
            *order,
            Calculus::Ito,
            spec.ref_delta,
            spec.c,
            store,
        )?),
        Reference::Exact(_) => None,
    };
    let fine_j = reference
        .as_ref()
        .map_or(0, Stepper::jmax)
        .max(FINE_DEGREES);
    let mut coarse = Vec::new();
    for (si, &(order, calculus)) in spec.schemes.iter().enumerate() {
        for (di, &d) in spec.deltas.iter().enumerate() {
            coarse.push(Coarse {
                scheme: si,
                delta_index: di,
                stepper: Stepper::with_accuracy(model, order, calculus, d, spec.c, store)?,
            });
        }
    }
    let m = model.m;
    // Coupled degrees each step size needs across its schemes.
    let mut needed = vec![0; spec.deltas.len()];
    for c in &coarse {
        needed[c.delta_index] = needed[c.delta_index].max(c.stepper.jmax().min(COUPLED_DEGREES));
    }
    let tables: Vec<Projection> = ratios
        .iter()
        .zip(&needed)
        .map(|(&r, &deg)| projection(r, deg))
        .collect();

    let per_path: Vec<Result<(bool, Vec<f64>), SchemeError>> = (0..spec.paths)
        .into_par_iter()
        .map(|path| {
            let mut rng = PathRng::for_path(spec.seed, path as u64);
            let mut fine = vec![GaussianDraws::zeros(m, fine_j); fine_steps];
            for d in &mut fine {
                d.refill(&mut rng);
            }
            let target = match (&reference, &spec.reference) {
                (Some(stepper), _) => run_fine(stepper, &model.x0, &fine, spec.ref_delta),
                (None, Reference::Exact(f)) => {
                    let mut w = vec![0.0; m];
                    for d in &fine {
                        for (i, wi) in w.iter_mut().enumerate() {
                            *wi += spec.ref_delta.sqrt() * d.z(i, 0);
                        }
                    }
                    Ok(f(&model.x0, spec.horizon, &w))
                }
                (None, Reference::Fine(_)) => unreachable!("fine reference has a stepper"),
            };
            let target = match target {
                Ok(t) => t,
                Err(SchemeError::Divergence { .. }) => {
                    return Ok((true, vec![f64::NAN; coarse.len()]))
                }
                Err(e) => return Err(e),
            };
            let fresh_seed = path_seed(spec.seed ^ 0x5eed_c0a2_5e00_0000, path as u64);
            let projected: Vec<Vec<f64>> = tables
                .iter()
                .enumerate()
                .map(|(di, table)| {
                    let mut rng =
                        PathRng::new(path_seed(fresh_seed, (di as u64) << 32 | 0xffff_ffff));
                    project_path(&fine, table, &mut rng)
                })
                .collect();
            let mut errors = Vec::with_capacity(coarse.len());
            for c in &coarse {
                let y = run_coarse(
                    &c.stepper,
                    &model.x0,
                    &projected[c.delta_index],
                    needed[c.delta_index],
                    path_seed(fresh_seed, c.delta_index as u64),
                );
                errors.push(match y {
                    Ok(y) => y
                        .iter()
                        .zip(&target)
                        .map(|(a, b)| (a - b) * (a - b))
                        .sum::<f64>()
                        .sqrt(),
                    Err(SchemeError::Divergence { .. }) => f64::NAN,
                    Err(e) => return Err(e),
                });
            }
            Ok((false, errors))
        })
        .collect();

    let mut reference_diverged = 0;
    let mut path_errors = vec![Vec::with_capacity(spec.paths); coarse.len()];
    for r in per_path {
        let (ref_div, errs) = r?;
        reference_diverged += ref_div as usize;
        for (row, e) in path_errors.iter_mut().zip(errs) {
            row.push(e);
        }
    }
    let rows: Vec<StudyRow> = coarse
        .iter()
        .zip(&path_errors)
        .map(|(c, errs)| {
            let ok: Vec<f64> = errs.iter().copied().filter(|e| e.is_finite()).collect();
            let n = ok.len() as f64;
            let mean = ok.iter().sum::<f64>() / n;
            let var = ok.iter().map(|e| (e - mean) * (e - mean)).sum::<f64>() / (n - 1.0).max(1.0);
            let (order, calculus) = spec.schemes[c.scheme];
            StudyRow {
                order,
                calculus,
                delta: spec.deltas[c.delta_index],
                mean_error: mean,
                std_error: (var / n).sqrt(),
                diverged: errs.len() - ok.len(),
            }
        })
        .collect();
    let slopes = spec
        .schemes
        .iter()
        .enumerate()
        .map(|(si, &(order, calculus))| {
            let pts: Vec<(f64, f64)> = coarse
                .iter()
                .zip(&rows)
                .filter(|(c, r)| c.scheme == si && r.mean_error > 0.0 && r.mean_error.is_finite())
                .map(|(_, r)| (r.delta.ln(), r.mean_error.ln()))
                .collect();
            SchemeSlope {
                order,
                calculus,
                slope: fit_slope(&pts),
            }
        })
        .collect();
    Ok(ErrorStudy {
        rows,
        slopes,
        reference_diverged,
        path_errors,
    })
}

/// Least-squares slope through `(x, y)` points.
pub fn fit_slope(pts: &[(f64, f64)]) -> Option<f64> {
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

fn run_fine(
    stepper: &Stepper,
    x0: &[f64],
    fine: &[GaussianDraws],
    delta: f64,
) -> Result<Vec<f64>, SchemeError> {
    let mut ws = stepper.workspace();
    let mut y = x0.to_vec();
    let j = stepper.jmax();
    for (p, d) in fine.iter().enumerate() {
        for i in 0..d.m() {
            ws.draws.row_mut(i).copy_from_slice(&d.row(i)[..=j]);
        }
        stepper.advance(&mut y, p as f64 * delta, &mut ws)?;
    }
    Ok(y)
}

/// Coarse `ζ_0..ζ_deg` of every coarse step, laid out `[step][component][degree]`.
fn project_path(fine: &[GaussianDraws], proj: &Projection, rng: &mut PathRng) -> Vec<f64> {
    let m = fine[0].m();
    let deg = proj.a.len() - 1;
    let scale = 1.0 / (proj.r as f64).sqrt();
    let mut out = Vec::with_capacity(fine.len() / proj.r * m * (deg + 1));
    let mut xi = vec![0.0; deg + 1];
    for sub in fine.chunks_exact(proj.r) {
        for i in 0..m {
            rng.fill_normals(&mut xi);
            for ((rows, top), x) in proj.a.iter().zip(&proj.top_up).zip(&xi) {
                let mut acc = 0.0;
                for (a, d) in rows.iter().zip(sub) {
                    acc += a.iter().zip(d.row(i)).map(|(a, z)| a * z).sum::<f64>();
                }
                out.push(scale * acc + top * x);
            }
        }
    }
    out
}

fn run_coarse(
    stepper: &Stepper,
    x0: &[f64],
    projected: &[f64],
    deg: usize,
    fresh_seed: u64,
) -> Result<Vec<f64>, SchemeError> {
    let mut ws = stepper.workspace();
    let mut y = x0.to_vec();
    let jmax = stepper.jmax();
    let coupled = jmax.min(deg);
    let m = ws.draws.m();
    let mut extra = vec![0.0; m * (jmax - coupled)];
    for (p, block) in projected.chunks_exact(m * (deg + 1)).enumerate() {
        for i in 0..m {
            ws.draws.row_mut(i)[..=coupled]
                .copy_from_slice(&block[i * (deg + 1)..=i * (deg + 1) + coupled]);
        }
        if !extra.is_empty() {
            // Degree-major so that schemes with different jmax share a prefix.
            PathRng::new(path_seed(fresh_seed, p as u64)).fill_normals(&mut extra);
            for (k, v) in extra.iter().enumerate() {
                let (j, i) = (coupled + 1 + k / m, k % m);
                ws.draws.row_mut(i)[j] = *v;
            }
        }
        stepper.advance(&mut y, p as f64 * stepper.delta(), &mut ws)?;
    }
    Ok(y)
}

/// Strong errors of one scheme over several step sizes, with fitted slope.
pub fn strong_error_study(
    model: &SdeModel,
    base: &SchemeConfig,
    deltas: &[f64],
    ref_delta: f64,
    reference: Reference,
    store: &CoeffStore,
) -> Result<ErrorStudy, SchemeError> {
    run_study(
        model,
        &StudySpec {
            schemes: vec![(base.order, base.calculus)],
            deltas: deltas.to_vec(),
            ref_delta,
            horizon: base.horizon,
            paths: base.paths,
            c: base.c,
            seed: base.seed,
            reference,
        },
        store,
    )
}

/// Exact solution of `dx = μx dt + σx dw` (scalar).
pub fn gbm_solution(mu: f64, sigma: f64) -> ExactSolution {
    Arc::new(move |x0, t, w| vec![x0[0] * ((mu - 0.5 * sigma * sigma) * t + sigma * w[0]).exp()])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::integrals::draw;

    #[test]
    fn projection_preserves_norms_and_increments() {
        let r = 8;
        let p = projection(r, 40);
        // Coarse ζ_0 is the normalized sum of fine ζ_0.
        for s in 0..r {
            assert!((p.a[0][s][0] - 1.0).abs() < 1e-14);
        }
        for (j, (rows, top)) in p.a.iter().zip(&p.top_up).enumerate() {
            let norm: f64 = rows.iter().flatten().map(|x| x * x).sum::<f64>() / r as f64;
            assert!((norm + top * top - 1.0).abs() < 1e-12, "degree {j}");
            if j <= FINE_DEGREES {
                assert_eq!(*top, 0.0, "degree {j}");
            }
        }
        // Degrees beyond the fine resolution keep only part of their variance.
        let coarse = projection(2, 60);
        assert!(coarse.top_up[60] > 0.1 && coarse.top_up[60] < 1.0);
        // Orthogonality between coarse degrees.
        let dot: f64 = (0..r)
            .map(|s| {
                p.a[1][s]
                    .iter()
                    .zip(&p.a[3][s])
                    .map(|(x, y)| x * y)
                    .sum::<f64>()
            })
            .sum();
        assert!(dot.abs() < 1e-12);
    }

    #[test]
    fn coarse_draws_are_standard_normal() {
        let (r, n) = (4, 20000);
        let p = projection(r, 30);
        let fine_j = FINE_DEGREES;
        let mut rng = PathRng::new(3);
        let mut top = PathRng::new(4);
        let (mut s1, mut s2, mut s12) = (0.0, 0.0, 0.0);
        for _ in 0..n {
            let fine: Vec<GaussianDraws> = (0..r).map(|_| draw(&mut rng, 1, fine_j)).collect();
            let coarse = project_path(&fine, &p, &mut top);
            s1 += coarse[1] * coarse[1];
            s2 += coarse[30] * coarse[30];
            s12 += coarse[1] * coarse[30];
        }
        let n = n as f64;
        assert!(
            (s1 / n - 1.0).abs() < 0.05 && (s2 / n - 1.0).abs() < 0.05 && (s12 / n).abs() < 0.05
        );
    }

    #[test]
    fn deterministic_model_has_positive_slope() {
        let model = SdeModel::parse(&["-x1"], &[vec!["0"]], vec![1.0]).unwrap();
        let store = CoeffStore::in_memory();
        let base = SchemeConfig {
            paths: 4,
            ..SchemeConfig::new(Order::Half, Calculus::Ito, 0.1, 1.0)
        };
        let exact: ExactSolution = Arc::new(|x0, t, _| vec![x0[0] * (-t).exp()]);
        let s = strong_error_study(
            &model,
            &base,
            &[0.1, 0.05, 0.025],
            0.025 / 8.0,
            Reference::Exact(exact),
            &store,
        )
        .unwrap();
        assert!(s.slopes[0].slope.unwrap() >= 0.95);
    }

    #[test]
    fn grids_must_nest() {
        let model = SdeModel::parse(&["-x1"], &[vec!["1"]], vec![1.0]).unwrap();
        let store = CoeffStore::in_memory();
        let base = SchemeConfig::new(Order::Half, Calculus::Ito, 0.1, 1.0);
        let e = strong_error_study(
            &model,
            &base,
            &[0.1],
            0.03,
            Reference::Fine(Order::One),
            &store,
        );
        assert!(matches!(e, Err(SchemeError::Config(_))));
    }

    #[test]
    fn finest_grid_reproduces_reference_scheme() {
        // A coarse scheme on the reference grid sees exactly the fine draws.
        let model = SdeModel::parse(&["0.2*x1"], &[vec!["0.5*x1"]], vec![1.0]).unwrap();
        let store = CoeffStore::in_memory();
        let base = SchemeConfig {
            paths: 3,
            c: 1.0,
            ..SchemeConfig::new(Order::One, Calculus::Ito, 0.125, 1.0)
        };
        let s = strong_error_study(
            &model,
            &base,
            &[0.125],
            0.125,
            Reference::Fine(Order::One),
            &store,
        )
        .unwrap();
        assert!(
            s.path_errors[0].iter().all(|&e| e < 1e-14),
            "{:?}",
            s.path_errors
        );
    }
}
