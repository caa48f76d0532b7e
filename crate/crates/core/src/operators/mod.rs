//! Differential operators of the stochastic Taylor expansions, applied
//! symbolically to vector fields, and the compiled field sets of the schemes.
//!
//! For the model `dx = a dt + B dw`:
//!
//! ```text
//! L f      = ∂f/∂t + Σ_i a_i ∂f/∂x_i + ½ Σ_j Σ_{l,i} B_lj B_ij ∂²f/∂x_l∂x_i
//! G0^(i) f = Σ_j B_ji ∂f/∂x_j
//! abar     = a − ½ Σ_j G0^(j) B_j
//! Lbar f   = ∂f/∂t + Σ_i abar_i ∂f/∂x_i
//! ```

mod fields;

use crate::expr::{build, differentiate, parse, simplify, Expr, ExprError, SymbolTable};

pub use fields::{build_scheme_fields, FieldTerm, SchemeFields};

#[derive(Debug, thiserror::Error)]
pub enum ModelError {
    #[error("{what}: expected {expected}, found {found}")]
    Dimension {
        what: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("{what}: {source}")]
    Expression {
        what: String,
        #[source]
        source: ExprError,
    },
    #[error("{0} refers to a symbol outside x1..xn, t")]
    UndeclaredSymbol(String),
    #[error("initial state component {0} is not finite")]
    NonFiniteState(usize),
    #[error("noise index {index} out of range 1..={m}")]
    NoiseIndex { index: usize, m: usize },
    #[error("{0}")]
    Unsupported(String),
}

/// A system of Itô SDEs `dx = a(x,t) dt + B(x,t) dw` with `x ∈ R^n`, `w ∈ R^m`.
#[derive(Clone, Debug)]
pub struct SdeModel {
    pub symbols: SymbolTable,
    pub n: usize,
    pub m: usize,
    pub drift: Vec<Expr>,
    /// Row-major `n × m`.
    pub diffusion: Vec<Vec<Expr>>,
    pub x0: Vec<f64>,
    /// `½ Σ_j B_lj B_ij`, row-major `n × n`.
    half_bbt: Vec<Vec<Expr>>,
}

impl SdeModel {
    pub fn new(
        drift: Vec<Expr>,
        diffusion: Vec<Vec<Expr>>,
        x0: Vec<f64>,
    ) -> Result<Self, ModelError> {
        let n = drift.len();
        if n == 0 {
            return Err(ModelError::Dimension {
                what: "drift",
                expected: 1,
                found: 0,
            });
        }
        let symbols = SymbolTable::new(n);
        if diffusion.len() != n {
            return Err(ModelError::Dimension {
                what: "diffusion rows",
                expected: n,
                found: diffusion.len(),
            });
        }
        let m = diffusion[0].len();
        if m == 0 {
            return Err(ModelError::Dimension {
                what: "diffusion columns",
                expected: 1,
                found: 0,
            });
        }
        for row in &diffusion {
            if row.len() != m {
                return Err(ModelError::Dimension {
                    what: "diffusion columns",
                    expected: m,
                    found: row.len(),
                });
            }
        }
        if x0.len() != n {
            return Err(ModelError::Dimension {
                what: "x0",
                expected: n,
                found: x0.len(),
            });
        }
        if let Some(k) = x0.iter().position(|v| !v.is_finite()) {
            return Err(ModelError::NonFiniteState(k + 1));
        }
        let declared = |e: &Expr| e.max_symbol().is_none_or(|s| s <= n);
        for (k, e) in drift.iter().enumerate() {
            if !declared(e) {
                return Err(ModelError::UndeclaredSymbol(format!(
                    "drift component {}",
                    k + 1
                )));
            }
        }
        for (r, row) in diffusion.iter().enumerate() {
            for (c, e) in row.iter().enumerate() {
                if !declared(e) {
                    return Err(ModelError::UndeclaredSymbol(format!(
                        "diffusion entry ({}, {})",
                        r + 1,
                        c + 1
                    )));
                }
            }
        }
        let half_bbt = (0..n)
            .map(|l| {
                (0..n)
                    .map(|i| {
                        let s = (0..m).fold(Expr::zero(), |acc, j| {
                            build::add(
                                acc,
                                build::mul(diffusion[l][j].clone(), diffusion[i][j].clone()),
                            )
                        });
                        build::mul(Expr::constant(0.5), s)
                    })
                    .collect()
            })
            .collect();
        Ok(Self {
            symbols,
            n,
            m,
            drift,
            diffusion,
            x0,
            half_bbt,
        })
    }

    /// Parses drift and diffusion formulas over `x1..xn, t`.
    pub fn parse(
        drift: &[&str],
        diffusion: &[Vec<&str>],
        x0: Vec<f64>,
    ) -> Result<Self, ModelError> {
        let symbols = SymbolTable::new(drift.len());
        let p = |what: String, s: &str| {
            parse(s, &symbols)
                .map(|e| simplify(&e))
                .map_err(|source| ModelError::Expression { what, source })
        };
        let a = drift
            .iter()
            .enumerate()
            .map(|(k, s)| p(format!("drift component {}", k + 1), s))
            .collect::<Result<Vec<_>, _>>()?;
        let b = diffusion
            .iter()
            .enumerate()
            .map(|(r, row)| {
                row.iter()
                    .enumerate()
                    .map(|(c, s)| p(format!("diffusion entry ({}, {})", r + 1, c + 1), s))
                    .collect::<Result<Vec<_>, _>>()
            })
            .collect::<Result<Vec<_>, _>>()?;
        Self::new(a, b, x0)
    }

    /// The `i`-th diffusion column (0-based).
    pub fn column(&self, i: usize) -> Vec<Expr> {
        self.diffusion.iter().map(|row| row[i].clone()).collect()
    }

    /// The identity map `x ↦ x`.
    pub fn identity(&self) -> Vec<Expr> {
        (0..self.n)
            .map(|k| Expr::var(self.symbols.state(k)))
            .collect()
    }

    /// Whether `B` does not depend on the state.
    pub fn has_additive_noise(&self) -> bool {
        self.diffusion
            .iter()
            .flatten()
            .all(|e| (0..self.n).all(|k| differentiate(e, self.symbols.state(k)).is_zero()))
    }
}

fn check_noise(model: &SdeModel, i: usize) -> Result<(), ModelError> {
    if i >= model.m {
        Err(ModelError::NoiseIndex {
            index: i + 1,
            m: model.m,
        })
    } else {
        Ok(())
    }
}

fn first_order(model: &SdeModel, coeffs: &[Expr], with_time: bool, f: &Expr) -> Expr {
    let mut acc = if with_time {
        differentiate(f, model.symbols.time())
    } else {
        Expr::zero()
    };
    for (k, c) in coeffs.iter().enumerate() {
        if c.is_zero() {
            continue;
        }
        let d = differentiate(f, model.symbols.state(k));
        acc = build::add(acc, build::mul(c.clone(), d));
    }
    acc
}

/// `L f`, componentwise.
pub fn apply_l(model: &SdeModel, f: &[Expr]) -> Vec<Expr> {
    let n = model.n;
    f.iter()
        .map(|fk| {
            let mut acc = first_order(model, &model.drift, true, fk);
            let grad: Vec<Expr> = (0..n)
                .map(|l| differentiate(fk, model.symbols.state(l)))
                .collect();
            for l in 0..n {
                if grad[l].is_zero() {
                    continue;
                }
                for i in 0..n {
                    let h = &model.half_bbt[l][i];
                    if h.is_zero() {
                        continue;
                    }
                    let d2 = differentiate(&grad[l], model.symbols.state(i));
                    acc = build::add(acc, build::mul(h.clone(), d2));
                }
            }
            acc
        })
        .collect()
}

/// `G0^(i) f` for a 0-based noise index `i`.
pub fn apply_g0(model: &SdeModel, i: usize, f: &[Expr]) -> Result<Vec<Expr>, ModelError> {
    check_noise(model, i)?;
    let col = model.column(i);
    Ok(f.iter()
        .map(|fk| first_order(model, &col, false, fk))
        .collect())
}

/// `G_p^(i) f` from the recursion `G_p = (G_{p−1} L − L G_{p−1}) / p`.
pub fn apply_gp(model: &SdeModel, p: usize, i: usize, f: &[Expr]) -> Result<Vec<Expr>, ModelError> {
    if p == 0 {
        return apply_g0(model, i, f);
    }
    let a = apply_gp(model, p - 1, i, &apply_l(model, f))?;
    let b = apply_l(model, &apply_gp(model, p - 1, i, f)?);
    let scale = Expr::constant(1.0 / p as f64);
    Ok(a.into_iter()
        .zip(b)
        .map(|(x, y)| build::mul(scale.clone(), build::sub(x, y)))
        .collect())
}

/// The corrected drift `a − ½ Σ_j G0^(j) B_j`.
pub fn a_bar(model: &SdeModel) -> Vec<Expr> {
    let mut out = model.drift.clone();
    for j in 0..model.m {
        let g = apply_g0(model, j, &model.column(j)).expect("index in range");
        for (o, gk) in out.iter_mut().zip(g) {
            *o = build::sub(o.clone(), build::mul(Expr::constant(0.5), gk));
        }
    }
    out
}

/// `Lbar f` in the reduced first-order form `∂f/∂t + Σ abar_i ∂f/∂x_i`.
pub fn apply_lbar(model: &SdeModel, f: &[Expr]) -> Vec<Expr> {
    apply_lbar_with(model, &a_bar(model), f)
}

/// [`apply_lbar`] with a precomputed corrected drift.
pub fn apply_lbar_with(model: &SdeModel, abar: &[Expr], f: &[Expr]) -> Vec<Expr> {
    f.iter()
        .map(|fk| first_order(model, abar, true, fk))
        .collect()
}

/// `Lbar f` as `L f − ½ Σ_i G0^(i) G0^(i) f`.
pub fn apply_lbar_expanded(model: &SdeModel, f: &[Expr]) -> Vec<Expr> {
    let mut out = apply_l(model, f);
    for i in 0..model.m {
        let g = apply_g0(model, i, f).expect("index in range");
        let gg = apply_g0(model, i, &g).expect("index in range");
        for (o, x) in out.iter_mut().zip(gg) {
            *o = build::sub(o.clone(), build::mul(Expr::constant(0.5), x));
        }
    }
    out
}
